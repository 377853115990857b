//! Point-cloud files.
//!
//! * CSV: one point per line, comma-separated decimal literals. Lines
//!   starting with `#` are comments (typically a single header line).
//! * Binary: the magic `PCLD`, then `n` and `dim` as little-endian `u64`,
//!   then `n·dim` little-endian `f64` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, PointCloud, Real, Result};

pub const MAGIC: &[u8; 4] = b"PCLD";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.csv` (any case) is CSV, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

pub fn load_cloud<T: Real>(path: impl AsRef<Path>, format: Format) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        Format::Csv => read_csv(reader, None),
        Format::Binary => read_binary(reader).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        }),
    }
}

pub fn save_cloud<T: Real>(cloud: &PointCloud<T>, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(cloud, &mut w),
        Format::Binary => write_binary(cloud, &mut w),
    }
    .and_then(|_| w.flush().map_err(|e| Error::io(path, e)))
}

/// Parses CSV points. With `expected_dim` every row must have exactly that
/// many fields, otherwise the first row sets the arity.
pub fn read_csv<T: Real, R: Read>(reader: R, expected_dim: Option<usize>) -> Result<PointCloud<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut dim = expected_dim;
    let mut data = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(n + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = *dim.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedTable { line, found: rec.len(), expected });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                line,
                msg: format!("non-numeric field {field:?}"),
            })?;
            data.push(T::lit(v));
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPoints);
    }
    PointCloud::new(n, dim.unwrap_or(0), data)
}

pub fn write_csv<T: Real, W: Write>(cloud: &PointCloud<T>, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let to_io = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
    for row in cloud.rows() {
        // `{}` on f64 prints the shortest string that parses back exactly.
        wtr.write_record(row.iter().map(|v| format!("{}", v.as_f64()))).map_err(to_io)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_binary<T: Real, R: Read>(mut r: R) -> Result<PointCloud<T>> {
    let io = |e| Error::io("<binary>", e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::NoPoints
        } else {
            io(e)
        }
    })?;
    if &magic != MAGIC {
        return Err(Error::Malformed { line: 0, msg: "bad magic, expected PCLD".into() });
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(io)?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(io)?;
    let dim = u64::from_le_bytes(word) as usize;
    if n == 0 {
        return Err(Error::NoPoints);
    }
    let len = n.checked_mul(dim).ok_or_else(|| Error::Malformed {
        line: 0,
        msg: format!("header {n}x{dim} overflows"),
    })?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        r.read_exact(&mut word).map_err(io)?;
        data.push(T::lit(f64::from_le_bytes(word)));
    }
    PointCloud::new(n, dim, data)
}

pub fn write_binary<T: Real, W: Write>(cloud: &PointCloud<T>, mut w: W) -> Result<()> {
    let io = |e| Error::io("<binary>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(cloud.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(cloud.dim() as u64).to_le_bytes()).map_err(io)?;
    for v in cloud.as_slice() {
        w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub(crate) fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// `<stem>.<suffix>` next to `base`.
pub(crate) fn sibling(base: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = base.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample_sphere;
    use proptest::prelude::*;

    #[test]
    fn binary_round_trip_is_bitwise() {
        let c = PointCloud::from_rows(&[[0.1, -2.5], [1e-300, 3.0], [f64::MAX, 0.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pcld");
        save_cloud(&c, &p, Format::Binary).unwrap();
        let back: PointCloud<f64> = load_cloud(&p, Format::Binary).unwrap();
        assert_eq!(c, back);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"PCLD");
        assert_eq!(bytes.len(), 4 + 16 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
    }

    #[test]
    fn csv_header_and_comments_are_skipped() {
        let text = "# x,y\n1.0,2.0\n\n3.5, -4\n";
        let c: PointCloud<f64> = read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(c.n(), 2);
        assert_eq!(c.row(1), &[3.5, -4.0]);
    }

    #[test]
    fn csv_arity_violation_is_ragged() {
        let err = read_csv::<f64, _>("1.0,2.0\n".as_bytes(), Some(3)).unwrap_err();
        assert!(matches!(err, Error::RaggedTable { found: 2, expected: 3, .. }));
        assert!(err.to_string().contains("ragged table"));
        let err = read_csv::<f64, _>("1,2\n3\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::RaggedTable { line: 2, .. }));
    }

    #[test]
    fn csv_non_numeric_field() {
        let err = read_csv::<f64, _>("1,abc\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
    }

    #[test]
    fn empty_inputs_have_no_points() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty");
        std::fs::write(&p, b"").unwrap();
        for f in [Format::Csv, Format::Binary] {
            let err = load_cloud::<f64>(&p, f).unwrap_err();
            assert!(err.to_string().contains("no points"), "{f:?}: {err}");
        }
        assert!(matches!(read_csv::<f64, _>("# only a header\n".as_bytes(), None), Err(Error::NoPoints)));
    }

    #[test]
    fn bad_magic() {
        let err = read_binary::<f64, _>(&b"NOPE\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Malformed { .. }));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a/b.CSV")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a/b.pcld")), Format::Binary);
    }

    proptest! {
        #[test]
        fn csv_round_trip(seed in 0u64..1000, n in 1usize..20, k in 1usize..6) {
            let c: PointCloud<f64> = sample_sphere(n, k, false, seed).unwrap();
            let c = c.map(|v| v * 1e3 - 0.25).unwrap();
            let mut buf = Vec::new();
            write_csv(&c, &mut buf).unwrap();
            let back: PointCloud<f64> = read_csv(buf.as_slice(), None).unwrap();
            prop_assert_eq!(back.n(), c.n());
            for (a, b) in c.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs());
            }
        }
    }
}
