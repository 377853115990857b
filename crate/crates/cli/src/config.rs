use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Computation or I/O failure; exit code 1.
    Failed(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<rbf_preimage::Error> for CliError {
    fn from(e: rbf_preimage::Error) -> Self {
        CliError::Failed(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn invalid(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Usage(format!("invalid value for `{field}`: {msg}"))
}

pub fn required<T>(v: Option<T>, field: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("missing required option --{}", field.replace('_', "-"))))
}

pub fn read_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        // A manifest written by an earlier run: reuse its resolved options.
        Ok(Value::Object(mut m)) if m.get("tool") == Some(&Value::from("preimage")) => match m.remove("config") {
            Some(Value::Object(c)) => Ok(c),
            _ => Err(usage(format!("manifest {} has no config object", path.display()))),
        },
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage(format!("config {} must hold a JSON object", path.display()))),
        Err(e) => Err(usage(format!("invalid config {}: {e}", path.display()))),
    }
}

/// Overlays the flags given on the command line onto the config file values.
pub fn merge<A: Serialize + DeserializeOwned>(flags: A, config: Option<Map<String, Value>>) -> CliResult<A> {
    let Some(mut merged) = config else {
        return Ok(flags);
    };
    let Value::Object(given) = serde_json::to_value(&flags).map_err(|e| CliError::Failed(e.into()))? else {
        unreachable!("argument structs serialize to objects");
    };
    for (k, v) in given {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid config: {e}")))
}

/// Files written by the current command, removed again if it fails.
#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    /// Registers `path` as an output and returns it.
    pub fn file(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.files.push(path.clone());
        path
    }

    pub fn dir(&mut self, path: &Path) -> CliResult<()> {
        if !path.exists() {
            fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
            self.dirs.push(path.to_path_buf());
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect()
    }

    pub fn cleanup(&self) {
        for f in &self.files {
            if f.exists() {
                let _ = fs::remove_file(f);
            }
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// `<name>.<suffix>` next to `base`.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    base.with_file_name(name)
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).with_context(|| format!("writing {}", path.display()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Everything needed to rerun a command. `config` holds every option with
/// defaults filled in and can be passed back through `--config`; `derived`
/// records values computed from it (scales, seeds of later stages).
/// Contains no timestamps so reruns write identical bytes.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a C,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub derived: Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

pub fn write_manifest<C: Serialize>(
    path: PathBuf,
    outputs: &mut Outputs,
    command: &'static str,
    config: &C,
    derived: Value,
    seeds: Vec<u64>,
) -> CliResult<()> {
    let manifest = Manifest {
        tool: "preimage",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        derived,
        seeds,
        outputs: outputs.names(),
    };
    let path = outputs.file(path);
    write_json(&path, &manifest)
}
