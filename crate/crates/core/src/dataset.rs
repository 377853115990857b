//! Point clouds, synthetic manifold samples and node-spacing statistics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::dist;
use crate::{Error, Real, Result};

/// `n` points in `R^dim`, stored row-major. Row `i` is the point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    data: Vec<T>,
    n: usize,
    dim: usize,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud from row-major `data`. Rejects empty clouds and
    /// non-finite coordinates.
    pub fn new(n: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoPoints);
        }
        if dim == 0 {
            return Err(Error::InvalidDimensions("dimension must be at least 1".into()));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidDimensions(format!(
                "{} values cannot form a {n}x{dim} cloud",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / dim, col: k % dim });
        }
        Ok(Self { data, n, dim })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::NoPoints)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (line, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::RaggedTable { line: line + 1, found: r.len(), expected: dim });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn from_matrix(m: &DMatrix<T>) -> Result<Self> {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter().copied());
        }
        Self::new(n, dim, data)
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.n, self.dim, &self.data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// The sub-cloud made of rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.dim, data)
    }

    /// Every row except `skip`.
    pub fn without(&self, skip: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..self.n).filter(|&i| i != skip).collect();
        self.select(&idx)
    }

    /// Applies `f` to every coordinate.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.n, self.dim, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: dim });
        }
        Ok(())
    }
}

/// Worst-case and typical node spacing of a node set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingStats<T> {
    pub fill_distance: T,
    pub local_fill_distance: T,
}

impl<T: Real> SpacingStats<T> {
    /// Fill distance is measured over `nodes ∪ domain_samples`.
    pub fn compute(nodes: &PointCloud<T>, domain_samples: &PointCloud<T>) -> Result<Self> {
        let h_local = local_fill_distance(nodes)?;
        let h_fill = fill_distance(nodes, domain_samples)?;
        Ok(Self { fill_distance: h_fill, local_fill_distance: h_local })
    }
}

/// Uniform samples on the unit sphere `S^sphere_dim ⊂ R^(sphere_dim+1)`.
///
/// Normalized standard Gaussian vectors; with `quadrant_only` every
/// coordinate is replaced by its absolute value, which keeps the law uniform
/// on the positive orthant of the sphere.
pub fn sample_sphere<T: Real>(
    n: usize,
    sphere_dim: usize,
    quadrant_only: bool,
    seed: u64,
) -> Result<PointCloud<T>> {
    if n == 0 {
        return Err(Error::InvalidDimensions("need at least one sample".into()));
    }
    if sphere_dim == 0 {
        return Err(Error::InvalidDimensions("sphere dimension must be at least 1".into()));
    }
    let ambient = sphere_dim + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * ambient);
    let mut v = vec![0.0f64; ambient];
    for _ in 0..n {
        let norm = loop {
            v.iter_mut().for_each(|c| *c = rng.sample(StandardNormal));
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        data.extend(v.iter().map(|&c| {
            let c = c / norm;
            T::lit(if quadrant_only { c.abs() } else { c })
        }));
    }
    PointCloud::new(n, ambient, data)
}

/// Haar-distributed orthogonal `size × size` matrix: QR of a Gaussian matrix
/// with the signs of `diag(R)` folded into `Q`.
pub fn haar_orthogonal<T: Real>(size: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<T>::from_fn(size, size, |_, _| T::lit(rng.sample(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..size {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Lifts `cloud` isometrically into `R^target_dim`: rows are multiplied by the
/// first `cloud.dim()` rows of a seeded Haar orthogonal matrix.
pub fn random_unitary_embed<T: Real>(
    cloud: &PointCloud<T>,
    target_dim: usize,
    seed: u64,
) -> Result<PointCloud<T>> {
    if target_dim < cloud.dim() {
        return Err(Error::InvalidDimensions(format!(
            "target dimension {target_dim} is below cloud dimension {}",
            cloud.dim()
        )));
    }
    let q = haar_orthogonal::<T>(target_dim, seed);
    let basis = q.rows(0, cloud.dim());
    let lifted = cloud.to_matrix() * basis;
    PointCloud::from_matrix(&lifted)
}

fn nearest_other<T: Real>(nodes: &PointCloud<T>, i: usize) -> T {
    let p = nodes.row(i);
    (0..nodes.n())
        .filter(|&j| j != i)
        .map(|j| dist(p, nodes.row(j)))
        .fold(T::infinity(), |a, b| a.min(b))
}

/// Mean distance from each node to its nearest other node.
pub fn local_fill_distance<T: Real>(nodes: &PointCloud<T>) -> Result<T> {
    let n = nodes.n();
    if n < 2 {
        return Err(Error::InvalidDimensions("local fill distance needs at least 2 nodes".into()));
    }
    let minima: Vec<T> = (0..n).into_par_iter().map(|i| nearest_other(nodes, i)).collect();
    if minima.iter().any(|m| *m == T::zero()) {
        log::warn!("local fill distance: duplicate nodes present");
    }
    let sum = minima.into_iter().fold(T::zero(), |a, b| a + b);
    Ok(sum / T::lit(n as f64))
}

/// Largest distance from a domain sample to its nearest node.
pub fn fill_distance<T: Real>(nodes: &PointCloud<T>, domain_samples: &PointCloud<T>) -> Result<T> {
    nodes.check_dim(domain_samples.dim())?;
    let worst = (0..domain_samples.n())
        .into_par_iter()
        .map(|s| {
            let z = domain_samples.row(s);
            nodes.rows().map(|p| dist(z, p)).fold(T::infinity(), |a, b| a.min(b))
        })
        .reduce(T::zero, |a, b| a.max(b));
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(xs: &[f64]) -> PointCloud<f64> {
        PointCloud::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn single_sample_on_s4_has_unit_norm() {
        let c: PointCloud<f64> = sample_sphere(1, 4, false, 7).unwrap();
        assert_eq!(c.dim(), 5);
        let norm: f64 = c.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_samples_are_centred() {
        let c: PointCloud<f64> = sample_sphere(1000, 1, false, 3).unwrap();
        for k in 0..2 {
            let mean = c.rows().map(|r| r[k]).sum::<f64>() / 1000.0;
            assert!(mean.abs() < 5.0 / 1000f64.sqrt(), "coordinate {k} mean {mean}");
        }
    }

    #[test]
    fn quadrant_samples_are_nonnegative() {
        let c: PointCloud<f64> = sample_sphere(10, 4, true, 11).unwrap();
        assert_eq!(c.as_slice().len(), 50);
        assert!(c.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a: PointCloud<f64> = sample_sphere(20, 3, false, 5).unwrap();
        let b: PointCloud<f64> = sample_sphere(20, 3, false, 5).unwrap();
        let c: PointCloud<f64> = sample_sphere(20, 3, false, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_sphere_rejects_bad_dimensions() {
        assert!(sample_sphere::<f64>(0, 2, false, 0).is_err());
        assert!(sample_sphere::<f64>(3, 0, false, 0).is_err());
    }

    fn gram(c: &PointCloud<f64>) -> DMatrix<f64> {
        let m = c.to_matrix();
        &m * m.transpose()
    }

    #[test]
    fn unitary_embed_same_dimension_is_isometry() {
        let c: PointCloud<f64> = sample_sphere(12, 2, false, 1).unwrap();
        let e = random_unitary_embed(&c, 3, 9).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((dist(c.row(i), c.row(j)) - dist(e.row(i), e.row(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_embed_preserves_norms_and_gram() {
        let c: PointCloud<f64> = sample_sphere(30, 4, false, 2).unwrap();
        let e = random_unitary_embed(&c, 10, 4).unwrap();
        assert_eq!(e.dim(), 10);
        for r in e.rows() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let diff = (gram(&c) - gram(&e)).abs().max();
        assert!(diff < 1e-10, "gram mismatch {diff}");
    }

    #[test]
    fn unitary_embed_rejects_smaller_target() {
        let c: PointCloud<f64> = sample_sphere(3, 4, false, 2).unwrap();
        assert!(matches!(random_unitary_embed(&c, 4, 0), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn haar_matrix_is_orthogonal() {
        let q = haar_orthogonal::<f64>(6, 42);
        let err = (q.transpose() * &q - DMatrix::identity(6, 6)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn local_fill_examples() {
        assert_relative_eq!(local_fill_distance(&line(&[0.0, 1.0, 2.0])).unwrap(), 1.0);
        assert_relative_eq!(local_fill_distance(&line(&[0.0, 1.0, 3.0])).unwrap(), 4.0 / 3.0);
        assert_eq!(local_fill_distance(&line(&[0.5, 0.5])).unwrap(), 0.0);
        assert!(local_fill_distance(&line(&[0.5])).is_err());
    }

    #[test]
    fn fill_distance_examples() {
        assert_eq!(fill_distance(&line(&[0.0]), &line(&[0.0, 1.0, 2.0])).unwrap(), 2.0);
        let grid: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(fill_distance(&line(&[0.0, 10.0]), &line(&grid)).unwrap(), 5.0);
        let c: PointCloud<f64> = sample_sphere(25, 2, false, 8).unwrap();
        assert_eq!(fill_distance(&c, &c).unwrap(), 0.0);
        let planar = PointCloud::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            fill_distance(&c, &planar),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spacing_stats_ordering() {
        let nodes: PointCloud<f64> = sample_sphere(40, 2, false, 1).unwrap();
        let extra: PointCloud<f64> = sample_sphere(400, 2, false, 2).unwrap();
        let mut all = nodes.as_slice().to_vec();
        all.extend_from_slice(extra.as_slice());
        let domain = PointCloud::new(440, 3, all).unwrap();
        let s = SpacingStats::compute(&nodes, &domain).unwrap();
        assert!(s.local_fill_distance <= s.fill_distance);
    }

    #[test]
    fn cloud_construction_errors() {
        assert!(matches!(PointCloud::<f64>::new(0, 2, vec![]), Err(Error::NoPoints)));
        assert!(matches!(
            PointCloud::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            PointCloud::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::RaggedTable { line: 2, .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let c: PointCloud<f32> = sample_sphere(50, 3, false, 1).unwrap();
        let e = random_unitary_embed(&c, 8, 2).unwrap();
        for r in e.rows() {
            let norm = r.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
        assert!(local_fill_distance(&c).unwrap() > 0.0);
    }
}
