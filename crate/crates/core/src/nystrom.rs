//! Nyström extension of eigenvectors of the symmetric normalized kernel.
//!
//! For an eigenpair `(λ_l, φ_l)` of `K̃ = D^(−1/2) K D^(−1/2)` the extension
//! to a new point `x` is
//!
//! ```text
//! φ_l(x) = (1/λ_l) Σ_j k̃(x, x⁽ʲ⁾) φ_l(x⁽ʲ⁾),   k̃(x, x⁽ʲ⁾) = k(x, x⁽ʲ⁾) / √(d(x) d_j)
//! ```
//!
//! with `d(x) = Σ_i k(x, x⁽ⁱ⁾)`. When `K` is nonsingular this equals
//! `(1/√d(x)) · k(x,·)ᵀ K⁻¹ (D^(1/2) φ_l)`: a plain RBF interpolant of the
//! rescaled eigenvector `D^(1/2) φ_l`, post-scaled by `1/√d(x)`.
//! [`nystrom_extend`] and [`nystrom_via_rbf`] compute the two sides.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::eigenmaps_from_kernel;
use crate::kernels::{sparsify, symmetric_kernel_matrix, KernelSpec, Sparsify};
use crate::preimage::{fit_rbf_with, FitOptions, Tail};
use crate::{Embedding, Error, PointCloud, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionPath {
    NystromDirect,
    RbfForm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtensionResult<T> {
    /// Extended eigenvector value `φ_l(x)`.
    pub value: T,
    /// `d(x)`.
    pub degree_at_query: T,
    pub path: ExtensionPath,
}

fn eigenvalue<T: Real>(emb: &Embedding<T>, l: usize) -> Result<T> {
    let lam = *emb.eigvals.get(l).ok_or_else(|| {
        Error::InvalidParameter(format!("eigen index {l} out of range (have {})", emb.eigvals.len()))
    })?;
    if lam == T::zero() {
        return Err(Error::ZeroEigenvalue(l));
    }
    Ok(lam)
}

fn check_training<T: Real>(emb: &Embedding<T>, cloud: &PointCloud<T>) -> Result<()> {
    if emb.degrees.len() != cloud.n() {
        return Err(Error::InvalidDimensions(format!(
            "embedding has {} samples, cloud has {}",
            emb.degrees.len(),
            cloud.n()
        )));
    }
    Ok(())
}

/// Applies the extension formula to a precomputed `k(x, ·)`.
fn extend_from_column<T: Real>(emb: &Embedding<T>, kx: &[T], l: usize) -> Result<ExtensionResult<T>> {
    let lam = eigenvalue(emb, l)?;
    let dx = kx.iter().fold(T::zero(), |a, &b| a + b);
    if !(dx > T::zero()) {
        return Err(Error::ZeroQueryDegree);
    }
    let phi = emb.eigvecs.column(l);
    let sum = kx
        .iter()
        .zip(&emb.degrees)
        .zip(phi.iter())
        .fold(T::zero(), |acc, ((&k, &dj), &p)| acc + k / (dx * dj).sqrt() * p);
    Ok(ExtensionResult { value: sum / lam, degree_at_query: dx, path: ExtensionPath::NystromDirect })
}

pub fn nystrom_extend<T: Real>(
    emb: &Embedding<T>,
    cloud: &PointCloud<T>,
    spec: &KernelSpec<T>,
    query: &[T],
    l: usize,
) -> Result<ExtensionResult<T>> {
    check_training(emb, cloud)?;
    cloud.check_dim(query.len())?;
    if emb.degrees.iter().any(|d| !(*d > T::zero())) {
        return Err(Error::InvalidParameter("embedding has non-positive degrees".into()));
    }
    extend_from_column(emb, &spec.column(cloud, query), l)
}

/// Nyström values through a pure-kernel RBF fit of `D^(1/2) φ_l`.
pub fn nystrom_via_rbf<T: Real>(
    emb: &Embedding<T>,
    cloud: &PointCloud<T>,
    spec: &KernelSpec<T>,
    query: &[T],
    l: usize,
) -> Result<ExtensionResult<T>> {
    RbfNystrom::new(emb, cloud, spec, l)?.extend(query)
}

/// The rescaled RBF interpolant behind [`nystrom_via_rbf`], fitted once for
/// repeated queries.
pub struct RbfNystrom<T: Real> {
    model: crate::RbfModel<T>,
}

impl<T: Real> RbfNystrom<T> {
    pub fn new(emb: &Embedding<T>, cloud: &PointCloud<T>, spec: &KernelSpec<T>, l: usize) -> Result<Self> {
        check_training(emb, cloud)?;
        eigenvalue(emb, l)?;
        let phi = emb.eigvecs.column(l);
        let rescaled: Vec<T> = emb.degrees.iter().zip(phi.iter()).map(|(d, &p)| d.sqrt() * p).collect();
        let values = PointCloud::new(cloud.n(), 1, rescaled)?;
        let model = fit_rbf_with(cloud, &values, *spec, Tail::None, FitOptions { condition: false })?;
        Ok(Self { model })
    }

    pub fn extend(&self, query: &[T]) -> Result<ExtensionResult<T>> {
        let nodes = &self.model.nodes;
        nodes.check_dim(query.len())?;
        let dx = nodes.rows().fold(T::zero(), |a, p| a + self.model.spec.between(query, p));
        if !(dx > T::zero()) {
            return Err(Error::ZeroQueryDegree);
        }
        let v = self.model.eval(query)?[0];
        Ok(ExtensionResult { value: v / dx.sqrt(), degree_at_query: dx, path: ExtensionPath::RbfForm })
    }
}

/// Extension values along a segment, with and without sparsification.
#[derive(Clone, Debug)]
pub struct ScanProfile<T> {
    /// Segment parameter of each step, `0 ..= 1`.
    pub t: Vec<T>,
    pub full: Vec<Option<T>>,
    /// `None` where the sparsified query degree vanished.
    pub sparse: Vec<Option<T>>,
    pub max_jump_full: T,
    pub max_jump_sparse: T,
    /// Steps whose sparsified extension failed (zero degree).
    pub failures: Vec<usize>,
    /// Set for k-nearest-neighbour sparsification, whose query-side
    /// extension is not well defined.
    pub diagnostic_only: bool,
}

/// Largest `|v_{i+1} − v_i|` over consecutive defined values.
pub fn max_jump<T: Real>(values: &[Option<T>]) -> T {
    values
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some((b - a).abs()),
            _ => None,
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// Scans `φ_l` along `segment` in `steps` equispaced queries.
///
/// The sparsified profile uses an embedding of the sparsified training
/// matrix and applies the same rule to the query-side vector `k(x, ·)`;
/// the full profile uses `emb` and the untouched kernel.
pub fn discontinuity_scan<T: Real>(
    emb: &Embedding<T>,
    cloud: &PointCloud<T>,
    spec: &KernelSpec<T>,
    mode: Sparsify<T>,
    l: usize,
    segment: (&[T], &[T]),
    steps: usize,
) -> Result<ScanProfile<T>> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 steps, got {steps}")));
    }
    check_training(emb, cloud)?;
    cloud.check_dim(segment.0.len())?;
    cloud.check_dim(segment.1.len())?;
    eigenvalue(emb, l)?;

    let k = symmetric_kernel_matrix(spec, cloud);
    let sparse_emb = eigenmaps_from_kernel(&sparsify(&k, mode)?, spec, emb.coords.dim())?;

    let (a, b) = segment;
    let last = T::lit((steps - 1) as f64);
    let mut profile = ScanProfile {
        t: Vec::with_capacity(steps),
        full: Vec::with_capacity(steps),
        sparse: Vec::with_capacity(steps),
        max_jump_full: T::zero(),
        max_jump_sparse: T::zero(),
        failures: Vec::new(),
        diagnostic_only: matches!(mode, Sparsify::Knn { .. }),
    };
    for i in 0..steps {
        let t = T::lit(i as f64) / last;
        let q: Vec<T> = a.iter().zip(b).map(|(&p, &r)| p + (r - p) * t).collect();
        let mut kx = spec.column(cloud, &q);
        let full = extend_from_column(emb, &kx, l).ok().map(|r| r.value);
        mode.apply_to_vector(&mut kx);
        let sparse = match extend_from_column(&sparse_emb, &kx, l) {
            Ok(r) => Some(r.value),
            Err(Error::ZeroQueryDegree) => {
                profile.failures.push(i);
                None
            }
            Err(e) => return Err(e),
        };
        profile.t.push(t);
        profile.full.push(full);
        profile.sparse.push(sparse);
    }
    profile.max_jump_full = max_jump(&profile.full);
    profile.max_jump_sparse = max_jump(&profile.sparse);
    if !profile.failures.is_empty() {
        log::warn!("discontinuity scan: {} steps with zero sparsified degree", profile.failures.len());
    }
    Ok(profile)
}

impl<T: Real> ScanProfile<T> {
    /// CSV with columns `step,t,value_full,value_sparse`; undefined values
    /// are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        wtr.write_record(["step", "t", "value_full", "value_sparse"]).map_err(err)?;
        let cell = |v: Option<T>| v.map(|x| x.as_f64().to_string()).unwrap_or_default();
        for i in 0..self.t.len() {
            wtr.write_record([
                i.to_string(),
                self.t[i].as_f64().to_string(),
                cell(self.full[i]),
                cell(self.sparse[i]),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::default_affinity_scale;
    use crate::laplacian_eigenmaps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize, seed: u64) -> PointCloud<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(n, 2, (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn setup(n: usize, seed: u64, mult: f64) -> (PointCloud<f64>, KernelSpec<f64>, Embedding<f64>) {
        let c = plane(n, seed);
        let spec = KernelSpec::gaussian(mult * default_affinity_scale(&c).unwrap()).unwrap();
        let emb = laplacian_eigenmaps(&c, &spec, 3).unwrap();
        (c, spec, emb)
    }

    #[test]
    fn extension_reproduces_training_entries() {
        let (c, spec, emb) = setup(40, 1, 0.5);
        for l in 0..4 {
            for i in [0, 17, 39] {
                let r = nystrom_extend(&emb, &c, &spec, c.row(i), l).unwrap();
                assert!((r.value - emb.eigvecs[(i, l)]).abs() < 1e-8);
                assert_eq!(r.path, ExtensionPath::NystromDirect);
            }
        }
    }

    #[test]
    fn two_point_midpoint_closed_form() {
        let c = PointCloud::new(2, 1, vec![0.0, 1.0]).unwrap();
        let eps: f64 = 0.8;
        let spec = KernelSpec::gaussian(eps).unwrap();
        let emb = laplacian_eigenmaps(&c, &spec, 1).unwrap();
        // k(mid, ·) = (e, e) with e = exp(−ε²/4); degrees 1 + b with b = exp(−ε²).
        let e = (-(eps * eps) / 4.0).exp();
        let b = (-(eps * eps)).exp();
        let lam1 = (1.0 - b) / (1.0 + b);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kt = e / (2.0 * e * (1.0 + b)).sqrt();
        let expect = (kt * s + kt * -s) / lam1;
        let got = nystrom_extend(&emb, &c, &spec, &[0.5], 1).unwrap().value;
        assert!((got - expect).abs() < 1e-14);
        let top = nystrom_extend(&emb, &c, &spec, &[0.5], 0).unwrap().value;
        assert!((top - 2.0 * kt * s).abs() < 1e-14);
    }

    #[test]
    fn trivial_eigenvector_stays_positive() {
        let (c, spec, emb) = setup(30, 4, 0.7);
        for q in [[0.5, 0.5], [1.3, -0.2], [0.0, 2.0]] {
            assert!(nystrom_extend(&emb, &c, &spec, &q, 0).unwrap().value > 0.0);
        }
    }

    #[test]
    fn rbf_form_agrees() {
        let (c, spec, emb) = setup(50, 2, 0.5);
        let fit = RbfNystrom::new(&emb, &c, &spec, 2).unwrap();
        for q in [[0.25, 0.75], [0.5, 0.5], [0.9, 0.1]] {
            let a = nystrom_extend(&emb, &c, &spec, &q, 2).unwrap();
            let b = fit.extend(&q).unwrap();
            assert!((a.value - b.value).abs() <= 1e-8 * a.value.abs().max(1e-3), "{} vs {}", a.value, b.value);
            assert_eq!(a.degree_at_query, b.degree_at_query);
        }
        let r = nystrom_via_rbf(&emb, &c, &spec, c.row(7), 1).unwrap();
        assert!((r.value - emb.eigvecs[(7, 1)]).abs() < 1e-8);
        assert_eq!(r.path, ExtensionPath::RbfForm);
    }

    #[test]
    fn error_paths() {
        let (c, spec, mut emb) = setup(10, 3, 1.0);
        assert!(nystrom_extend(&emb, &c, &spec, &[0.5, 0.5], 9).is_err());
        let far = [1e6, 1e6];
        assert!(matches!(nystrom_extend(&emb, &c, &spec, &far, 1), Err(Error::ZeroQueryDegree)));
        emb.eigvals[1] = 0.0;
        assert!(matches!(nystrom_extend(&emb, &c, &spec, &[0.5, 0.5], 1), Err(Error::ZeroEigenvalue(1))));
    }

    #[test]
    fn scan_without_sparsification_matches_full() {
        let (c, spec, emb) = setup(40, 5, 0.5);
        let p = discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.0 }, 1, (&[0.0, 0.0], &[1.0, 1.0]), 50).unwrap();
        assert_eq!(p.full, p.sparse);
        assert_eq!(p.max_jump_full, p.max_jump_sparse);
        assert!(p.failures.is_empty());
    }

    #[test]
    fn two_step_scan() {
        let (c, spec, emb) = setup(20, 6, 0.5);
        let p = discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.0 }, 1, (&[0.1, 0.2], &[0.8, 0.7]), 2).unwrap();
        assert_eq!(p.full.len(), 2);
        assert_eq!(p.max_jump_full, (p.full[1].unwrap() - p.full[0].unwrap()).abs());
        assert!(discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.0 }, 1, (&[0.0, 0.0], &[1.0, 1.0]), 1).is_err());
    }

    #[test]
    fn thresholding_creates_jumps() {
        let (c, spec, emb) = setup(150, 7, 0.5);
        let seg: (&[f64], &[f64]) = (&[0.05, 0.1], &[0.95, 0.9]);
        let p = discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.3 }, 1, seg, 1000).unwrap();
        assert!(p.max_jump_sparse >= 10.0 * p.max_jump_full, "{} vs {}", p.max_jump_sparse, p.max_jump_full);
        let q = discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.3 }, 1, seg, 2000).unwrap();
        assert!(p.max_jump_full >= 1.5 * q.max_jump_full);
    }

    #[test]
    fn knn_scan_is_diagnostic() {
        let (c, spec, emb) = setup(40, 8, 0.5);
        let p = discontinuity_scan(&emb, &c, &spec, Sparsify::Knn { k: 5 }, 1, (&[0.0, 0.0], &[1.0, 1.0]), 20).unwrap();
        assert!(p.diagnostic_only);
        assert_eq!(p.sparse.len(), 20);
    }

    #[test]
    fn csv_schema() {
        let (c, spec, emb) = setup(20, 9, 0.5);
        let p = discontinuity_scan(&emb, &c, &spec, Sparsify::Threshold { tau: 0.5 }, 1, (&[0.0, 0.0], &[5.0, 5.0]), 5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,t,value_full,value_sparse");
        assert_eq!(lines.count(), 5);
        assert!(!p.failures.is_empty());
    }
}
