//! Laplacian eigenmaps on the symmetric normalized kernel `K̃ = D^(−1/2) K D^(−1/2)`.
//!
//! The eigenvectors of `K̃` are those of the normalized graph Laplacian
//! `I − K̃`, with eigenvalues reflected (`λ ↦ 1 − λ`), so the "first
//! non-trivial eigenvectors of the Laplacian" are the eigenvectors of `K̃`
//! right after the top one.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::io::{load_cloud, read_json, save_cloud, sibling, write_json, Format};
use crate::kernels::{degree_vector, symmetric_kernel_matrix, KernelMatrix, KernelSpec};
use crate::linalg::numerical_rank;
use crate::{local_fill_distance, Error, PointCloud, Real, Result};

/// Output of the forward map.
///
/// `eigvecs` holds `φ_0 … φ_d` as unit-norm columns with eigenvalues
/// `eigvals[0] ≥ eigvals[1] ≥ …`; `coords` is `φ_1 … φ_d`, one row per
/// sample. Each eigenvector is signed so that its largest-magnitude entry
/// (first one on ties) is positive. With repeated eigenvalues the basis of
/// the eigenspace is whatever the solver returns, so the embedding is not
/// unique in that case.
#[derive(Clone, Debug)]
pub struct Embedding<T: Real> {
    pub coords: PointCloud<T>,
    pub eigvals: Vec<T>,
    pub eigvecs: DMatrix<T>,
    pub degrees: Vec<T>,
    pub spec: KernelSpec<T>,
}

/// Affinity scale used when the caller has no preference: `ε = 1 / h̄_local`.
pub fn default_affinity_scale<T: Real>(cloud: &PointCloud<T>) -> Result<T> {
    let h = local_fill_distance(cloud)?;
    if h <= T::zero() {
        return Err(Error::InvalidParameter("cloud has zero local fill distance".into()));
    }
    Ok(T::one() / h)
}

pub fn laplacian_eigenmaps<T: Real>(
    cloud: &PointCloud<T>,
    spec: &KernelSpec<T>,
    d: usize,
) -> Result<Embedding<T>> {
    if !matches!(spec, KernelSpec::Gaussian { .. }) {
        return Err(Error::InvalidKernel("eigenmaps need a positive (gaussian) affinity".into()));
    }
    spec.validate()?;
    check_target_dim(cloud.n(), d)?;
    let k = symmetric_kernel_matrix(spec, cloud);
    eigenmaps_from_kernel(&k, spec, d)
}

fn check_target_dim(n: usize, d: usize) -> Result<()> {
    if d == 0 || d > n.saturating_sub(1) {
        return Err(Error::InvalidDimensions(format!(
            "target dimension {d} must be in 1..={}",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `D^(−1/2) K D^(−1/2)`.
pub fn normalized_kernel<T: Real>(k: &KernelMatrix<T>, degrees: &[T]) -> DMatrix<T> {
    let inv_sqrt: Vec<T> = degrees.iter().map(|d| T::one() / d.sqrt()).collect();
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k.entries[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

/// Eigenmaps of an already assembled (possibly sparsified) affinity matrix.
pub fn eigenmaps_from_kernel<T: Real>(
    k: &KernelMatrix<T>,
    spec: &KernelSpec<T>,
    d: usize,
) -> Result<Embedding<T>> {
    let n = k.nrows();
    check_target_dim(n, d)?;
    let degrees = degree_vector(k)?;
    let kt = normalized_kernel(k, &degrees);
    let eig = SymmetricEigen::try_new(kt, T::machine_eps(), 0).ok_or(Error::EigenNonConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(d + 1);

    let eigvals: Vec<T> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let mut eigvecs = DMatrix::zeros(n, d + 1);
    for (l, &c) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(c).into_owned();
        let norm = v.norm();
        v /= norm;
        let pivot = v.iter().copied().enumerate().fold((0, T::zero()), |best, (i, x)| {
            if x.abs() > best.1 {
                (i, x.abs())
            } else {
                best
            }
        });
        if v[pivot.0] < T::zero() {
            v.neg_mut();
        }
        eigvecs.set_column(l, &v);
    }
    let coords = PointCloud::from_matrix(&eigvecs.columns(1, d).into_owned())?;
    Ok(Embedding { coords, eigvals, eigvecs, degrees, spec: *spec })
}

/// Numerical rank of `[1ᵀ; Yᵀ]`, the `(d+1) × n` matrix of ones stacked over
/// the node coordinates. Rank `d + 1` certifies 1-unisolvency.
pub fn unisolvency_rank<T: Real>(coords: &PointCloud<T>) -> usize {
    let (n, d) = (coords.n(), coords.dim());
    let p = DMatrix::from_fn(d + 1, n, |r, j| if r == 0 { T::one() } else { coords.row(j)[r - 1] });
    numerical_rank(&p, n)
}

pub fn embed_matrix_rank_check<T: Real>(emb: &Embedding<T>) -> usize {
    unisolvency_rank(&emb.coords)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingSidecar<T> {
    n: usize,
    d: usize,
    spec: KernelSpec<T>,
    eigvals: Vec<T>,
    degrees: Vec<T>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Embedding<T> {
    /// Writes `<path>.json`, `<path>.coords.pcld` and `<path>.eigvecs.pcld`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        save_cloud(&self.coords, sibling(path, "coords.pcld"), Format::Binary)?;
        let vecs = PointCloud::from_matrix(&self.eigvecs)?;
        save_cloud(&vecs, sibling(path, "eigvecs.pcld"), Format::Binary)?;
        let side = EmbeddingSidecar {
            n: self.coords.n(),
            d: self.coords.dim(),
            spec: self.spec,
            eigvals: self.eigvals.clone(),
            degrees: self.degrees.clone(),
        };
        write_json(&side, &sibling(path, "json"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side: EmbeddingSidecar<T> = read_json(&sibling(path, "json"))?;
        let coords: PointCloud<T> = load_cloud(sibling(path, "coords.pcld"), Format::Binary)?;
        let vecs: PointCloud<T> = load_cloud(sibling(path, "eigvecs.pcld"), Format::Binary)?;
        if coords.n() != side.n || coords.dim() != side.d || vecs.dim() != side.d + 1 || vecs.n() != side.n {
            return Err(Error::InvalidDimensions("embedding files disagree on shape".into()));
        }
        Ok(Self {
            coords,
            eigvals: side.eigvals,
            eigvecs: vecs.to_matrix(),
            degrees: side.degrees,
            spec: side.spec,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_matrix;
    use crate::{random_unitary_embed, sample_sphere};

    fn s4_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        let c = sample_sphere(n, 4, false, seed).unwrap();
        random_unitary_embed(&c, 10, seed + 1).unwrap()
    }

    fn check_eigen_invariants(cloud: &PointCloud<f64>, emb: &Embedding<f64>) {
        let k = kernel_matrix(&emb.spec, cloud, cloud).unwrap();
        let kt = normalized_kernel(&k, &emb.degrees);
        let gram = emb.eigvecs.transpose() * &emb.eigvecs;
        let ortho = (gram - DMatrix::identity(emb.eigvals.len(), emb.eigvals.len())).abs().max();
        assert!(ortho < 1e-10, "orthonormality {ortho:e}");
        for (l, &lam) in emb.eigvals.iter().enumerate() {
            let v = emb.eigvecs.column(l);
            let res = (&kt * v - v * lam).norm();
            assert!(res < 1e-8, "residual {res:e} for l = {l}");
        }
        assert!(emb.eigvals.windows(2).all(|w| w[0] >= w[1]));
        assert!((emb.eigvals[0] - 1.0).abs() < 1e-10);
        let phi0 = emb.eigvecs.column(0);
        assert!(phi0.iter().all(|&x| x > 0.0));
        for l in 0..emb.coords.dim() {
            for i in 0..cloud.n() {
                assert_eq!(emb.coords.row(i)[l], emb.eigvecs[(i, l + 1)]);
            }
        }
    }

    #[test]
    fn two_point_closed_form() {
        let c = PointCloud::new(2, 1, vec![0.0, 0.7]).unwrap();
        let emb = laplacian_eigenmaps(&c, &KernelSpec::gaussian(1.0).unwrap(), 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = (-0.49f64).exp();
        assert!((emb.eigvals[1] - (1.0 - b) / (1.0 + b)).abs() < 1e-14);
        assert!((emb.eigvecs[(0, 0)] - s).abs() < 1e-14 && (emb.eigvecs[(1, 0)] - s).abs() < 1e-14);
        assert!((emb.coords.row(0)[0] - s).abs() < 1e-14);
        assert!((emb.coords.row(1)[0] + s).abs() < 1e-14);
    }

    /// Power iteration on `K̃`, independent of the dense solver.
    fn power_top_eigenvalue(kt: &DMatrix<f64>) -> f64 {
        let n = kt.nrows();
        let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = kt * &v;
            lam = v.dot(&w);
            v = &w / w.norm();
        }
        lam
    }

    #[test]
    fn top_eigenvalue_is_one() {
        for seed in 0..3 {
            let c = s4_cloud(40, seed);
            let spec = KernelSpec::gaussian(default_affinity_scale(&c).unwrap()).unwrap();
            let emb = laplacian_eigenmaps(&c, &spec, 5).unwrap();
            let k = kernel_matrix(&spec, &c, &c).unwrap();
            let lam = power_top_eigenvalue(&normalized_kernel(&k, &emb.degrees));
            assert!((lam - 1.0).abs() < 1e-10, "power iteration {lam}");
            check_eigen_invariants(&c, &emb);
        }
    }

    #[test]
    fn target_dimension_bounds() {
        let c = s4_cloud(6, 1);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(laplacian_eigenmaps(&c, &spec, 6), Err(Error::InvalidDimensions(_))));
        assert!(matches!(laplacian_eigenmaps(&c, &spec, 0), Err(Error::InvalidDimensions(_))));
        assert!(laplacian_eigenmaps(&c, &spec, 5).is_ok());
        assert!(matches!(laplacian_eigenmaps(&c, &KernelSpec::cubic(), 2), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn deterministic() {
        let c = s4_cloud(50, 9);
        let spec = KernelSpec::gaussian(2.0).unwrap();
        let a = laplacian_eigenmaps(&c, &spec, 5).unwrap();
        let b = laplacian_eigenmaps(&c, &spec, 5).unwrap();
        assert_eq!(a.eigvecs, b.eigvecs);
    }

    #[test]
    fn rank_examples() {
        let line = PointCloud::new(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(unisolvency_rank(&line), 2);
        let flat = PointCloud::new(4, 2, vec![0.5; 8]).unwrap();
        assert_eq!(unisolvency_rank(&flat), 1);
        let c = s4_cloud(100, 4);
        let spec = KernelSpec::gaussian(default_affinity_scale(&c).unwrap()).unwrap();
        let emb = laplacian_eigenmaps(&c, &spec, 5).unwrap();
        assert_eq!(embed_matrix_rank_check(&emb), 6);
    }

    #[test]
    fn save_and_load() {
        let c = s4_cloud(20, 2);
        let emb = laplacian_eigenmaps(&c, &KernelSpec::gaussian(1.5).unwrap(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb");
        emb.save(&p).unwrap();
        let back = Embedding::<f64>::load(&p).unwrap();
        assert_eq!(back.coords, emb.coords);
        assert_eq!(back.eigvecs, emb.eigvecs);
        assert_eq!(back.spec, emb.spec);
        assert_eq!(back.degrees.len(), 20);
    }

    #[test]
    fn single_precision_embedding() {
        let c: PointCloud<f32> = sample_sphere(30, 2, false, 3).unwrap();
        let spec = KernelSpec::gaussian(default_affinity_scale(&c).unwrap()).unwrap();
        let emb = laplacian_eigenmaps(&c, &spec, 3).unwrap();
        assert!((emb.eigvals[0] - 1.0).abs() < 1e-4);
        assert_eq!(embed_matrix_rank_check(&emb), 4);
    }
}
