//! Radial kernels, kernel matrices and their diagnostics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{cond2, dist};
use crate::{Error, PointCloud, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    RadialPower,
    ThinPlate,
}

/// A radial kernel `k(z, w) = g(‖z − w‖)`.
///
/// * `Gaussian`: `exp(−ε² r²)`, `ε > 0`.
/// * `RadialPower`: `r^ρ`, odd `ρ ≥ 1`. The cubic is `ρ = 3`.
/// * `ThinPlate`: `r^ρ log r`, even `ρ ≥ 2`, extended by 0 at `r = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec<T> {
    Gaussian { epsilon: T },
    RadialPower { rho: u32 },
    ThinPlate { rho: u32 },
}

impl<T: Real> KernelSpec<T> {
    pub fn gaussian(epsilon: T) -> Result<Self> {
        Self::Gaussian { epsilon }.validated()
    }

    pub fn radial_power(rho: u32) -> Result<Self> {
        Self::RadialPower { rho }.validated()
    }

    pub fn thin_plate(rho: u32) -> Result<Self> {
        Self::ThinPlate { rho }.validated()
    }

    pub fn cubic() -> Self {
        Self::RadialPower { rho: 3 }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Self::Gaussian { .. } => KernelFamily::Gaussian,
            Self::RadialPower { .. } => KernelFamily::RadialPower,
            Self::ThinPlate { .. } => KernelFamily::ThinPlate,
        }
    }

    pub fn epsilon(&self) -> Option<T> {
        match *self {
            Self::Gaussian { epsilon } => Some(epsilon),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { epsilon } if !(epsilon > T::zero() && epsilon.is_finite()) => {
                Err(Error::InvalidKernel(format!("gaussian needs finite epsilon > 0, got {epsilon}")))
            }
            Self::RadialPower { rho } if rho % 2 == 0 => {
                Err(Error::InvalidKernel(format!("radial power needs odd rho, got {rho}")))
            }
            Self::ThinPlate { rho } if rho == 0 || rho % 2 == 1 => {
                Err(Error::InvalidKernel(format!("thin plate needs even rho >= 2, got {rho}")))
            }
            _ => Ok(()),
        }
    }

    fn validated(self) -> Result<Self> {
        self.validate().map(|_| self)
    }

    /// `g(r)` without the sign check on `r`.
    #[inline]
    pub fn g(&self, r: T) -> T {
        match *self {
            Self::Gaussian { epsilon } => {
                let er = epsilon * r;
                (-(er * er)).exp()
            }
            Self::RadialPower { rho } => r.powi(rho as i32),
            Self::ThinPlate { rho } => {
                if r == T::zero() {
                    T::zero()
                } else {
                    r.powi(rho as i32) * r.ln()
                }
            }
        }
    }

    /// `k(a, b)`.
    #[inline]
    pub fn between(&self, a: &[T], b: &[T]) -> T {
        self.g(dist(a, b))
    }

    /// The vector `k(query, ·)` over `nodes`.
    pub fn column(&self, nodes: &PointCloud<T>, query: &[T]) -> Vec<T> {
        nodes.rows().map(|p| self.between(query, p)).collect()
    }
}

/// Evaluates the kernel profile at a distance `r ≥ 0`.
pub fn eval_kernel<T: Real>(spec: &KernelSpec<T>, r: T) -> Result<T> {
    if r < T::zero() {
        return Err(Error::NegativeDistance(r.as_f64()));
    }
    Ok(spec.g(r))
}

/// `K[i][j] = k(a_i, b_j)`; `symmetric` when both sides are the same cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix<T: Real> {
    pub entries: DMatrix<T>,
    pub symmetric: bool,
}

impl<T: Real> KernelMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.nrows(), cols: self.ncols() });
        }
        Ok(())
    }

    fn is_exactly_symmetric(&self) -> bool {
        let n = self.nrows();
        (0..n).all(|i| (0..i).all(|j| self.entries[(i, j)] == self.entries[(j, i)]))
    }
}

pub fn kernel_matrix<T: Real>(
    spec: &KernelSpec<T>,
    a: &PointCloud<T>,
    b: &PointCloud<T>,
) -> Result<KernelMatrix<T>> {
    spec.validate()?;
    a.check_dim(b.dim())?;
    if std::ptr::eq(a, b) || a == b {
        return Ok(symmetric_kernel_matrix(spec, a));
    }
    let rows: Vec<Vec<T>> = (0..a.n())
        .into_par_iter()
        .map(|i| spec.column(b, a.row(i)))
        .collect();
    let entries = DMatrix::from_fn(a.n(), b.n(), |i, j| rows[i][j]);
    Ok(KernelMatrix { entries, symmetric: false })
}

/// Square kernel matrix of a node set; each unordered pair is evaluated once.
pub fn symmetric_kernel_matrix<T: Real>(spec: &KernelSpec<T>, a: &PointCloud<T>) -> KernelMatrix<T> {
    let n = a.n();
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.between(a.row(i), a.row(j))).collect())
        .collect();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            upper[i][j - i]
        } else {
            upper[j][i - j]
        }
    });
    KernelMatrix { entries, symmetric: true }
}

/// `σ_max / σ_min` from a full SVD; `+inf` when `σ_min` is zero.
pub fn condition_number<T: Real>(m: &KernelMatrix<T>) -> Result<T> {
    m.require_square()?;
    cond2(&m.entries)
}

/// Row sums `d_i = Σ_j K[i][j]`.
pub fn degree_vector<T: Real>(m: &KernelMatrix<T>) -> Result<Vec<T>> {
    m.require_square()?;
    m.entries
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            let d = row.iter().fold(T::zero(), |a, &b| a + b);
            if d > T::zero() {
                Ok(d)
            } else {
                Err(Error::IsolatedNode(i))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sparsify<T> {
    /// Zero every entry below `tau`.
    Threshold { tau: T },
    /// Keep the `k` largest off-diagonal entries of each row plus the
    /// diagonal, then symmetrize with the elementwise maximum.
    Knn { k: usize },
}

impl<T: Real> Sparsify<T> {
    /// Applies the rule to the query-side vector `k(x, ·)`.
    pub(crate) fn apply_to_vector(&self, v: &mut [T]) {
        match *self {
            Sparsify::Threshold { tau } => v.iter_mut().filter(|e| **e < tau).for_each(|e| *e = T::zero()),
            Sparsify::Knn { k } => {
                let keep = top_k(v, k, None);
                let mut mask = vec![false; v.len()];
                keep.into_iter().for_each(|j| mask[j] = true);
                v.iter_mut().zip(mask).filter(|(_, m)| !m).for_each(|(e, _)| *e = T::zero());
            }
        }
    }
}

/// Indices of the `k` largest entries (ties to the lower index), skipping `exclude`.
fn top_k<T: Real>(v: &[T], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).filter(|&j| Some(j) != exclude).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn sparsify<T: Real>(m: &KernelMatrix<T>, mode: Sparsify<T>) -> Result<KernelMatrix<T>> {
    m.require_square()?;
    let n = m.nrows();
    match mode {
        Sparsify::Threshold { tau } => {
            let entries = m.entries.map(|e| if e < tau { T::zero() } else { e });
            Ok(KernelMatrix { entries, symmetric: m.symmetric })
        }
        Sparsify::Knn { k } => {
            if k >= n {
                return Err(Error::InvalidParameter(format!("knn k = {k} must be below n = {n}")));
            }
            if !m.is_exactly_symmetric() {
                return Err(Error::InvalidParameter("knn sparsification needs a symmetric matrix".into()));
            }
            let mut kept = DMatrix::zeros(n, n);
            for i in 0..n {
                let row: Vec<T> = m.entries.row(i).iter().copied().collect();
                kept[(i, i)] = row[i];
                for j in top_k(&row, k, Some(i)) {
                    kept[(i, j)] = row[j];
                }
            }
            let entries = DMatrix::from_fn(n, n, |i, j| kept[(i, j)].max(kept[(j, i)]));
            Ok(KernelMatrix { entries, symmetric: true })
        }
    }
}
