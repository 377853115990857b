//! Approximate inverse maps by RBF interpolation of the coordinate functions.
//!
//! Each ambient coordinate `x_i` is interpolated over the nodes `y⁽ʲ⁾`:
//!
//! ```text
//! x_i(y) ≈ Σ_j α_i⁽ʲ⁾ k(y, y⁽ʲ⁾) [+ γ_i + Σ_k β_{k,i} y_k]
//! ```
//!
//! Without a tail the weights solve `K A = X`. With the linear tail they
//! solve the saddle system
//!
//! ```text
//! [ K   P ] [ A ]   [ X ]
//! [ Pᵀ  0 ] [ c ] = [ 0 ]
//! ```
//!
//! where row `j` of `P` is `(1, y⁽ʲ⁾)`. The zero block imposes the moment
//! conditions `Σ_j α⁽ʲ⁾ = 0` and `Σ_j α⁽ʲ⁾ y_k⁽ʲ⁾ = 0`. Nothing is
//! regularized: a badly conditioned system shows up in
//! [`RbfModel::condition`], not as a silently smoothed fit.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::unisolvency_rank;
use crate::io::{load_cloud, read_json, save_cloud, sibling, write_json, Format};
use crate::kernels::{symmetric_kernel_matrix, KernelSpec};
use crate::linalg::{cond2, lu_solve, sq_dist};
use crate::{Error, PointCloud, Real, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    None,
    #[default]
    Linear,
}

/// Constant and linear coefficients of the polynomial tail.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTail<T: Real> {
    /// `γ_i`, one per output coordinate.
    pub gamma: Vec<T>,
    /// `β_{k,i}`, `d × D`.
    pub beta: DMatrix<T>,
}

/// A fitted interpolant `R^d → R^D`. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfModel<T: Real> {
    pub nodes: PointCloud<T>,
    /// `A`, `n × D`; column `i` holds the weights of output coordinate `i`.
    pub weights: DMatrix<T>,
    pub poly: Option<PolyTail<T>>,
    pub spec: KernelSpec<T>,
    pub tail: Tail,
    /// 2-norm condition number of the solved system, when it was computed.
    pub condition: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    /// Compute the system condition number (a full SVD) during the fit.
    pub condition: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { condition: true }
    }
}

/// How many nearest nodes a local fit uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodPolicy {
    pub max_neighbors: usize,
}

impl Default for NeighborhoodPolicy {
    fn default() -> Self {
        Self { max_neighbors: 200 }
    }
}

impl NeighborhoodPolicy {
    pub fn unlimited() -> Self {
        Self { max_neighbors: usize::MAX }
    }

    pub fn validate(&self, d: usize, tail: Tail) -> Result<()> {
        if self.max_neighbors == 0 {
            return Err(Error::InvalidParameter("max_neighbors must be positive".into()));
        }
        if tail == Tail::Linear && self.max_neighbors < d + 2 {
            return Err(Error::InvalidParameter(format!(
                "max_neighbors {} too small for a linear tail in {d} dimensions (need {})",
                self.max_neighbors,
                d + 2
            )));
        }
        Ok(())
    }
}

/// Indices of the `k` nodes nearest to `query`; distance ties go to the
/// lower index. Returned nearest first.
pub fn nearest_indices<T: Real>(nodes: &PointCloud<T>, query: &[T], k: usize) -> Vec<usize> {
    let d2: Vec<T> = nodes.rows().map(|p| sq_dist(p, query)).collect();
    let cmp = |a: &usize, b: &usize| {
        d2[*a].partial_cmp(&d2[*b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..nodes.n()).collect();
    let k = k.min(idx.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.truncate(k);
    idx.sort_by(cmp);
    idx
}

fn check_duplicates<T: Real>(nodes: &PointCloud<T>) -> Result<()> {
    for i in 0..nodes.n() {
        for j in 0..i {
            if sq_dist(nodes.row(i), nodes.row(j)) == T::zero() {
                return Err(Error::DuplicateNodes(j, i));
            }
        }
    }
    Ok(())
}

pub fn fit_rbf<T: Real>(
    nodes: &PointCloud<T>,
    values: &PointCloud<T>,
    spec: KernelSpec<T>,
    tail: Tail,
) -> Result<RbfModel<T>> {
    fit_rbf_with(nodes, values, spec, tail, FitOptions::default())
}

pub fn fit_rbf_with<T: Real>(
    nodes: &PointCloud<T>,
    values: &PointCloud<T>,
    spec: KernelSpec<T>,
    tail: Tail,
    options: FitOptions,
) -> Result<RbfModel<T>> {
    spec.validate()?;
    let (n, d, big_d) = (nodes.n(), nodes.dim(), values.dim());
    if values.n() != n {
        return Err(Error::InvalidDimensions(format!("{n} nodes but {} values", values.n())));
    }
    check_duplicates(nodes)?;
    let m = match tail {
        Tail::None => 0,
        Tail::Linear => {
            let rank = unisolvency_rank(nodes);
            if rank < d + 1 {
                return Err(Error::NotUnisolvent { rank, required: d + 1 });
            }
            d + 1
        }
    };

    let k = symmetric_kernel_matrix(&spec, nodes).entries;
    let size = n + m;
    let mut system = DMatrix::zeros(size, size);
    system.view_mut((0, 0), (n, n)).copy_from(&k);
    if m > 0 {
        for j in 0..n {
            system[(j, n)] = T::one();
            system[(n, j)] = T::one();
            for (c, &y) in nodes.row(j).iter().enumerate() {
                system[(j, n + 1 + c)] = y;
                system[(n + 1 + c, j)] = y;
            }
        }
    }
    let mut rhs = DMatrix::zeros(size, big_d);
    rhs.view_mut((0, 0), (n, big_d)).copy_from(&values.to_matrix());

    let condition = if options.condition { Some(cond2(&system)?) } else { None };
    let sol = lu_solve(system, &rhs)?;

    let weights = sol.rows(0, n).into_owned();
    let poly = (m > 0).then(|| PolyTail {
        gamma: sol.row(n).iter().copied().collect(),
        beta: sol.rows(n + 1, d).into_owned(),
    });
    Ok(RbfModel { nodes: nodes.clone(), weights, poly, spec, tail, condition })
}

impl<T: Real> RbfModel<T> {
    pub fn input_dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `Σ_j A[j,:] k(query, y⁽ʲ⁾)`, plus `γ + βᵀ query` with a linear tail.
    pub fn eval(&self, query: &[T]) -> Result<Vec<T>> {
        self.nodes.check_dim(query.len())?;
        let mut out = vec![T::zero(); self.output_dim()];
        for (j, p) in self.nodes.rows().enumerate() {
            let kj = self.spec.between(query, p);
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.weights[(j, i)] * kj;
            }
        }
        if let Some(poly) = &self.poly {
            for (i, o) in out.iter_mut().enumerate() {
                *o += poly.gamma[i];
                for (k, &q) in query.iter().enumerate() {
                    *o += poly.beta[(k, i)] * q;
                }
            }
        }
        Ok(out)
    }

    /// Evaluates every row of `queries` (in parallel, output in row order).
    pub fn eval_many(&self, queries: &PointCloud<T>) -> Result<PointCloud<T>> {
        self.nodes.check_dim(queries.dim())?;
        let rows: Vec<Vec<T>> = (0..queries.n())
            .into_par_iter()
            .map(|i| self.eval(queries.row(i)))
            .collect::<Result<_>>()?;
        PointCloud::from_rows(&rows)
    }
}

/// Fits on the nodes nearest to `query` and evaluates there.
///
/// Uses `min(nodes.n(), policy.max_neighbors)` nodes, chosen by
/// [`nearest_indices`].
pub fn fit_local_rbf<T: Real>(
    nodes: &PointCloud<T>,
    values: &PointCloud<T>,
    spec: KernelSpec<T>,
    tail: Tail,
    policy: &NeighborhoodPolicy,
    query: &[T],
) -> Result<Vec<T>> {
    policy.validate(nodes.dim(), tail)?;
    nodes.check_dim(query.len())?;
    if values.n() != nodes.n() {
        return Err(Error::InvalidDimensions(format!("{} nodes but {} values", nodes.n(), values.n())));
    }
    let model = if policy.max_neighbors >= nodes.n() {
        fit_rbf_with(nodes, values, spec, tail, FitOptions { condition: false })?
    } else {
        let idx = nearest_indices(nodes, query, policy.max_neighbors);
        fit_rbf_with(&nodes.select(&idx)?, &values.select(&idx)?, spec, tail, FitOptions { condition: false })?
    };
    model.eval(query)
}

/// Shepard's method with Gaussian weights `exp(−ε²‖query − y⁽ʲ⁾‖²)` over the
/// query's neighbourhood.
pub fn shepard_eval<T: Real>(
    nodes: &PointCloud<T>,
    values: &PointCloud<T>,
    query: &[T],
    epsilon: T,
    policy: &NeighborhoodPolicy,
) -> Result<Vec<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidParameter(format!("shepard epsilon must be positive, got {epsilon}")));
    }
    nodes.check_dim(query.len())?;
    if values.n() != nodes.n() {
        return Err(Error::InvalidDimensions(format!("{} nodes but {} values", nodes.n(), values.n())));
    }
    let idx = nearest_indices(nodes, query, policy.max_neighbors);
    if idx.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let e2 = epsilon * epsilon;
    let w: Vec<T> = idx.iter().map(|&j| (-(e2 * sq_dist(query, nodes.row(j)))).exp()).collect();
    let total = w.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::ScaleTooLarge);
    }
    let mut out = vec![T::zero(); values.dim()];
    for (&j, &wj) in idx.iter().zip(&w) {
        let c = wj / total;
        for (o, &x) in out.iter_mut().zip(values.row(j)) {
            *o += c * x;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar<T> {
    spec: KernelSpec<T>,
    tail: Tail,
    n: usize,
    input_dim: usize,
    output_dim: usize,
    condition: Option<T>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> RbfModel<T> {
    /// Writes `<path>.json` plus binary blocks `<path>.nodes.pcld`,
    /// `<path>.weights.pcld` and, with a tail, `<path>.tail.pcld` (row 0 is
    /// `γ`, rows `1..=d` are `β`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        save_cloud(&self.nodes, sibling(path, "nodes.pcld"), Format::Binary)?;
        save_cloud(&PointCloud::from_matrix(&self.weights)?, sibling(path, "weights.pcld"), Format::Binary)?;
        if let Some(poly) = &self.poly {
            let mut block = DMatrix::zeros(self.input_dim() + 1, self.output_dim());
            block.row_mut(0).iter_mut().zip(&poly.gamma).for_each(|(b, &g)| *b = g);
            block.rows_mut(1, self.input_dim()).copy_from(&poly.beta);
            save_cloud(&PointCloud::from_matrix(&block)?, sibling(path, "tail.pcld"), Format::Binary)?;
        }
        let side = ModelSidecar {
            spec: self.spec,
            tail: self.tail,
            n: self.nodes.n(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            condition: self.condition,
        };
        write_json(&side, &sibling(path, "json"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side: ModelSidecar<T> = read_json(&sibling(path, "json"))?;
        side.spec.validate()?;
        let nodes: PointCloud<T> = load_cloud(sibling(path, "nodes.pcld"), Format::Binary)?;
        let weights = load_cloud::<T>(sibling(path, "weights.pcld"), Format::Binary)?.to_matrix();
        if nodes.n() != side.n || nodes.dim() != side.input_dim || weights.shape() != (side.n, side.output_dim) {
            return Err(Error::InvalidDimensions("model files disagree on shape".into()));
        }
        let poly = match side.tail {
            Tail::None => None,
            Tail::Linear => {
                let block = load_cloud::<T>(sibling(path, "tail.pcld"), Format::Binary)?.to_matrix();
                if block.shape() != (side.input_dim + 1, side.output_dim) {
                    return Err(Error::InvalidDimensions("tail block has the wrong shape".into()));
                }
                Some(PolyTail {
                    gamma: block.row(0).iter().copied().collect(),
                    beta: block.rows(1, side.input_dim).into_owned(),
                })
            }
        };
        Ok(Self { nodes, weights, poly, spec: side.spec, tail: side.tail, condition: side.condition })
    }
}
