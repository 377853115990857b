//! Leave-one-out reconstruction error and the experiment sweeps built on it.
//!
//! For every sample `j` the inverse map is rebuilt from the other `n − 1`
//! samples (optionally only the nearest ones) and evaluated at `y⁽ʲ⁾`; the
//! report holds `‖x⁽ʲ⁾ − Φ†(y⁽ʲ⁾)‖` and their mean `E_avg`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::laplacian_eigenmaps;
use crate::kernels::{condition_number, symmetric_kernel_matrix};
use crate::linalg::dist;
use crate::preimage::{fit_rbf_with, nearest_indices, shepard_eval, FitOptions, NeighborhoodPolicy, Tail};
use crate::{
    local_fill_distance, random_unitary_embed, sample_sphere, Error, KernelSpec, PointCloud, Real, Result,
};

/// Share of failed points above which an `E_avg` is flagged invalid.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Reconstruction method. Scale multiples are in units of `1 / h̄_local`
/// of the coordinate nodes: `ε = scale_multiple / h̄_local`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LooMethod {
    Cubic { tail: Tail },
    Gaussian { scale_multiple: f64 },
    Shepard { scale_multiple: f64 },
}

impl LooMethod {
    pub fn cubic() -> Self {
        LooMethod::Cubic { tail: Tail::Linear }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LooMethod::Cubic { tail: Tail::Linear } => "cubic",
            LooMethod::Cubic { tail: Tail::None } => "cubic_pure",
            LooMethod::Gaussian { .. } => "gaussian",
            LooMethod::Shepard { .. } => "shepard",
        }
    }

    pub fn scale_multiple(&self) -> Option<f64> {
        match *self {
            LooMethod::Cubic { .. } => None,
            LooMethod::Gaussian { scale_multiple } | LooMethod::Shepard { scale_multiple } => Some(scale_multiple),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.scale_multiple() {
            Some(m) if !(m > 0.0 && m.is_finite()) => {
                Err(Error::InvalidParameter(format!("scale multiple must be positive, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// The standard comparison grid: cubic plus Gaussian and Shepard at each multiple.
    pub fn grid(gaussian: &[f64], shepard: &[f64]) -> Vec<LooMethod> {
        std::iter::once(LooMethod::cubic())
            .chain(gaussian.iter().map(|&m| LooMethod::Gaussian { scale_multiple: m }))
            .chain(shepard.iter().map(|&m| LooMethod::Shepard { scale_multiple: m }))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooReport<T> {
    /// `‖x⁽ʲ⁾ − Φ†(y⁽ʲ⁾)‖`, `None` where the fit failed.
    pub per_point_errors: Vec<Option<T>>,
    /// Mean over the points that succeeded, summed in index order.
    pub e_avg: T,
    pub h_local: T,
    pub method: LooMethod,
    pub n: usize,
    pub seed: Option<u64>,
    /// Indices whose fit or evaluation failed.
    pub failures: Vec<usize>,
    /// More than [`MAX_FAILURE_RATE`] of the points failed.
    pub invalid: bool,
}

/// The `k` nearest coordinate nodes to `y⁽ʲ⁾`, excluding `j` itself.
fn loo_neighbors<T: Real>(coords: &PointCloud<T>, j: usize, k: usize) -> Vec<usize> {
    let mut idx = nearest_indices(coords, coords.row(j), k.saturating_add(1));
    idx.retain(|&i| i != j);
    idx.truncate(k);
    idx
}

fn reconstruct<T: Real>(
    values: &PointCloud<T>,
    coords: &PointCloud<T>,
    j: usize,
    method: &LooMethod,
    epsilon: Option<T>,
    policy: &NeighborhoodPolicy,
) -> Result<Vec<T>> {
    let idx = loo_neighbors(coords, j, policy.max_neighbors);
    let nodes = coords.select(&idx)?;
    let vals = values.select(&idx)?;
    let query = coords.row(j);
    let fit = |spec, tail| {
        fit_rbf_with(&nodes, &vals, spec, tail, FitOptions { condition: false })?.eval(query)
    };
    match *method {
        LooMethod::Cubic { tail } => fit(KernelSpec::cubic(), tail),
        LooMethod::Gaussian { .. } => fit(KernelSpec::gaussian(epsilon.unwrap_or_else(T::one))?, Tail::None),
        LooMethod::Shepard { .. } => {
            shepard_eval(&nodes, &vals, query, epsilon.unwrap_or_else(T::one), &NeighborhoodPolicy::unlimited())
        }
    }
}

/// Leave-one-out reconstruction of `values` (rows `x⁽ʲ⁾`) from `coords`
/// (rows `y⁽ʲ⁾`).
pub fn loo_error<T: Real>(
    values: &PointCloud<T>,
    coords: &PointCloud<T>,
    method: LooMethod,
    policy: &NeighborhoodPolicy,
) -> Result<LooReport<T>> {
    method.validate()?;
    let (n, d) = (coords.n(), coords.dim());
    if values.n() != n {
        return Err(Error::InvalidDimensions(format!("{} values but {n} coordinates", values.n())));
    }
    if n < 2 {
        return Err(Error::InvalidDimensions("leave-one-out needs at least 2 points".into()));
    }
    let tail = match method {
        LooMethod::Cubic { tail } => tail,
        _ => Tail::None,
    };
    if tail == Tail::Linear && n < d + 3 {
        return Err(Error::InvalidDimensions(format!("cubic with tail needs n >= {}, got {n}", d + 3)));
    }
    policy.validate(d, tail)?;

    let h_local = local_fill_distance(coords)?;
    let epsilon = method.scale_multiple().map(|m| T::lit(m) / h_local);

    let per_point_errors: Vec<Option<T>> = (0..n)
        .into_par_iter()
        .map(|j| match reconstruct(values, coords, j, &method, epsilon, policy) {
            Ok(x) if x.iter().all(|v| v.is_finite()) => Some(dist(values.row(j), &x)),
            Ok(_) => None,
            Err(e) => {
                log::debug!("loo point {j} ({}): {e}", method.name());
                None
            }
        })
        .collect();

    let failures: Vec<usize> = (0..n).filter(|&j| per_point_errors[j].is_none()).collect();
    let ok = n - failures.len();
    let sum = per_point_errors.iter().flatten().fold(T::zero(), |a, &b| a + b);
    let e_avg = if ok > 0 { sum / T::lit(ok as f64) } else { T::lit(f64::NAN) };
    let invalid = failures.len() as f64 > MAX_FAILURE_RATE * n as f64;
    if !failures.is_empty() {
        log::warn!("{}: {} of {n} leave-one-out fits failed", method.name(), failures.len());
    }
    Ok(LooReport { per_point_errors, e_avg, h_local, method, n, seed: None, failures, invalid })
}

/// Synthetic sphere pipeline: sample `S^sphere_dim`, lift isometrically to
/// `R^ambient_dim`, embed to `R^embed_dim` with Laplacian eigenmaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereConfig {
    pub sphere_dim: usize,
    pub ambient_dim: usize,
    pub embed_dim: usize,
    /// Affinity scale of the eigenmaps kernel, `ε = affinity_multiple / h̄_local(x)`.
    /// The default 0.1 keeps the kernel wide enough that the embedding is a
    /// smooth chart of the sphere at every `n` of the sweep; at 1.0 the graph
    /// is nearly disconnected for small `n` and the chart folds.
    pub affinity_multiple: f64,
    pub methods: Vec<LooMethod>,
    pub policy: NeighborhoodPolicy,
}

impl Default for SphereConfig {
    fn default() -> Self {
        let scales = [0.25, 0.5, 1.0, 2.0];
        Self {
            sphere_dim: 4,
            ambient_dim: 10,
            embed_dim: 5,
            affinity_multiple: 0.1,
            methods: LooMethod::grid(&scales, &scales),
            policy: NeighborhoodPolicy::default(),
        }
    }
}

/// A sphere sample with its embedding.
pub struct SphereData<T: Real> {
    pub values: PointCloud<T>,
    pub coords: PointCloud<T>,
}

/// Seeds of the three random stages for one `(n, seed)` cell.
fn stage_seeds(n: usize, seed: u64) -> (u64, u64) {
    let base = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (n as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    (base, base.wrapping_add(1))
}

pub fn sphere_data<T: Real>(n: usize, seed: u64, config: &SphereConfig) -> Result<SphereData<T>> {
    let (s_sample, s_lift) = stage_seeds(n, seed);
    let x = sample_sphere::<T>(n, config.sphere_dim, false, s_sample)?;
    let values = random_unitary_embed(&x, config.ambient_dim, s_lift)?;
    let h = local_fill_distance(&values)?;
    let spec = KernelSpec::gaussian(T::lit(config.affinity_multiple) / h)?;
    let emb = laplacian_eigenmaps(&values, &spec, config.embed_dim)?;
    Ok(SphereData { values, coords: emb.coords })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Convergence,
    VsFill,
    VsEpsilon,
}

/// One measurement of a sweep. Leave-one-out rows carry `e_avg`,
/// conditioning rows carry `condition`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub n: usize,
    pub seed: u64,
    pub h_local: f64,
    pub method: String,
    pub scale_multiple: Option<f64>,
    pub epsilon: Option<f64>,
    pub e_avg: Option<f64>,
    pub failures: usize,
    pub invalid: bool,
    pub condition: Option<f64>,
}

/// Least-squares line through `(log h̄_local, log E_avg)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    /// Convergence sweeps with at least three distinct `n`.
    pub fitted_slope: Option<SlopeFit>,
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return None;
    }
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
    Some(SlopeFit { slope, intercept, residual, points: pts.len() })
}

/// Runs every configured method on the sphere pipeline for each `n` and seed.
pub fn convergence_sweep<T: Real>(n_values: &[usize], config: &SphereConfig, seeds: &[u64]) -> Result<SweepResult> {
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n values must be strictly increasing".into()));
    }
    if let Some(&n) = n_values.iter().find(|&&n| n < config.embed_dim + 3) {
        return Err(Error::InvalidParameter(format!("n = {n} is below embed_dim + 3")));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods configured".into()));
    }
    let mut rows = Vec::new();
    for &n in n_values {
        for &seed in seeds {
            let data = sphere_data::<T>(n, seed, config)?;
            for method in &config.methods {
                let rep = loo_error(&data.values, &data.coords, *method, &config.policy)?;
                rows.push(SweepRow {
                    parameter: n as f64,
                    n,
                    seed,
                    h_local: rep.h_local.as_f64(),
                    method: method.name().to_string(),
                    scale_multiple: method.scale_multiple(),
                    epsilon: method.scale_multiple().map(|m| m / rep.h_local.as_f64()),
                    e_avg: Some(rep.e_avg.as_f64()),
                    failures: rep.failures.len(),
                    invalid: rep.invalid,
                    condition: None,
                });
            }
            log::info!("convergence sweep: n = {n}, seed = {seed} done");
        }
    }
    let mut distinct_n: Vec<usize> = rows.iter().map(|r| r.n).collect();
    distinct_n.dedup();
    let fitted_slope = if distinct_n.len() >= 3 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.method == "cubic" && !r.invalid)
            .filter_map(|r| Some((r.h_local, r.e_avg?)))
            .collect();
        fit_loglog(&pts)
    } else {
        None
    };
    Ok(SweepResult { kind: SweepKind::Convergence, rows, fitted_slope })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditioningConfig {
    /// Ambient dimension `D`; nodes lie on the first orthant of `S^(D−1)`.
    pub ambient_dim: usize,
    /// Node counts for the fill-distance sweep.
    pub n_values: Vec<usize>,
    /// Fixed Gaussian scale for the fill-distance sweep.
    pub fixed_epsilon: f64,
    /// Node count for the scale sweep.
    pub fixed_n: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 5,
            n_values: vec![10, 20, 50, 100, 200, 500, 1000],
            fixed_epsilon: 1e-2,
            fixed_n: 200,
            epsilons: (-8..=4).map(|k| 10f64.powf(k as f64 / 4.0)).collect(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    VsFill,
    VsEpsilon,
}

fn cond_row<T: Real>(
    cloud: &PointCloud<T>,
    h: T,
    spec: KernelSpec<T>,
    parameter: f64,
    seed: u64,
) -> Result<SweepRow> {
    let k = symmetric_kernel_matrix(&spec, cloud);
    let cond = condition_number(&k)?;
    Ok(SweepRow {
        parameter,
        n: cloud.n(),
        seed,
        h_local: h.as_f64(),
        method: match spec {
            KernelSpec::Gaussian { .. } => "gaussian".into(),
            _ => "cubic".into(),
        },
        scale_multiple: None,
        epsilon: spec.epsilon().map(|e| e.as_f64()),
        e_avg: None,
        failures: 0,
        invalid: false,
        condition: Some(cond.as_f64()),
    })
}

/// Condition numbers of Gaussian and cubic kernel matrices against node
/// spacing (`VsFill`) or against the Gaussian scale (`VsEpsilon`). The cubic
/// kernel has no scale, so `VsEpsilon` reports it once.
pub fn conditioning_sweep<T: Real>(mode: ConditioningMode, config: &ConditioningConfig) -> Result<SweepResult> {
    if config.ambient_dim < 2 {
        return Err(Error::InvalidParameter("ambient dimension must be at least 2".into()));
    }
    let sample = |n: usize| sample_sphere::<T>(n, config.ambient_dim - 1, true, config.seed.wrapping_add(n as u64));
    let mut rows = Vec::new();
    match mode {
        ConditioningMode::VsFill => {
            let mut ns = config.n_values.clone();
            ns.sort_unstable();
            for n in ns {
                let cloud = sample(n)?;
                let h = local_fill_distance(&cloud)?;
                rows.push(cond_row(&cloud, h, KernelSpec::gaussian(T::lit(config.fixed_epsilon))?, n as f64, config.seed)?);
                rows.push(cond_row(&cloud, h, KernelSpec::cubic(), n as f64, config.seed)?);
            }
        }
        ConditioningMode::VsEpsilon => {
            let cloud = sample(config.fixed_n)?;
            let h = local_fill_distance(&cloud)?;
            let mut eps = config.epsilons.clone();
            eps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            for e in eps {
                rows.push(cond_row(&cloud, h, KernelSpec::gaussian(T::lit(e))?, e, config.seed)?);
            }
            rows.push(cond_row(&cloud, h, KernelSpec::cubic(), f64::NAN, config.seed)?);
        }
    }
    let kind = match mode {
        ConditioningMode::VsFill => SweepKind::VsFill,
        ConditioningMode::VsEpsilon => SweepKind::VsEpsilon,
    };
    Ok(SweepResult { kind, rows, fitted_slope: None })
}

impl SweepResult {
    /// Leave-one-out sweeps: `n,seed,h_local,method,scale_multiple,e_avg,failures`.
    /// Conditioning sweeps: `n,seed,h_local,method,epsilon,condition`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        match self.kind {
            SweepKind::Convergence => {
                wtr.write_record(["n", "seed", "h_local", "method", "scale_multiple", "e_avg", "failures"]).map_err(err)?;
                for r in &self.rows {
                    wtr.write_record([
                        r.n.to_string(),
                        r.seed.to_string(),
                        r.h_local.to_string(),
                        r.method.clone(),
                        opt(r.scale_multiple),
                        opt(r.e_avg),
                        r.failures.to_string(),
                    ])
                    .map_err(err)?;
                }
            }
            SweepKind::VsFill | SweepKind::VsEpsilon => {
                wtr.write_record(["n", "seed", "h_local", "method", "epsilon", "condition"]).map_err(err)?;
                for r in &self.rows {
                    wtr.write_record([
                        r.n.to_string(),
                        r.seed.to_string(),
                        r.h_local.to_string(),
                        r.method.clone(),
                        opt(r.epsilon),
                        opt(r.condition),
                    ])
                    .map_err(err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// A dataset column of a [`ScaleTable`].
pub struct TableDataset<'a, T: Real> {
    pub name: String,
    pub values: &'a PointCloud<T>,
    pub coords: &'a PointCloud<T>,
}

/// `E_avg` for each method (rows) and dataset (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    pub columns: Vec<String>,
    pub methods: Vec<LooMethod>,
    /// `e_avg[row][col]`.
    pub e_avg: Vec<Vec<f64>>,
    pub failures: Vec<Vec<usize>>,
    /// Row index of the smallest `E_avg` in each column.
    pub column_min: Vec<usize>,
}

pub fn scale_table<T: Real>(
    datasets: &[TableDataset<'_, T>],
    methods: &[LooMethod],
    policy: &NeighborhoodPolicy,
) -> Result<ScaleTable> {
    if methods.is_empty() || datasets.is_empty() {
        return Err(Error::InvalidParameter("scale table needs at least one method and dataset".into()));
    }
    let mut e_avg = vec![vec![f64::NAN; datasets.len()]; methods.len()];
    let mut failures = vec![vec![0; datasets.len()]; methods.len()];
    for (c, ds) in datasets.iter().enumerate() {
        for (r, m) in methods.iter().enumerate() {
            let rep = loo_error(ds.values, ds.coords, *m, policy)?;
            e_avg[r][c] = rep.e_avg.as_f64();
            failures[r][c] = rep.failures.len();
        }
    }
    let column_min = (0..datasets.len())
        .map(|c| {
            (0..methods.len())
                .filter(|&r| !e_avg[r][c].is_nan())
                .fold(0, |best, r| if e_avg[r][c] < e_avg[best][c] || e_avg[best][c].is_nan() { r } else { best })
        })
        .collect();
    Ok(ScaleTable {
        columns: datasets.iter().map(|d| d.name.clone()).collect(),
        methods: methods.to_vec(),
        e_avg,
        failures,
        column_min,
    })
}

impl ScaleTable {
    /// `method,scale_multiple,<dataset…>,min_in`; `min_in` lists (`;`-joined)
    /// the datasets where the row is the column minimum.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        let mut header = vec!["method".to_string(), "scale_multiple".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("min_in".into());
        wtr.write_record(&header).map_err(err)?;
        for (r, m) in self.methods.iter().enumerate() {
            let mut rec = vec![m.name().to_string(), m.scale_multiple().map(|s| s.to_string()).unwrap_or_default()];
            rec.extend(self.e_avg[r].iter().map(|v| v.to_string()));
            let mins: Vec<&str> = (0..self.columns.len())
                .filter(|&c| self.column_min[c] == r)
                .map(|c| self.columns[c].as_str())
                .collect();
            rec.push(mins.join(";"));
            wtr.write_record(&rec).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit_rbf;

    fn line(xs: &[f64]) -> PointCloud<f64> {
        PointCloud::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn constant_values_reconstruct_exactly() {
        let data = sphere_data::<f64>(40, 1, &SphereConfig::default()).unwrap();
        let constant = PointCloud::new(40, 3, [0.3, -1.0, 2.0].repeat(40)).unwrap();
        let p = NeighborhoodPolicy::default();
        let sh = loo_error(&constant, &data.coords, LooMethod::Shepard { scale_multiple: 1.0 }, &p).unwrap();
        assert!(sh.e_avg < 1e-14, "{}", sh.e_avg);
        let cu = loo_error(&constant, &data.coords, LooMethod::cubic(), &p).unwrap();
        assert!(cu.e_avg < 1e-8, "{}", cu.e_avg);
        assert!(cu.failures.is_empty() && !cu.invalid);
    }

    #[test]
    fn three_point_line_matches_two_node_fits() {
        // Each held-out point is rebuilt from the two others with the pure
        // cubic: with nodes a < b and values u, v the 2x2 system gives
        // α = (v, u)/|b − a|³, so Φ†(y) = (v|y − a|³ + u|y − b|³)/|b − a|³.
        let y = line(&[0.0, 1.0, 3.0]);
        let x = PointCloud::from_rows(&[[1.0, 0.0], [2.0, 5.0], [-1.0, 4.0]]).unwrap();
        let rep = loo_error(&x, &y, LooMethod::Cubic { tail: Tail::None }, &NeighborhoodPolicy::default()).unwrap();
        let oracle = |a: f64, b: f64, u: &[f64], v: &[f64], q: f64| -> Vec<f64> {
            let h3 = (b - a).abs().powi(3);
            (0..2).map(|c| (v[c] * (q - a).abs().powi(3) + u[c] * (q - b).abs().powi(3)) / h3).collect()
        };
        let preds = [
            oracle(1.0, 3.0, x.row(1), x.row(2), 0.0),
            oracle(0.0, 3.0, x.row(0), x.row(2), 1.0),
            oracle(0.0, 1.0, x.row(0), x.row(1), 3.0),
        ];
        let mut sum = 0.0;
        for j in 0..3 {
            let e = dist(x.row(j), &preds[j]);
            assert!((rep.per_point_errors[j].unwrap() - e).abs() < 1e-10);
            sum += e;
        }
        assert!((rep.e_avg - sum / 3.0).abs() < 1e-10);
        assert!((rep.h_local - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn loo_preconditions() {
        let y = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let x = line(&[1.0, 2.0, 3.0, 4.0]);
        let p = NeighborhoodPolicy::default();
        assert!(matches!(loo_error(&x, &y, LooMethod::cubic(), &p), Err(Error::InvalidDimensions(_))));
        assert!(loo_error(&x, &y, LooMethod::Gaussian { scale_multiple: -1.0 }, &p).is_err());
        assert!(loo_error(&line(&[1.0]), &y, LooMethod::cubic(), &p).is_err());
    }

    #[test]
    fn failed_points_are_counted_not_fatal() {
        // Points 0 and 1 coincide; every fit that sees both is singular.
        let y = line(&[0.0, 0.0, 1.0, 2.0, 3.5]);
        let x = line(&[0.0, 0.0, 1.0, 8.0, 27.0]);
        let rep = loo_error(&x, &y, LooMethod::Cubic { tail: Tail::None }, &NeighborhoodPolicy::default()).unwrap();
        assert_eq!(rep.failures, vec![2, 3, 4]);
        assert!(rep.invalid);
        assert!(rep.per_point_errors[0].unwrap() < 1e-14);
        assert!(rep.e_avg < 1e-14);
    }

    #[test]
    fn duplicate_training_point_gives_zero_error() {
        let data = sphere_data::<f64>(60, 2, &SphereConfig::default()).unwrap();
        let mut ys = data.coords.as_slice().to_vec();
        ys.extend_from_slice(data.coords.row(5));
        let mut xs = data.values.as_slice().to_vec();
        xs.extend_from_slice(data.values.row(5));
        let y = PointCloud::new(61, 5, ys).unwrap();
        let x = PointCloud::new(61, 10, xs).unwrap();
        let p = NeighborhoodPolicy::default();
        for m in [LooMethod::cubic(), LooMethod::Cubic { tail: Tail::None }] {
            let rep = loo_error(&x, &y, m, &p).unwrap();
            assert!(rep.per_point_errors[5].unwrap() <= 1e-6);
        }
    }

    #[test]
    fn loo_is_permutation_invariant() {
        let data = sphere_data::<f64>(50, 3, &SphereConfig::default()).unwrap();
        let perm: Vec<usize> = (0..50).map(|i| (i * 17) % 50).collect();
        let yp = data.coords.select(&perm).unwrap();
        let xp = data.values.select(&perm).unwrap();
        let p = NeighborhoodPolicy { max_neighbors: 30 };
        for m in [LooMethod::cubic(), LooMethod::Gaussian { scale_multiple: 0.5 }, LooMethod::Shepard { scale_multiple: 1.0 }] {
            let a = loo_error(&data.values, &data.coords, m, &p).unwrap();
            let b = loo_error(&xp, &yp, m, &p).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                let (ea, eb) = (a.per_point_errors[i].unwrap(), b.per_point_errors[k].unwrap());
                assert!((ea - eb).abs() <= 1e-9 * ea.max(1e-12), "{m:?}: {ea} vs {eb}");
            }
        }
    }

    #[test]
    fn loo_matches_manual_refit() {
        let data = sphere_data::<f64>(30, 4, &SphereConfig::default()).unwrap();
        let rep = loo_error(&data.values, &data.coords, LooMethod::cubic(), &NeighborhoodPolicy::default()).unwrap();
        for j in [0, 13, 29] {
            let m = fit_rbf(&data.coords.without(j).unwrap(), &data.values.without(j).unwrap(), KernelSpec::cubic(), Tail::Linear).unwrap();
            let e = dist(data.values.row(j), &m.eval(data.coords.row(j)).unwrap());
            assert!((rep.per_point_errors[j].unwrap() - e).abs() < 1e-10);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = SphereConfig { methods: vec![LooMethod::cubic()], ..Default::default() };
        let a = convergence_sweep::<f64>(&[20, 40], &cfg, &[1, 2]).unwrap();
        let b = convergence_sweep::<f64>(&[20, 40], &cfg, &[1, 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert!(a.fitted_slope.is_none());
    }

    #[test]
    fn single_n_has_no_slope() {
        let cfg = SphereConfig { methods: vec![LooMethod::cubic()], ..Default::default() };
        let r = convergence_sweep::<f64>(&[30], &cfg, &[0, 1]).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.fitted_slope.is_none());
        assert!(convergence_sweep::<f64>(&[30, 20], &cfg, &[0]).is_err());
        assert!(convergence_sweep::<f64>(&[7], &cfg, &[0]).is_err());
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4, 0.8].iter().map(|&h: &f64| (h, 3.0 * h.powi(2))).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(fit_loglog(&[(0.1, 1.0)]).is_none());
    }

    #[test]
    fn conditioning_vs_epsilon_has_one_cubic_row() {
        let cfg = ConditioningConfig { fixed_n: 60, epsilons: vec![10.0, 0.01, 1.0], ..Default::default() };
        let r = conditioning_sweep::<f64>(ConditioningMode::VsEpsilon, &cfg).unwrap();
        assert_eq!(r.rows_for("cubic").count(), 1);
        let g: Vec<&SweepRow> = r.rows_for("gaussian").collect();
        assert_eq!(g.len(), 3);
        assert!(g.windows(2).all(|w| w[0].parameter < w[1].parameter));
        assert!(g[0].condition.unwrap() >= g[2].condition.unwrap());
    }

    #[test]
    fn conditioning_vs_fill_grows_with_density() {
        let cfg = ConditioningConfig { n_values: vec![10, 40, 160], ..Default::default() };
        let r = conditioning_sweep::<f64>(ConditioningMode::VsFill, &cfg).unwrap();
        let g: Vec<&SweepRow> = r.rows_for("gaussian").collect();
        assert!(g.windows(2).all(|w| w[0].h_local > w[1].h_local));
        assert!(g.windows(2).all(|w| w[0].condition.unwrap() <= w[1].condition.unwrap()));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,seed,h_local,method,epsilon,condition\n"));
    }

    #[test]
    fn table_marks_minimum_and_zero_data() {
        let data = sphere_data::<f64>(40, 5, &SphereConfig::default()).unwrap();
        let zeros = PointCloud::new(40, 10, vec![0.0; 400]).unwrap();
        let methods = LooMethod::grid(&[0.5, 1.0], &[1.0, 2.0]);
        let datasets = [
            TableDataset { name: "sphere".into(), values: &data.values, coords: &data.coords },
            TableDataset { name: "zeros".into(), values: &zeros, coords: &data.coords },
        ];
        let t = scale_table(&datasets, &methods, &NeighborhoodPolicy::default()).unwrap();
        assert!(t.e_avg.iter().all(|row| row[1] == 0.0));
        let best = (0..methods.len()).map(|r| t.e_avg[r][0]).fold(f64::INFINITY, f64::min);
        assert_eq!(t.e_avg[t.column_min[0]][0], best);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,scale_multiple,sphere,zeros,min_in\n"));
    }

    #[test]
    fn method_serialization() {
        let s = serde_json::to_string(&LooMethod::Shepard { scale_multiple: 2.0 }).unwrap();
        assert_eq!(s, r#"{"method":"shepard","scale_multiple":2.0}"#);
        let c: LooMethod = serde_json::from_str(r#"{"method":"cubic","tail":"linear"}"#).unwrap();
        assert_eq!(c, LooMethod::cubic());
    }
}
