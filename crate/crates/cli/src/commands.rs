use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use rbf_preimage::embedding::default_affinity_scale;
use rbf_preimage::evaluation::{
    sphere_data, ConditioningConfig, ConditioningMode, SlopeFit, SphereConfig, SweepKind, SweepResult, SweepRow,
    TableDataset,
};
use rbf_preimage::io::{load_cloud, save_cloud, Format};
use rbf_preimage::{
    conditioning_sweep, convergence_sweep, discontinuity_scan, fit_rbf, laplacian_eigenmaps, local_fill_distance,
    random_unitary_embed, sample_sphere, scale_table, Embedding, KernelSpec, LooMethod, NeighborhoodPolicy,
    PointCloud, RbfModel, Sparsify, Tail,
};

use crate::config::{create, invalid, required, sibling, usage, write_json, write_manifest, CliResult, Outputs};
use crate::{
    ConditioningArgs, EmbedArgs, FitArgs, InvertArgs, KernelArg, ModeArg, SampleArgs, ScanArgs, SphereArgs,
    TableArgs, TailArg,
};

const DEFAULT_SCALES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn load(path: &Path) -> CliResult<PointCloud<f64>> {
    load_cloud(path, Format::from_path(path)).with_context(|| format!("loading {}", path.display())).map_err(Into::into)
}

fn save(cloud: &PointCloud<f64>, path: &Path) -> CliResult<()> {
    save_cloud(cloud, path, Format::from_path(path)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn positive(field: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be a positive number, got {v}")))
    }
}

fn positive_list(field: &str, v: &[f64]) -> CliResult<()> {
    v.iter().try_for_each(|&x| positive(field, x).map(|_| ()))
}

fn tail(t: Option<TailArg>, default: Tail) -> Tail {
    match t {
        Some(TailArg::None) => Tail::None,
        Some(TailArg::Linear) => Tail::Linear,
        None => default,
    }
}

fn tail_arg(t: Tail) -> TailArg {
    match t {
        Tail::None => TailArg::None,
        Tail::Linear => TailArg::Linear,
    }
}

/// Seed of the orthogonal lift, derived from the sampling seed.
fn lift_seed(seed: u64) -> u64 {
    seed ^ 0x5E_ED0F_11F7
}

pub fn sample(a: SampleArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let n = required(a.n, "n")?;
    let sphere_dim = a.sphere_dim.unwrap_or(4);
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if sphere_dim == 0 {
        return Err(invalid("sphere_dim", "must be at least 1"));
    }
    if let Some(d) = a.ambient_dim {
        if d < sphere_dim + 1 {
            return Err(invalid("ambient_dim", format!("must be at least sphere_dim + 1 = {}", sphere_dim + 1)));
        }
    }
    let seed = a.seed.unwrap_or(0);
    let quadrant = a.quadrant.unwrap_or(false);
    let mut cloud = sample_sphere::<f64>(n, sphere_dim, quadrant, seed)?;
    let mut seeds = vec![seed];
    if let Some(d) = a.ambient_dim {
        cloud = random_unitary_embed(&cloud, d, lift_seed(seed))?;
        seeds.push(lift_seed(seed));
    }
    let file = out.file(&path);
    save(&cloud, &file)?;
    let resolved = SampleArgs {
        n: Some(n),
        sphere_dim: Some(sphere_dim),
        ambient_dim: a.ambient_dim,
        quadrant: Some(quadrant),
        seed: Some(seed),
        out: Some(path.clone()),
    };
    let derived = match a.ambient_dim {
        Some(_) => json!({ "lift_seed": lift_seed(seed) }),
        None => Value::Null,
    };
    write_manifest(sibling(&path, "manifest.json"), out, "sample", &resolved, derived, seeds)
}

pub fn embed(a: EmbedArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let input = required(a.input, "input")?;
    let d = required(a.d, "d")?;
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    if let Some(e) = a.epsilon {
        positive("epsilon", e)?;
    }
    if let Some(m) = a.affinity_multiple {
        positive("affinity_multiple", m)?;
    }
    let cloud = load(&input)?;
    if d >= cloud.n() {
        return Err(invalid("d", format!("must be below the number of points ({})", cloud.n())));
    }
    let (epsilon, multiple) = match a.epsilon {
        Some(e) => (e, None),
        None => {
            let m = a.affinity_multiple.unwrap_or(1.0);
            (m * default_affinity_scale(&cloud)?, Some(m))
        }
    };
    let emb = laplacian_eigenmaps(&cloud, &KernelSpec::gaussian(epsilon)?, d)?;
    for suffix in ["json", "coords.pcld", "eigvecs.pcld"] {
        out.file(sibling(&path, suffix));
    }
    emb.save(&path)?;
    let resolved = EmbedArgs {
        input: Some(input),
        d: Some(d),
        affinity_multiple: multiple,
        epsilon: a.epsilon,
        out: Some(path.clone()),
    };
    let derived = json!({ "epsilon": epsilon, "eigvals": emb.eigvals });
    write_manifest(sibling(&path, "manifest.json"), out, "embed", &resolved, derived, vec![])
}

pub fn fit(a: FitArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let nodes_path = required(a.nodes, "nodes")?;
    let values_path = required(a.values, "values")?;
    let kernel = a.kernel.unwrap_or(KernelArg::Cubic);
    if let Some(e) = a.epsilon {
        positive("epsilon", e)?;
    }
    if let Some(m) = a.scale_multiple {
        positive("scale_multiple", m)?;
    }
    let nodes = load(&nodes_path)?;
    let values = load(&values_path)?;
    if nodes.n() != values.n() {
        return Err(invalid("values", format!("{} rows but nodes has {}", values.n(), nodes.n())));
    }
    let spec = match kernel {
        KernelArg::Cubic => KernelSpec::cubic(),
        KernelArg::RadialPower => {
            KernelSpec::radial_power(required(a.rho, "rho")?).map_err(|e| invalid("rho", e))?
        }
        KernelArg::ThinPlate => KernelSpec::thin_plate(required(a.rho, "rho")?).map_err(|e| invalid("rho", e))?,
        KernelArg::Gaussian => {
            let eps = match a.epsilon {
                Some(e) => e,
                None => a.scale_multiple.unwrap_or(1.0) / local_fill_distance(&nodes)?,
            };
            KernelSpec::gaussian(eps)?
        }
    };
    let default_tail = if kernel == KernelArg::Gaussian { Tail::None } else { Tail::Linear };
    let tail = tail(a.tail, default_tail);
    let tail_choice = tail_arg(tail);
    let model = fit_rbf(&nodes, &values, spec, tail)?;
    if let Some(c) = model.condition {
        log::info!("system condition number {c:.3e}");
    }
    for suffix in ["json", "nodes.pcld", "weights.pcld", "tail.pcld"] {
        out.file(sibling(&path, suffix));
    }
    model.save(&path)?;
    let resolved = FitArgs {
        nodes: Some(nodes_path),
        values: Some(values_path),
        kernel: Some(kernel),
        rho: a.rho,
        epsilon: a.epsilon,
        scale_multiple: a.scale_multiple,
        tail: Some(tail_choice),
        out: Some(path.clone()),
    };
    let derived = json!({ "spec": spec, "condition": model.condition });
    write_manifest(sibling(&path, "manifest.json"), out, "fit", &resolved, derived, vec![])
}

pub fn invert(a: InvertArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let model_path = required(a.model, "model")?;
    let queries_path = required(a.queries, "queries")?;
    let model = RbfModel::<f64>::load(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let queries = load(&queries_path)?;
    if queries.dim() != model.input_dim() {
        return Err(invalid(
            "queries",
            format!("points have dimension {} but the model expects {}", queries.dim(), model.input_dim()),
        ));
    }
    let pred = model.eval_many(&queries)?;
    let file = out.file(&path);
    save(&pred, &file)?;
    let resolved = InvertArgs { model: Some(model_path), queries: Some(queries_path), out: Some(path.clone()) };
    write_manifest(sibling(&path, "manifest.json"), out, "invert", &resolved, Value::Null, vec![])
}

#[derive(Serialize)]
struct SphereSummary<'a> {
    n_values: &'a [usize],
    seeds: &'a [u64],
    #[serde(skip_serializing_if = "Option::is_none")]
    fitted_slope: Option<SlopeFit>,
    rows: &'a [SweepRow],
}

pub fn sphere(a: SphereArgs, out: &mut Outputs) -> CliResult<()> {
    let dir = required(a.out, "out")?;
    let n_values = a.n.unwrap_or_else(|| vec![10, 30, 100, 300, 1000]);
    let seed_count = a.seeds.unwrap_or(5);
    let gaussian = a.gaussian.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    let shepard = a.shepard.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    positive_list("gaussian", &gaussian)?;
    positive_list("shepard", &shepard)?;
    let mut cfg = SphereConfig {
        affinity_multiple: positive("affinity_multiple", a.affinity_multiple.unwrap_or(0.1))?,
        ..Default::default()
    };
    cfg.policy = NeighborhoodPolicy { max_neighbors: a.max_neighbors.unwrap_or(200) };
    if cfg.policy.max_neighbors < cfg.embed_dim + 2 {
        return Err(invalid("max_neighbors", format!("must be at least {}", cfg.embed_dim + 2)));
    }
    let cubic_tail = tail(a.tail, Tail::Linear);
    cfg.methods = std::iter::once(LooMethod::Cubic { tail: cubic_tail })
        .chain(gaussian.iter().map(|&m| LooMethod::Gaussian { scale_multiple: m }))
        .chain(shepard.iter().map(|&m| LooMethod::Shepard { scale_multiple: m }))
        .collect();
    if n_values.is_empty() {
        return Err(invalid("n", "needs at least one value"));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n", "must be strictly increasing"));
    }
    if let Some(&n) = n_values.iter().find(|&&n| n < cfg.embed_dim + 3) {
        return Err(invalid("n", format!("{n} is below the minimum of {}", cfg.embed_dim + 3)));
    }
    if seed_count == 0 {
        return Err(invalid("seeds", "must be at least 1"));
    }
    let seeds: Vec<u64> = (0..seed_count).collect();

    out.dir(&dir)?;
    let result = convergence_sweep::<f64>(&n_values, &cfg, &seeds)?;
    for &s in &seeds {
        let part = SweepResult {
            kind: SweepKind::Convergence,
            rows: result.rows.iter().filter(|r| r.seed == s).cloned().collect(),
            fitted_slope: None,
        };
        let path = out.file(dir.join(format!("seed_{s}.csv")));
        part.write_csv(create(&path)?)?;
    }
    let summary = SphereSummary { n_values: &n_values, seeds: &seeds, fitted_slope: result.fitted_slope, rows: &result.rows };
    let path = out.file(dir.join("summary.json"));
    write_json(&path, &summary)?;
    match result.fitted_slope {
        Some(f) => println!("cubic slope {:.3} (residual {:.3})", f.slope, f.residual),
        None => println!("fewer than 3 sample sizes: no slope fitted"),
    }
    let resolved = SphereArgs {
        n: Some(n_values),
        seeds: Some(seed_count),
        affinity_multiple: Some(cfg.affinity_multiple),
        gaussian: Some(gaussian),
        shepard: Some(shepard),
        tail: Some(tail_arg(cubic_tail)),
        max_neighbors: Some(cfg.policy.max_neighbors),
        out: Some(dir.clone()),
    };
    let derived = json!({ "sphere_dim": cfg.sphere_dim, "ambient_dim": cfg.ambient_dim, "embed_dim": cfg.embed_dim });
    write_manifest(dir.join("manifest.json"), out, "sphere", &resolved, derived, seeds)
}

pub fn conditioning(a: ConditioningArgs, out: &mut Outputs) -> CliResult<()> {
    let dir = required(a.out, "out")?;
    let mode = required(a.mode, "mode")?;
    let defaults = ConditioningConfig::default();
    let cfg = ConditioningConfig {
        ambient_dim: a.ambient_dim.unwrap_or(defaults.ambient_dim),
        n_values: a.n.unwrap_or(defaults.n_values),
        fixed_epsilon: positive("epsilon", a.epsilon.unwrap_or(defaults.fixed_epsilon))?,
        fixed_n: a.n_fixed.unwrap_or(defaults.fixed_n),
        epsilons: a.epsilons.unwrap_or(defaults.epsilons),
        seed: a.seed.unwrap_or(defaults.seed),
    };
    if cfg.ambient_dim < 2 {
        return Err(invalid("ambient_dim", "must be at least 2"));
    }
    positive_list("epsilons", &cfg.epsilons)?;
    if cfg.n_values.contains(&0) || cfg.fixed_n == 0 {
        return Err(invalid("n", "node counts must be positive"));
    }
    let (core_mode, name) = match mode {
        ModeArg::VsFill => (ConditioningMode::VsFill, "vs_fill"),
        ModeArg::VsEpsilon => (ConditioningMode::VsEpsilon, "vs_epsilon"),
    };
    out.dir(&dir)?;
    let result = conditioning_sweep::<f64>(core_mode, &cfg)?;
    let csv = out.file(dir.join(format!("conditioning_{name}.csv")));
    result.write_csv(create(&csv)?)?;
    let json = out.file(dir.join(format!("conditioning_{name}.json")));
    write_json(&json, &result)?;
    let resolved = ConditioningArgs {
        mode: Some(mode),
        ambient_dim: Some(cfg.ambient_dim),
        n: Some(cfg.n_values.clone()),
        epsilon: Some(cfg.fixed_epsilon),
        n_fixed: Some(cfg.fixed_n),
        epsilons: Some(cfg.epsilons.clone()),
        seed: Some(cfg.seed),
        out: Some(dir.clone()),
    };
    write_manifest(dir.join("manifest.json"), out, "conditioning", &resolved, Value::Null, vec![cfg.seed])
}

#[derive(Serialize)]
struct ScanSummary {
    max_jump_full: f64,
    max_jump_sparse: f64,
    jump_ratio: f64,
    failures: Vec<usize>,
    diagnostic_only: bool,
}

pub fn nystrom_scan(a: ScanArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let input = required(a.input, "input")?;
    let mult = positive("affinity_multiple", a.affinity_multiple.unwrap_or(1.0))?;
    let d = a.d.unwrap_or(3);
    let l = a.l.unwrap_or(1);
    let steps = a.steps.unwrap_or(1000);
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    if l > d {
        return Err(invalid("l", format!("must be at most d = {d}")));
    }
    if steps < 2 {
        return Err(invalid("steps", "must be at least 2"));
    }
    let sparsify = match (a.tau, a.knn) {
        (Some(_), Some(_)) => return Err(usage("--tau and --knn are mutually exclusive")),
        (None, Some(k)) => Sparsify::Knn { k },
        (tau, None) => {
            let tau = tau.unwrap_or(0.3);
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(invalid("tau", format!("must be a nonnegative number, got {tau}")));
            }
            Sparsify::Threshold { tau }
        }
    };
    let cloud = load(&input)?;
    if d >= cloud.n() {
        return Err(invalid("d", format!("must be below the number of points ({})", cloud.n())));
    }
    if let Sparsify::Knn { k } = sparsify {
        if k == 0 || k >= cloud.n() {
            return Err(invalid("knn", format!("must be between 1 and {}", cloud.n() - 1)));
        }
    }
    let corner = |pick: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
        (0..cloud.dim()).map(|c| cloud.rows().map(|r| r[c]).fold(init, pick)).collect()
    };
    let from = a.from.unwrap_or_else(|| corner(f64::min, f64::INFINITY));
    let to = a.to.unwrap_or_else(|| corner(f64::max, f64::NEG_INFINITY));
    for (field, p) in [("from", &from), ("to", &to)] {
        if p.len() != cloud.dim() {
            return Err(invalid(field, format!("needs {} coordinates, got {}", cloud.dim(), p.len())));
        }
    }
    let epsilon = mult * default_affinity_scale(&cloud)?;
    let spec = KernelSpec::gaussian(epsilon)?;
    let emb: Embedding<f64> = laplacian_eigenmaps(&cloud, &spec, d)?;
    let profile = discontinuity_scan(&emb, &cloud, &spec, sparsify, l, (&from, &to), steps)?;
    let file = out.file(&path);
    profile.write_csv(create(&file)?)?;
    let summary = ScanSummary {
        max_jump_full: profile.max_jump_full,
        max_jump_sparse: profile.max_jump_sparse,
        jump_ratio: profile.max_jump_sparse / profile.max_jump_full,
        failures: profile.failures.clone(),
        diagnostic_only: profile.diagnostic_only,
    };
    let json = out.file(sibling(&path, "json"));
    write_json(&json, &summary)?;
    println!(
        "max jump full {:.3e}, sparsified {:.3e} (ratio {:.1})",
        summary.max_jump_full, summary.max_jump_sparse, summary.jump_ratio
    );
    let (tau, knn) = match sparsify {
        Sparsify::Threshold { tau } => (Some(tau), None),
        Sparsify::Knn { k } => (None, Some(k)),
    };
    let resolved = ScanArgs {
        input: Some(input),
        affinity_multiple: Some(mult),
        d: Some(d),
        l: Some(l),
        tau,
        knn,
        from: Some(from),
        to: Some(to),
        steps: Some(steps),
        out: Some(path.clone()),
    };
    write_manifest(sibling(&path, "manifest.json"), out, "nystrom-scan", &resolved, json!({ "epsilon": epsilon }), vec![])
}

fn unit_rows(c: &PointCloud<f64>) -> CliResult<PointCloud<f64>> {
    let rows: Vec<Vec<f64>> = c
        .rows()
        .map(|r| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| if norm > 0.0 { v / norm } else { *v }).collect()
        })
        .collect();
    Ok(PointCloud::from_rows(&rows)?)
}

pub fn loo_table(a: TableArgs, out: &mut Outputs) -> CliResult<()> {
    let path = required(a.out, "out")?;
    let data = a.data.unwrap_or_default();
    let coords = a.coords.unwrap_or_default();
    if data.is_empty() && a.sphere.is_none() {
        return Err(usage("give at least one --data file or --sphere"));
    }
    if !coords.is_empty() && coords.len() != data.len() {
        return Err(invalid("coords", format!("{} files for {} --data files", coords.len(), data.len())));
    }
    if !data.is_empty() && coords.is_empty() && a.d.is_none() {
        return Err(usage("missing required option --d (needed to embed --data without --coords)"));
    }
    if let Some(m) = a.affinity_multiple {
        positive("affinity_multiple", m)?;
    }
    if let Some(n) = a.sphere {
        if n < 8 {
            return Err(invalid("sphere", "needs at least 8 points"));
        }
    }
    let gaussian = a.gaussian.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    let shepard = a.shepard.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    positive_list("gaussian", &gaussian)?;
    positive_list("shepard", &shepard)?;
    let cubic_tail = tail(a.tail, Tail::Linear);
    let methods: Vec<LooMethod> = std::iter::once(LooMethod::Cubic { tail: cubic_tail })
        .chain(gaussian.iter().map(|&m| LooMethod::Gaussian { scale_multiple: m }))
        .chain(shepard.iter().map(|&m| LooMethod::Shepard { scale_multiple: m }))
        .collect();
    let policy = NeighborhoodPolicy { max_neighbors: a.max_neighbors.unwrap_or(200) };
    let seed = a.seed.unwrap_or(0);
    let unit = a.unit_normalize.unwrap_or(false);

    let mut names = Vec::new();
    let mut clouds: Vec<(PointCloud<f64>, PointCloud<f64>)> = Vec::new();
    for (i, p) in data.iter().enumerate() {
        let mut x = load(p)?;
        if unit {
            x = unit_rows(&x)?;
        }
        let y = match coords.get(i) {
            Some(c) => load(c)?,
            None => {
                let d = a.d.unwrap_or_default();
                if d == 0 || d >= x.n() {
                    return Err(invalid("d", format!("must be between 1 and {}", x.n() - 1)));
                }
                let eps = a.affinity_multiple.unwrap_or(1.0) * default_affinity_scale(&x)?;
                laplacian_eigenmaps(&x, &KernelSpec::gaussian(eps)?, d)?.coords
            }
        };
        names.push(p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("data{i}")));
        clouds.push((x, y));
    }
    if let Some(n) = a.sphere {
        let cfg = SphereConfig {
            affinity_multiple: a.affinity_multiple.unwrap_or(SphereConfig::default().affinity_multiple),
            ..Default::default()
        };
        let s = sphere_data::<f64>(n, seed, &cfg)?;
        names.push(format!("sphere{n}"));
        clouds.push((s.values, s.coords));
    }
    let datasets: Vec<TableDataset<'_, f64>> = names
        .iter()
        .zip(&clouds)
        .map(|(name, (x, y))| TableDataset { name: name.clone(), values: x, coords: y })
        .collect();
    let table = scale_table(&datasets, &methods, &policy)?;
    let file = out.file(&path);
    table.write_csv(create(&file)?)?;
    let json = out.file(sibling(&path, "json"));
    write_json(&json, &table)?;
    for (c, name) in table.columns.iter().enumerate() {
        let best = &table.methods[table.column_min[c]];
        println!("{name}: lowest E_avg {:.4e} by {}", table.e_avg[table.column_min[c]][c], describe(best));
    }
    let seeds = if a.sphere.is_some() { vec![seed] } else { vec![] };
    let resolved = TableArgs {
        data: Some(data),
        coords: Some(coords),
        sphere: a.sphere,
        seed: Some(seed),
        d: a.d,
        affinity_multiple: a.affinity_multiple,
        unit_normalize: Some(unit),
        gaussian: Some(gaussian),
        shepard: Some(shepard),
        tail: Some(tail_arg(cubic_tail)),
        max_neighbors: Some(policy.max_neighbors),
        out: Some(path.clone()),
    };
    write_manifest(sibling(&path, "manifest.json"), out, "loo-table", &resolved, Value::Null, seeds)
}

fn describe(m: &LooMethod) -> String {
    match m.scale_multiple() {
        Some(s) => format!("{} at {s}", m.name()),
        None => m.name().to_string(),
    }
}
