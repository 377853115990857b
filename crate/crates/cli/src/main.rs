//! `preimage`: command-line driver for the RBF inverse-map experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use config::{read_config, CliError, Outputs};

#[derive(Parser)]
#[command(name = "preimage", version, about = "Inverse maps for nonlinear dimensionality reduction by RBF interpolation")]
struct Cli {
    /// JSON object with option values (snake_case keys); command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample points on a unit sphere, optionally lifted isometrically to a higher dimension.
    Sample(SampleArgs),
    /// Laplacian eigenmaps embedding of a point cloud.
    Embed(EmbedArgs),
    /// Fit an RBF inverse map from coordinates to values.
    Fit(FitArgs),
    /// Evaluate a saved inverse map at query coordinates.
    Invert(InvertArgs),
    /// Leave-one-out convergence experiment on S⁴ lifted to R¹⁰.
    Sphere(SphereArgs),
    /// Kernel matrix condition numbers against node spacing or Gaussian scale.
    Conditioning(ConditioningArgs),
    /// Extend an eigenvector along a segment with the full and the sparsified kernel.
    NystromScan(ScanArgs),
    /// Leave-one-out error table over methods and scales.
    LooTable(TableArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Embed(_) => "embed",
            Command::Fit(_) => "fit",
            Command::Invert(_) => "invert",
            Command::Sphere(_) => "sphere",
            Command::Conditioning(_) => "conditioning",
            Command::NystromScan(_) => "nystrom-scan",
            Command::LooTable(_) => "loo-table",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum KernelArg {
    Cubic,
    Gaussian,
    RadialPower,
    ThinPlate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TailArg {
    None,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    VsFill,
    VsEpsilon,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SampleArgs {
    /// Number of points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Intrinsic sphere dimension k (points on S^k in R^(k+1)) [default: 4].
    #[arg(long)]
    pub sphere_dim: Option<usize>,
    /// Lift to this ambient dimension with a random orthogonal map.
    #[arg(long)]
    pub ambient_dim: Option<usize>,
    /// Keep only the first orthant.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub quadrant: Option<bool>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output cloud (.csv or binary .pcld).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedArgs {
    /// Input cloud (.csv or .pcld).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Affinity scale as a multiple of 1/h̄_local of the input [default: 1].
    #[arg(long)]
    pub affinity_multiple: Option<f64>,
    /// Absolute affinity scale ε; overrides --affinity-multiple.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Output base path; writes <out>.json, <out>.coords.pcld, <out>.eigvecs.pcld.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitArgs {
    /// Coordinates y (one node per row).
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Values x, one row per node.
    #[arg(long)]
    pub values: Option<PathBuf>,
    /// Kernel family [default: cubic].
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Exponent for radial_power (odd) or thin_plate (even).
    #[arg(long)]
    pub rho: Option<u32>,
    /// Absolute Gaussian scale.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Gaussian scale as a multiple of 1/h̄_local of the nodes [default: 1].
    #[arg(long)]
    pub scale_multiple: Option<f64>,
    /// Polynomial tail [default: linear, none for gaussian].
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    /// Output base path of the model.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InvertArgs {
    /// Model base path written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query coordinates, one per row.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output cloud of predicted points.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SphereArgs {
    /// Sample sizes, strictly increasing [default: 10,30,100,300,1000].
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Number of seeds; seeds 0..SEEDS are run [default: 5].
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Eigenmaps affinity scale as a multiple of 1/h̄_local [default: 0.1].
    #[arg(long)]
    pub affinity_multiple: Option<f64>,
    /// Gaussian RBF scale multiples [default: 0.25,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub gaussian: Option<Vec<f64>>,
    /// Shepard scale multiples [default: 0.25,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub shepard: Option<Vec<f64>>,
    /// Cubic tail [default: linear].
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    /// Neighbours per local fit [default: 200].
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningArgs {
    /// Sweep against node count (vs_fill) or Gaussian scale (vs_epsilon).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Ambient dimension D of the sphere S^(D-1) [default: 5].
    #[arg(long)]
    pub ambient_dim: Option<usize>,
    /// Node counts for vs_fill [default: 10,20,50,100,200,500,1000].
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Gaussian scale for vs_fill [default: 0.01].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Node count for vs_epsilon [default: 200].
    #[arg(long)]
    pub n_fixed: Option<usize>,
    /// Gaussian scales for vs_epsilon [default: 13 values from 1e-2 to 1e1].
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScanArgs {
    /// Training cloud (.csv or .pcld).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Affinity scale as a multiple of 1/h̄_local [default: 1].
    #[arg(long)]
    pub affinity_multiple: Option<f64>,
    /// Embedding dimension [default: 3].
    #[arg(long)]
    pub d: Option<usize>,
    /// Eigenvector index (0 is the trivial one) [default: 1].
    #[arg(long)]
    pub l: Option<usize>,
    /// Zero kernel entries below this value [default: 0.3 unless --knn].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Keep the k largest entries per row instead (diagnostic only).
    #[arg(long)]
    pub knn: Option<usize>,
    /// Segment start [default: componentwise minimum of the cloud].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub from: Option<Vec<f64>>,
    /// Segment end [default: componentwise maximum of the cloud].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub to: Option<Vec<f64>>,
    /// Equispaced queries along the segment [default: 1000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output profile CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TableArgs {
    /// Dataset values (repeatable); each is embedded unless --coords is given.
    #[arg(long)]
    pub data: Option<Vec<PathBuf>>,
    /// Precomputed coordinates, one per --data in the same order.
    #[arg(long)]
    pub coords: Option<Vec<PathBuf>>,
    /// Add a synthetic S⁴ → R¹⁰ dataset with this many points.
    #[arg(long)]
    pub sphere: Option<usize>,
    /// Seed of the synthetic dataset [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding dimension for --data without --coords.
    #[arg(long)]
    pub d: Option<usize>,
    /// Eigenmaps affinity multiple [default: 1 for --data, 0.1 for --sphere].
    #[arg(long)]
    pub affinity_multiple: Option<f64>,
    /// Scale --data rows to unit length before embedding.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unit_normalize: Option<bool>,
    /// Gaussian RBF scale multiples [default: 0.25,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub gaussian: Option<Vec<f64>>,
    /// Shepard scale multiples [default: 0.25,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub shepard: Option<Vec<f64>>,
    /// Cubic tail [default: linear].
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    /// Neighbours per local fit [default: 200].
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// Output table CSV; a JSON copy goes to <out>.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli, outputs: &mut Outputs) -> Result<(), CliError> {
    let config = cli.config.as_deref().map(read_config).transpose()?;
    match cli.command {
        Command::Sample(a) => commands::sample(config::merge(a, config)?, outputs),
        Command::Embed(a) => commands::embed(config::merge(a, config)?, outputs),
        Command::Fit(a) => commands::fit(config::merge(a, config)?, outputs),
        Command::Invert(a) => commands::invert(config::merge(a, config)?, outputs),
        Command::Sphere(a) => commands::sphere(config::merge(a, config)?, outputs),
        Command::Conditioning(a) => commands::conditioning(config::merge(a, config)?, outputs),
        Command::NystromScan(a) => commands::nystrom_scan(config::merge(a, config)?, outputs),
        Command::LooTable(a) => commands::loo_table(config::merge(a, config)?, outputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let name = cli.command.name();
    let mut outputs = Outputs::default();
    match run(cli, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.cleanup();
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => {
                    let mut cmd = Cli::command();
                    cmd.build();
                    if let Some(sub) = cmd.find_subcommand_mut(name) {
                        eprintln!("\n{}", sub.render_usage());
                    }
                    ExitCode::from(2)
                }
                CliError::Failed(_) => ExitCode::from(1),
            }
        }
    }
}
