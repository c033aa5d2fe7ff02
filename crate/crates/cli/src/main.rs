//! Command-line front end: data generation, training, interpolation, evaluation
//! and plotting, with flat key-value config files and per-command manifests.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<scoregeo::Error> for CliError {
    fn from(e: scoregeo::Error) -> Self {
        use scoregeo::Error as E;
        match e {
            E::NonFinite(_) | E::Diverged { .. } | E::ZeroDensity { .. } | E::Antipodal { .. } | E::NegativeVariance(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "scoregeo", version, about = "Geodesic interpolation in the noise space of a 2D diffusion model")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; every component derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for outputs and manifests.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample the C-shaped dataset.
    GenerateData(DataArgs),
    /// Train the noise predictor.
    Train(TrainArgs),
    /// Interpolate between two data points.
    Interpolate(InterpolateArgs),
    /// Compare interpolation methods on random endpoint pairs.
    Evaluate(EvaluateArgs),
    /// Render samples and path CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub semi_axis_x: Option<f64>,
    #[arg(long)]
    pub semi_axis_y: Option<f64>,
    #[arg(long)]
    pub wedge_half_angle_deg: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_init: Option<f64>,
    #[arg(long)]
    pub lr_final: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct GeodesicArgs {
    #[arg(long)]
    pub geodesic_iterations: Option<usize>,
    #[arg(long)]
    pub geodesic_lr: Option<f64>,
    /// Anneal the step size to this floor with a cosine schedule.
    #[arg(long)]
    pub geodesic_lr_floor: Option<f64>,
    /// `slerp` or `lerp`.
    #[arg(long)]
    pub geodesic_init: Option<String>,
    #[arg(long)]
    pub geodesic_tolerance: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub tau_fraction: Option<f64>,
    #[arg(long)]
    pub segments: Option<usize>,
    /// `tau` (marginal at the interpolation timestep) or `clean`.
    #[arg(long)]
    pub density_convention: Option<String>,
    #[arg(long)]
    pub reference_samples: Option<usize>,
    #[command(flatten)]
    pub geodesic: GeodesicArgs,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Start point `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// End point `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    /// lerp, slerp, density, jacobian, jacobian-reg:<lambda> or euclidean.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write an SVG figure here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub min_separation_deg: Option<f64>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated path CSVs; defaults to every pair-0 path of an evaluation.
    #[arg(long)]
    pub paths: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
