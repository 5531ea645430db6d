use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mbridge", version, about = "Martingale Schrödinger bridges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entropic martingale transport between two discrete measures.
    Solve(SolveArgs),
    /// Solve, then check duality, the Schrödinger reduction and the Gibbs form.
    Certify(SolveArgs),
    /// Closed-form bridge between centred Gaussians.
    Gaussian(GaussianArgs),
    /// Simulate the stretched Brownian motion and its Föllmer drift.
    Simulate(SimulateArgs),
    /// Filtering view: posterior-mean paths and σ-invariance checks.
    Filter(FilterArgs),
    /// Entropy and Bass optimizers on the three-point family.
    Threepoint(ThreePointArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Source measure (JSON).
    #[arg(long)]
    pub mu: PathBuf,
    /// Target measure (JSON).
    #[arg(long)]
    pub nu: PathBuf,
    /// Marginal and martingale tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value = "mbridge-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GaussianArgs {
    /// Source covariance: "2" (scalar), "2,3" (diagonal) or "2,0.5;0.5,1" (rows).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "mu")]
    pub sigma0: Option<String>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "nu")]
    pub sigma1: Option<String>,
    /// Source Gaussian as a JSON document, instead of --sigma0.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Number of steps of the schedule grid on [0, 1].
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value = "mbridge-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum Rule {
    Left,
    Stratified,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Gaussian fiber covariance Δ (same syntax as gaussian --sigma0).
    #[arg(long, conflicts_with = "nu")]
    pub delta: Option<String>,
    /// Terminal law of a single fiber, or target of a solved bridge with --mu.
    #[arg(long)]
    pub nu: Option<PathBuf>,
    #[arg(long, requires = "nu")]
    pub mu: Option<PathBuf>,
    /// Starting point of a single fiber, comma separated.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "mu")]
    pub start: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Volatility of the reference Brownian motion.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = Rule::Left)]
    pub rule: Rule,
    /// Energies are accumulated on [0, clip].
    #[arg(long, default_value_t = mbridge::dynamics::DEFAULT_ENERGY_CLIP)]
    pub clip: f64,
    /// Recorded times, comma separated; defaults to 0, 0.1, ..., 1.
    #[arg(long)]
    pub record: Option<String>,
    /// Also run the Euler scheme and compare laws at the recorded times.
    #[arg(long)]
    pub euler: bool,
    /// Number of paths written to paths.csv.
    #[arg(long, default_value_t = 1000)]
    pub csv_paths: usize,
    #[arg(long, default_value = "mbridge-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    /// Signal law (discrete JSON); defaults to the fair coin on {0, 1}.
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Prior mean used as the starting point; defaults to the mean of --nu.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "0.5,1,2")]
    pub sigmas: String,
    /// Information times s at which laws are compared.
    #[arg(long, default_value = "0,1,4")]
    pub checkpoints: String,
    /// Euler step of the Wonham filter (fair-coin law only).
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Observation horizon and grid size for observations.csv.
    #[arg(long, default_value_t = 4.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 400)]
    pub obs_steps: usize,
    #[arg(long, default_value_t = 100)]
    pub csv_paths: usize,
    #[arg(long, default_value = "mbridge-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ThreePointArgs {
    #[arg(long, default_value_t = 0.40)]
    pub p1: f64,
    #[arg(long, default_value_t = 0.46)]
    pub q1: f64,
    #[arg(long, default_value_t = 0.43)]
    pub p2: f64,
    #[arg(long, default_value_t = 0.27)]
    pub q2: f64,
    #[arg(long, default_value = "mbridge-out")]
    pub out: PathBuf,
}
