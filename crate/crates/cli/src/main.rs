mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Fast-slow systems with alpha-stable noise: simulation, reduction and checks.
#[derive(Debug, Parser)]
#[command(name = "fastslow", version)]
struct Cli {
    /// Worker threads for chunked ensembles (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for CSV artifacts [default: the config's output_dir, else fastslow-out].
    #[arg(long, global = true, env = "FASTSLOW_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the empirical CF of stable increments with the exact CF.
    NoiseValidate(NoiseArgs),
    /// Run one model and write series, density, AF and CF artifacts.
    Simulate(SimulateArgs),
    /// Compare two runs (from CSV files or simulated here).
    Compare(CompareArgs),
    /// Tabulate the asymptotic CF integral against quadrature over an epsilon sweep.
    CfCheck(CfCheckArgs),
    /// Sample sizes for a target tail probability, with a wall-clock estimate.
    Plan(PlanArgs),
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Time step the increments cover.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 8)]
    pub chunks: usize,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub k_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub k_max: f64,
    #[arg(long, default_value_t = 41)]
    pub k_points: usize,
    /// Largest allowed pointwise CF error.
    #[arg(long, default_value_t = 0.005)]
    pub tolerance: f64,
    /// Allowed relative deviation of the sample variance from `2 dt` when alpha = 2.
    #[arg(long, default_value_t = 0.01)]
    pub variance_tolerance: f64,
    #[arg(long)]
    pub allow_unsupported_alpha: bool,
}

#[derive(Debug, Args, Default)]
pub struct SystemArgs {
    /// Experiment file with [system], [run] and [analyses] sections; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// linear, nonlinear1, nonlinear2, nonlinear3 or custom.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    /// Overrides gamma = 1 - 1/alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Custom coefficient expressions in `x`.
    #[arg(long, allow_hyphen_values = true)]
    pub f1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub f2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g2: Option<String>,
    /// Permit 0 < alpha < 1; outputs are watermarked as exploratory.
    #[arg(long)]
    pub allow_unsupported_alpha: bool,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulation step; defaults per system and model.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// euler, predictor_corrector, marcus_closed or marcus_numeric.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Independent chunks; part of the result, unlike --threads.
    #[arg(long)]
    pub chunks: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    /// (L) anchor: stationary, trajectory or a slow state.
    #[arg(long, allow_hyphen_values = true)]
    pub anchor: Option<String>,
    /// Use 10^8 samples unless --n is given.
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// full, a, l or nplus.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated subset of density, af, cf_check, compare.
    #[arg(long, value_delimiter = ',')]
    pub analyses: Option<Vec<String>>,
    /// Second model for the compare analysis.
    #[arg(long)]
    pub compare_with: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Histogram range `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Two models to simulate and compare, e.g. `full,nplus`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub models: Option<Vec<String>>,
    /// Two `t,value` series files to compare instead of simulating.
    #[arg(long, num_args = 2, conflicts_with = "models")]
    pub series: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub ks_threshold: Option<f64>,
    #[arg(long)]
    pub af_threshold: Option<f64>,
    /// Decorrelation stride for the KS subsample.
    #[arg(long, default_value_t = fastslow::stats::DEFAULT_STRIDE)]
    pub stride: usize,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
    #[arg(long)]
    pub af_max_lag: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CfCheckArgs {
    #[arg(long, default_value_t = 1.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub l: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub f2: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub g2: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub g1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y0: f64,
    /// Defaults to 1 - 1/alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Time; in the `eps` regime this is a multiple of epsilon.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// `one` (t = O(1)) or `eps` (t = O(epsilon)).
    #[arg(long, default_value = "one")]
    pub regime: String,
    /// `lambda` or `gamma`.
    #[arg(long, default_value = "lambda")]
    pub kernel: String,
    /// `leading`, `first` or `published`.
    #[arg(long, default_value = "leading")]
    pub remainder: String,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
    pub epsilons: Vec<f64>,
    /// Fail (exit 1) unless the observed order is within --order-tolerance of this.
    #[arg(long)]
    pub expect_order: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub order_tolerance: f64,
    /// Fail (exit 1) if any absolute error exceeds this.
    #[arg(long)]
    pub max_error: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Smallest bin probability to resolve.
    #[arg(long, default_value_t = 1e-5)]
    pub pi: f64,
    /// Absolute error allowed on that probability.
    #[arg(long, default_value_t = 1e-5)]
    pub omega: f64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.01)]
    pub sample_dt: f64,
    /// Time between effectively independent samples.
    #[arg(long, default_value_t = 1.0)]
    pub decorrelation: f64,
    /// System and model used for the speed probe.
    #[arg(long, default_value = "linear")]
    pub system: String,
    #[arg(long, default_value = "full")]
    pub model: String,
    /// Samples simulated by the probe; 0 skips it.
    #[arg(long, default_value_t = 2000)]
    pub probe_samples: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    }
    let out = cli.out.as_deref();
    let result = match cli.command {
        Command::NoiseValidate(a) => commands::noise_validate(&a, out),
        Command::Simulate(a) => commands::simulate(&a, out),
        Command::Compare(a) => commands::compare(&a, out),
        Command::CfCheck(a) => commands::cf_check(&a, out),
        Command::Plan(a) => commands::plan(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
