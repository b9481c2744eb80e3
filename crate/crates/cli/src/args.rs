use std::path::PathBuf;

use bayesdid::effects::HyperSampling;
use bayesdid::tipping::CrossingBound;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bayesdid", version, about = "Bayesian difference-in-differences with AR(1) deviations from parallel trends")]
pub struct Cli {
    /// Worker threads for chains and sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the TWFE model and report the parallel-trends ATT.
    Fit(RunArgs),
    /// ATT under one regime or all table regimes.
    Sensitivity(RunArgs),
    /// Empirical-Bayes AR(1) fit to the pre-treatment violation series.
    Eb(RunArgs),
    /// Sweep the long-run deviation mean and locate the tipping point.
    Tipping(RunArgs),
    /// Generate a synthetic panel with known truth.
    Simulate(SimulateArgs),
    /// List the builtin prior regimes.
    Regimes(RegimesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HyperSamplingArg {
    Direct,
    Hmc,
}

impl From<HyperSamplingArg> for HyperSampling {
    fn from(a: HyperSamplingArg) -> Self {
        match a {
            HyperSamplingArg::Direct => HyperSampling::Direct,
            HyperSamplingArg::Hmc => HyperSampling::Hmc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Upper,
    Lower,
}

impl From<BoundArg> for CrossingBound {
    fn from(a: BoundArg) -> Self {
        match a {
            BoundArg::Upper => CrossingBound::Upper,
            BoundArg::Lower => CrossingBound::Lower,
        }
    }
}

/// Options shared by the analysis commands. Each overrides the matching
/// key of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Panel CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "onset")]
    pub onset_period: Option<usize>,
    /// Restrict the analysis to one stratum.
    #[arg(long)]
    pub stratum: Option<String>,
    /// Log-transform outcomes (the default).
    #[arg(long, value_name = "BOOL")]
    pub log_transform: Option<bool>,
    /// Use outcomes on the raw scale; same as `--log-transform false`.
    #[arg(long)]
    pub raw: bool,
    /// Builtin regime name, or `all`.
    #[arg(long)]
    pub regime: Option<String>,
    /// Fix the observation noise sd instead of estimating it.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub coefficient_prior_sd: Option<f64>,
    #[arg(long)]
    pub noise_prior_scale: Option<f64>,
    #[arg(long, value_enum)]
    pub hyper_sampling: Option<HyperSamplingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub target_acceptance: Option<f64>,
    #[arg(long)]
    pub max_tree_depth: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub eta_points: Option<usize>,
    /// Comma-separated explicit grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub bound: Option<BoundArg>,
    /// Untreated volume in ounces for the tipping interpretation.
    #[arg(long)]
    pub baseline_ounces: Option<f64>,
    #[arg(long = "output", short)]
    pub output_dir: Option<PathBuf>,
    /// Exit with code 3 when any split-R̂ reaches 1.01.
    #[arg(long)]
    pub strict_convergence: bool,
    #[arg(long)]
    pub unit_column: Option<String>,
    #[arg(long)]
    pub group_column: Option<String>,
    #[arg(long)]
    pub stratum_column: Option<String>,
    #[arg(long)]
    pub period_column: Option<String>,
    #[arg(long)]
    pub outcome_column: Option<String>,
    /// Comma-separated strata; rows outside the list are rejected.
    #[arg(long, value_delimiter = ',')]
    pub allowed_strata: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// TOML synthetic panel spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "output", short)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RegimesArgs {
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}
