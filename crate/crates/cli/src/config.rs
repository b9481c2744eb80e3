//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use bayesdid::calibration::{lookup_regime, TABLE_REGIMES};
use bayesdid::effects::HyperSampling;
use bayesdid::tipping::{linear_grid, CrossingBound, DEFAULT_GRID_POINTS};
use bayesdid::{ColumnMapping, NoiseModel, PriorRegime, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::args::RunArgs;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_acceptance: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            chains: d.chains,
            warmup: d.warmup,
            draws: d.draws,
            target_acceptance: d.target_acceptance,
            max_tree_depth: d.max_tree_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TippingSection {
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    pub eta_points: Option<usize>,
    /// Explicit grid; takes precedence over the range.
    pub grid: Option<Vec<f64>>,
    pub bound: CrossingBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub columns: ColumnMapping,
    pub onset_period: Option<usize>,
    pub stratum: Option<String>,
    pub log_transform: bool,
    /// A builtin regime name, or `all` for every table regime.
    pub regime: Option<String>,
    /// A full regime definition; wins over `regime`.
    pub regime_inline: Option<PriorRegime>,
    /// Known observation noise sd; estimated when absent.
    pub noise_sd: Option<f64>,
    pub coefficient_prior_sd: f64,
    pub noise_prior_scale: f64,
    pub hyper_sampling: HyperSampling,
    pub seed: Option<u64>,
    pub sampler: SamplerSection,
    pub tipping: TippingSection,
    pub baseline_ounces: Option<f64>,
    pub output_dir: PathBuf,
    pub strict_convergence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            columns: ColumnMapping::default(),
            onset_period: None,
            stratum: None,
            log_transform: true,
            regime: None,
            regime_inline: None,
            noise_sd: None,
            coefficient_prior_sd: bayesdid::LinearModelSpec::DEFAULT_COEFFICIENT_PRIOR_SD,
            noise_prior_scale: bayesdid::LinearModelSpec::DEFAULT_NOISE_PRIOR_SCALE,
            hyper_sampling: HyperSampling::Direct,
            seed: None,
            sampler: SamplerSection::default(),
            tipping: TippingSection::default(),
            baseline_ounces: None,
            output_dir: PathBuf::from("out"),
            strict_convergence: false,
        }
    }
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

impl RunConfig {
    /// Loads `args.config` if given, then applies every flag that was set.
    pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = match &args.config {
            Some(path) => read_toml(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(args.data.clone().map(Some) => cfg.data);
        set!(args.onset_period.map(Some) => cfg.onset_period);
        set!(args.stratum.clone().map(Some) => cfg.stratum);
        set!(args.log_transform => cfg.log_transform);
        if args.raw {
            cfg.log_transform = false;
        }
        set!(args.regime.clone().map(Some) => cfg.regime);
        set!(args.noise_sd.map(Some) => cfg.noise_sd);
        set!(args.coefficient_prior_sd => cfg.coefficient_prior_sd);
        set!(args.noise_prior_scale => cfg.noise_prior_scale);
        set!(args.hyper_sampling.map(HyperSampling::from) => cfg.hyper_sampling);
        set!(args.seed.map(Some) => cfg.seed);
        set!(args.chains => cfg.sampler.chains);
        set!(args.warmup => cfg.sampler.warmup);
        set!(args.draws => cfg.sampler.draws);
        set!(args.target_acceptance => cfg.sampler.target_acceptance);
        set!(args.max_tree_depth => cfg.sampler.max_tree_depth);
        set!(args.eta_min.map(Some) => cfg.tipping.eta_min);
        set!(args.eta_max.map(Some) => cfg.tipping.eta_max);
        set!(args.eta_points.map(Some) => cfg.tipping.eta_points);
        set!(args.eta_grid.clone().map(Some) => cfg.tipping.grid);
        set!(args.bound.map(CrossingBound::from) => cfg.tipping.bound);
        set!(args.baseline_ounces.map(Some) => cfg.baseline_ounces);
        set!(args.output_dir => cfg.output_dir);
        if args.strict_convergence {
            cfg.strict_convergence = true;
        }
        set!(args.unit_column => cfg.columns.unit_id);
        set!(args.group_column => cfg.columns.group);
        set!(args.stratum_column => cfg.columns.stratum);
        set!(args.period_column => cfg.columns.period);
        set!(args.outcome_column => cfg.columns.outcome);
        set!(args.allowed_strata.clone().map(Some) => cfg.columns.allowed_strata);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Input("a seed is required (set `seed` in the config or pass --seed)".into()))
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        let s = &self.sampler;
        let config = SamplerConfig {
            chains: s.chains,
            warmup: s.warmup,
            draws: s.draws,
            seed: self.seed()?,
            target_acceptance: s.target_acceptance,
            max_tree_depth: s.max_tree_depth,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Input("no data file given (set `data` or pass --data)".into()))
    }

    pub fn onset(&self) -> Result<usize, CliError> {
        self.onset_period
            .ok_or_else(|| CliError::Input("onset period is required (set `onset_period` or pass --onset)".into()))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        match self.noise_sd {
            None => Ok(NoiseModel::Estimated),
            Some(sd) if sd > 0.0 => Ok(NoiseModel::Fixed { sd }),
            Some(sd) => Err(CliError::Input(format!("noise_sd must be positive, got {sd}"))),
        }
    }

    /// The regimes a sensitivity run covers.
    pub fn regimes(&self) -> Result<Vec<PriorRegime>, CliError> {
        if let Some(r) = &self.regime_inline {
            return Ok(vec![r.clone()]);
        }
        match self.regime.as_deref() {
            None | Some("all") => Ok(TABLE_REGIMES.iter().map(|n| lookup_regime(n).expect("builtin")).collect()),
            Some(name) => Ok(vec![named_regime(name)?]),
        }
    }

    /// The single regime a tipping sweep uses; `Fully-1` when unset.
    pub fn single_regime(&self) -> Result<PriorRegime, CliError> {
        if let Some(r) = &self.regime_inline {
            return Ok(r.clone());
        }
        match self.regime.as_deref() {
            None => Ok(lookup_regime("Fully-1").expect("builtin")),
            Some("all") => Err(CliError::Input("a tipping sweep needs a single regime, not `all`".into())),
            Some(name) => named_regime(name),
        }
    }

    pub fn eta_grid(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.tipping;
        if let Some(grid) = &t.grid {
            return Ok(grid.clone());
        }
        match (t.eta_min, t.eta_max) {
            (Some(lo), Some(hi)) => Ok(linear_grid(lo, hi, t.eta_points.unwrap_or(DEFAULT_GRID_POINTS))?),
            _ => Err(CliError::Input(
                "tipping needs an eta range (`tipping.eta_min`/`eta_max` or --eta-min/--eta-max) or an explicit grid"
                    .into(),
            )),
        }
    }
}

fn named_regime(name: &str) -> Result<PriorRegime, CliError> {
    lookup_regime(name).ok_or_else(|| {
        let known: Vec<String> = bayesdid::calibration::builtin_regimes().into_keys().collect();
        CliError::Input(format!("unknown regime `{name}`; builtin regimes are {}", known.join(", ")))
    })
}
