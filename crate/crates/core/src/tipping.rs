//! Tipping-point sweeps over the long-run deviation mean η.
//!
//! Every grid point reuses the same parallel-trends draws and the same
//! innovation stream, so differences along the curve come from η alone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{EbEstimate, PriorRegime};
use crate::design::{build_design, LinearModelSpec};
use crate::effects::{att_parallel_trends, att_with_violation, fold_change, volume_interpretation, AttPosterior};
use crate::error::{Error, Result};
use crate::model::{fit_twfe, NoiseModel};
use crate::panel::PanelDataset;
use crate::sampler::SamplerConfig;
use crate::stats::Summary;

pub const DEFAULT_GRID_POINTS: usize = 41;

/// Which interval bound must cross zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingBound {
    /// For negative effects: the upper bound reaching zero.
    #[default]
    Upper,
    /// For positive effects.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TippingResult {
    pub regime: String,
    pub bound: CrossingBound,
    pub eta_grid: Vec<f64>,
    pub means: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    /// Monte Carlo standard error of each mean.
    pub mc_se: Vec<f64>,
    pub eta_star: Option<f64>,
    pub fold_change_at_star: Option<f64>,
    pub ounces_at_star: Option<f64>,
    pub cans_at_star: Option<f64>,
    /// Untreated volume used for the ounce and can figures, if any.
    pub baseline_ounces: Option<f64>,
}

/// `n` equally spaced points from `lower` to `upper` inclusive.
pub fn linear_grid(lower: f64, upper: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lower < upper) {
        return Err(Error::InvalidConfig(format!(
            "grid needs lower < upper and at least 2 points, got [{lower}, {upper}] with {n}"
        )));
    }
    let step = (upper - lower) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { upper } else { lower + step * i as f64 })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("eta grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("eta grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Lowest-η point where `values` changes sign, linearly interpolated. A
/// grid value of exactly zero counts as a crossing at that point.
pub fn first_crossing(grid: &[f64], values: &[f64]) -> Option<f64> {
    for i in 0..values.len() {
        if values[i] == 0.0 {
            return Some(grid[i]);
        }
        if let Some(&b) = values.get(i + 1) {
            let a = values[i];
            if b != 0.0 && a.signum() != b.signum() {
                return Some(grid[i] + (0.0 - a) * (grid[i + 1] - grid[i]) / (b - a));
            }
        }
    }
    None
}

/// Sweeps η over `eta_grid` on an existing parallel-trends posterior.
pub fn sweep(
    base: &AttPosterior,
    template: &PriorRegime,
    eb: Option<&EbEstimate>,
    eta_grid: &[f64],
    config: &SamplerConfig,
    baseline_ounces: Option<f64>,
    bound: CrossingBound,
) -> Result<TippingResult> {
    check_grid(eta_grid)?;
    if let Some(b) = baseline_ounces {
        volume_interpretation(0.0, b)?;
    }
    let summaries: Vec<Summary> = eta_grid
        .par_iter()
        .map(|&eta| {
            let regime = template.with_fixed_eta(eta);
            att_with_violation(base, &regime, eb, config)
                .map(|v| Summary::from_draws(&v.total_violation))
                .map_err(|e| Error::SweepFailed {
                    eta,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let n = base.num_draws() as f64;
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let lower95: Vec<f64> = summaries.iter().map(|s| s.lower95).collect();
    let upper95: Vec<f64> = summaries.iter().map(|s| s.upper95).collect();
    let mc_se = summaries.iter().map(|s| s.sd / n.sqrt()).collect();
    let crossing = match bound {
        CrossingBound::Upper => &upper95,
        CrossingBound::Lower => &lower95,
    };
    let eta_star = first_crossing(eta_grid, crossing);
    let volume = match (eta_star, baseline_ounces) {
        (Some(e), Some(b)) => Some(volume_interpretation(e, b)?),
        _ => None,
    };
    Ok(TippingResult {
        regime: template.name.clone(),
        bound,
        eta_grid: eta_grid.to_vec(),
        means,
        lower95,
        upper95,
        mc_se,
        eta_star,
        fold_change_at_star: eta_star.map(fold_change),
        ounces_at_star: volume.map(|v| v.extra_ounces),
        cans_at_star: volume.map(|v| v.extra_cans),
        baseline_ounces,
    })
}

/// Fits the parallel-trends posterior on `panel` and sweeps it.
#[allow(clippy::too_many_arguments)]
pub fn sweep_panel(
    panel: &PanelDataset,
    stratum: Option<&str>,
    noise: NoiseModel,
    template: &PriorRegime,
    eb: Option<&EbEstimate>,
    eta_grid: &[f64],
    config: &SamplerConfig,
    baseline_ounces: Option<f64>,
) -> Result<TippingResult> {
    let spec = LinearModelSpec::with_defaults(build_design(panel, stratum)?);
    let draws = fit_twfe(&spec, noise, config)?;
    let base = att_parallel_trends(panel, stratum, &draws, config.seed)?;
    sweep(&base, template, eb, eta_grid, config, baseline_ounces, CrossingBound::Upper)
}

/// Mean ATT should fall as η rises: a positive η is a positive cumulative
/// deviation, which is subtracted from the effect. Each step may rise by at
/// most two combined Monte Carlo standard errors.
pub fn monotonicity_check(result: &TippingResult) -> bool {
    result.means.windows(2).zip(result.mc_se.windows(2)).all(|(m, se)| {
        let tol = 2.0 * (se[0] * se[0] + se[1] * se[1]).sqrt();
        m[1] <= m[0] + tol
    })
}
