//! ATT posteriors under parallel trends and under AR(1) deviations.
//!
//! Per-period effects use the group-mean plug-in
//! `Ψ_t = (m₁(t) − m₁(g−1)) − (m₀(t) − m₀(g−1))`, where each cell mean is
//! drawn as `m_a(t) ~ N(Ȳ_a(t), σ²/n_{a,t})` with `σ` taken from the
//! matching TWFE posterior draw. Deviations are composed afterwards: every
//! draw gets its own trajectory `ξ_g, …, ξ_T` from the regime's prior and
//! `Ψ_t − Σ_{s=g}^{t} ξ_s` is the violation-adjusted effect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ar1::{self, Ar1Params};
use crate::calibration::{realize_regime, EbEstimate, HyperSpec, PriorRegime};
use crate::design::{period_label, GROUP, INTERCEPT, TREATED_POST};
use crate::error::{Error, Result};
use crate::model::NOISE_SD;
use crate::panel::PanelDataset;
use crate::sampler::{self, PosteriorDraws, SamplerConfig};
use crate::stats::Summary;

pub const OUNCES_PER_CAN: f64 = 12.0;

const PLUGIN_STREAM: u64 = 0x5eed_0001;
const HYPER_STREAM: u64 = 0x5eed_0002;
const NOISE_STREAM: u64 = 0x5eed_0003;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Observed group means and per-draw counterfactual paths.
///
/// Per-draw vectors run over [`AttPosterior::periods`], i.e. `g − 1, …, T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSet {
    pub observed_treated: Vec<f64>,
    pub observed_control: Vec<f64>,
    pub counterfactual_pt: Vec<Vec<f64>>,
    /// Counterfactual plus cumulative ξ; empty until deviations are composed.
    pub modified: Vec<Vec<f64>>,
}

/// How fully Bayesian hyperparameters are realized per posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperSampling {
    /// One independent prior draw per posterior draw.
    #[default]
    Direct,
    /// Draws from an HMC run on the prior; needs as many draws as the base.
    Hmc,
}

/// What went into a violation composition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationInfo {
    pub regime: String,
    pub hyper: HyperSpec,
    pub nonstationary_draws: usize,
    pub warning: Option<String>,
    /// Diagnostics of the hyperparameter run, when [`HyperSampling::Hmc`].
    #[serde(skip)]
    pub hyper_draws: Option<PosteriorDraws>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttPosterior {
    /// `g − 1, …, T`; index 0 is the anchor period where `Ψ ≡ 0`.
    pub periods: Vec<usize>,
    /// Pooled ATT, the TWFE `β` draws.
    pub pooled: Vec<f64>,
    /// `per_period_pt[d][k]` is `Ψ` at `periods[k]` for draw `d`.
    pub per_period_pt: Vec<Vec<f64>>,
    pub per_period_violation: Vec<Vec<f64>>,
    /// Cumulative ξ per draw and period (anchor entry 0).
    pub cumulative_xi: Vec<Vec<f64>>,
    pub total_pt: Vec<f64>,
    pub total_violation: Vec<f64>,
    pub trends: TrendSet,
    pub violation: Option<ViolationInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodSummary {
    pub period: usize,
    pub pt: Summary,
    pub violation: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttSummary {
    pub pooled: Summary,
    pub total_pt: Summary,
    pub total_violation: Option<Summary>,
    pub per_period: Vec<PeriodSummary>,
}

fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

impl AttPosterior {
    pub fn num_draws(&self) -> usize {
        self.pooled.len()
    }

    /// Number of post-treatment periods `T − g + 1`.
    pub fn horizon(&self) -> usize {
        self.periods.len() - 1
    }

    pub fn has_violation(&self) -> bool {
        self.violation.is_some()
    }

    pub fn pt_draws_at(&self, period: usize) -> Option<Vec<f64>> {
        let k = self.periods.iter().position(|&p| p == period)?;
        Some(column(&self.per_period_pt, k))
    }

    pub fn violation_draws_at(&self, period: usize) -> Option<Vec<f64>> {
        let k = self.periods.iter().position(|&p| p == period)?;
        (!self.per_period_violation.is_empty()).then(|| column(&self.per_period_violation, k))
    }

    pub fn summary(&self) -> AttSummary {
        let has_v = self.has_violation();
        AttSummary {
            pooled: Summary::from_draws(&self.pooled),
            total_pt: Summary::from_draws(&self.total_pt),
            total_violation: has_v.then(|| Summary::from_draws(&self.total_violation)),
            per_period: self
                .periods
                .iter()
                .enumerate()
                .map(|(k, &period)| PeriodSummary {
                    period,
                    pt: Summary::from_draws(&column(&self.per_period_pt, k)),
                    violation: has_v.then(|| Summary::from_draws(&column(&self.per_period_violation, k))),
                })
                .collect(),
        }
    }

    /// Drops any composed deviations, leaving the parallel-trends posterior.
    pub fn parallel_trends_only(&self) -> AttPosterior {
        AttPosterior {
            per_period_violation: Vec::new(),
            cumulative_xi: Vec::new(),
            total_violation: Vec::new(),
            trends: TrendSet {
                modified: Vec::new(),
                ..self.trends.clone()
            },
            violation: None,
            ..self.clone()
        }
    }
}

/// Per-period summaries of a [`TrendSet`] for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub period: usize,
    pub observed_treated: f64,
    pub observed_control: f64,
    pub counterfactual: Option<Summary>,
    pub modified: Option<Summary>,
}

pub fn trend_rows(att: &AttPosterior) -> Vec<TrendRow> {
    let t = &att.trends;
    let first = att.periods[0];
    (1..=t.observed_treated.len())
        .map(|period| {
            let k = period.checked_sub(first).filter(|&k| k < att.periods.len());
            TrendRow {
                period,
                observed_treated: t.observed_treated[period - 1],
                observed_control: t.observed_control[period - 1],
                counterfactual: k.map(|k| Summary::from_draws(&column(&t.counterfactual_pt, k))),
                modified: k
                    .filter(|_| !t.modified.is_empty())
                    .map(|k| Summary::from_draws(&column(&t.modified, k))),
            }
        })
        .collect()
}

fn expected_labels(num_periods: usize) -> Vec<String> {
    let mut labels = vec![INTERCEPT.to_string()];
    labels.extend((2..=num_periods).map(period_label));
    labels.extend([GROUP.to_string(), TREATED_POST.to_string(), NOISE_SD.to_string()]);
    labels
}

/// Parallel-trends ATT posterior from TWFE draws of the same panel.
///
/// `seed` drives the cell-mean perturbations.
pub fn att_parallel_trends(
    data: &PanelDataset,
    stratum: Option<&str>,
    twfe_draws: &PosteriorDraws,
    seed: u64,
) -> Result<AttPosterior> {
    let num_periods = data.num_periods();
    let g = data.onset_period();
    let labels = expected_labels(num_periods);
    if twfe_draws.parameter_names != labels {
        return Err(Error::Mismatch(format!(
            "draws {:?} do not match a {num_periods}-period TWFE design",
            twfe_draws.parameter_names
        )));
    }
    let (control, treated) = data.group_means(stratum)?;
    let beta_idx = labels.len() - 2;
    let sigma_idx = labels.len() - 1;
    let periods: Vec<usize> = (g - 1..=num_periods).collect();
    let mut rng = stream(seed, PLUGIN_STREAM);
    let n = twfe_draws.total_draws();
    let mut pooled = Vec::with_capacity(n);
    let mut per_period = Vec::with_capacity(n);
    let mut counterfactual = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    for draw in twfe_draws.iter_draws() {
        pooled.push(draw[beta_idx]);
        let sigma = draw[sigma_idx];
        let mut cell = |series: &crate::panel::GroupMeanSeries, t: usize| {
            let z: f64 = rng.sample(StandardNormal);
            series.at(t) + sigma / (series.counts[t - 1] as f64).sqrt() * z
        };
        let mut m0 = Vec::with_capacity(periods.len());
        let mut m1 = Vec::with_capacity(periods.len());
        for &t in &periods {
            m0.push(cell(&control, t));
            m1.push(cell(&treated, t));
        }
        let psi: Vec<f64> = (0..periods.len())
            .map(|k| if k == 0 { 0.0 } else { (m1[k] - m1[0]) - (m0[k] - m0[0]) })
            .collect();
        let cf: Vec<f64> = (0..periods.len()).map(|k| m1[0] + m0[k] - m0[0]).collect();
        total.push(*psi.last().expect("at least one post period"));
        per_period.push(psi);
        counterfactual.push(cf);
    }
    Ok(AttPosterior {
        periods,
        pooled,
        per_period_pt: per_period,
        per_period_violation: Vec::new(),
        cumulative_xi: Vec::new(),
        total_pt: total,
        total_violation: Vec::new(),
        trends: TrendSet {
            observed_treated: treated.values,
            observed_control: control.values,
            counterfactual_pt: counterfactual,
            modified: Vec::new(),
        },
        violation: None,
    })
}

/// Composes the regime's deviation prior with the parallel-trends draws.
///
/// Uses `config.seed` for the hyperparameter and innovation streams. The
/// innovation stream does not depend on the hyperparameters, so two calls
/// that differ only in a point-mass η share their noise.
pub fn att_with_violation(
    base: &AttPosterior,
    regime: &PriorRegime,
    eb: Option<&EbEstimate>,
    config: &SamplerConfig,
) -> Result<AttPosterior> {
    let hyper = realize_regime(regime, eb)?;
    compose(base, &regime.name, &hyper, HyperSampling::Direct, config)
}

pub fn compose(
    base: &AttPosterior,
    label: &str,
    hyper: &HyperSpec,
    method: HyperSampling,
    config: &SamplerConfig,
) -> Result<AttPosterior> {
    let n = base.num_draws();
    let horizon = base.horizon();
    if base.per_period_pt.len() != n
        || base.per_period_pt.iter().any(|r| r.len() != horizon + 1)
        || base.trends.counterfactual_pt.len() != n
    {
        return Err(Error::Mismatch("parallel-trends draws have inconsistent horizons".into()));
    }
    let hyper_draws = match (method, hyper.prior_target()) {
        (HyperSampling::Hmc, Some(target)) => {
            let draws = sampler::sample(&target, &target.transforms(), target.names(), config)?;
            if draws.total_draws() != n {
                return Err(Error::Mismatch(format!(
                    "hyperparameter run has {} draws, parallel-trends posterior has {n}",
                    draws.total_draws()
                )));
            }
            Some((target, draws))
        }
        _ => None,
    };
    let mut hyper_rng = stream(config.seed, HYPER_STREAM);
    let mut noise_rng = stream(config.seed, NOISE_STREAM);
    let mut params_at = |d: usize| -> Ar1Params {
        match &hyper_draws {
            Some((target, draws)) => target.params(draws.draw(d / draws.num_draws(), d % draws.num_draws())),
            None => hyper.draw(&mut hyper_rng),
        }
    };

    let mut out = base.parallel_trends_only();
    out.cumulative_xi.reserve(n);
    out.per_period_violation.reserve(n);
    out.trends.modified.reserve(n);
    let mut nonstationary = 0;
    for d in 0..n {
        let params = params_at(d);
        let traj = ar1::simulate(&params, horizon, 0.0, &mut noise_rng);
        if traj.nonstationary {
            nonstationary += 1;
        }
        let mut cum = Vec::with_capacity(horizon + 1);
        cum.push(0.0);
        cum.extend_from_slice(&traj.cumulative);
        let psi = &base.per_period_pt[d];
        let cf = &base.trends.counterfactual_pt[d];
        out.per_period_violation.push(psi.iter().zip(&cum).map(|(p, c)| p - c).collect());
        out.trends.modified.push(cf.iter().zip(&cum).map(|(f, c)| f + c).collect());
        out.total_violation.push(psi[horizon] - cum[horizon]);
        out.cumulative_xi.push(cum);
    }
    let warning = (nonstationary > 0).then(|| {
        format!("{nonstationary} of {n} deviation draws used a nonstationary rho (|rho| >= 1); extreme values are expected")
    });
    out.violation = Some(ViolationInfo {
        regime: label.to_string(),
        hyper: *hyper,
        nonstationary_draws: nonstationary,
        warning,
        hyper_draws: hyper_draws.map(|(_, d)| d),
    });
    Ok(out)
}

/// Multiplicative change in untreated volume implied by a log shift `eta`.
pub fn fold_change(eta: f64) -> f64 {
    eta.abs().exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeInterpretation {
    pub extra_ounces: f64,
    pub extra_cans: f64,
}

pub fn volume_interpretation(eta: f64, baseline_ounces: f64) -> Result<VolumeInterpretation> {
    if !(baseline_ounces > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "baseline ounces must be positive, got {baseline_ounces}"
        )));
    }
    let extra_ounces = baseline_ounces * (fold_change(eta) - 1.0);
    Ok(VolumeInterpretation {
        extra_ounces,
        extra_cans: extra_ounces / OUNCES_PER_CAN,
    })
}
