//! Synthetic two-group panels with known truth.
//!
//! The treated mean at period `t` is
//! `trend(t) + offset + Σ_{s≤min(t, g−1)} δ_s + Σ_{s=g}^{t} ξ_s + att·1{t ≥ g}`,
//! so `δ` enters the pre-period first differences and `ξ` the post-period
//! ones, anchored at `ξ_{g−1} = 0`. Each observation adds independent
//! Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ar1::{self, Ar1Params};
use crate::error::{Error, Result};
use crate::panel::{Group, PanelDataset, PanelObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_periods: usize,
    pub onset_period: usize,
    pub true_att: f64,
    /// Control-group means per period; `None` gives `5 + 0.05·t`.
    pub control_trend: Option<Vec<f64>>,
    pub group_offset: f64,
    /// `δ_2, …, δ_{g−1}`, added to the treated first differences.
    pub pre_deviations: Option<Vec<f64>>,
    pub post_xi_params: Option<Ar1Params>,
    pub cell_noise_sd: f64,
    pub units_per_group: usize,
    pub stratum: String,
    /// Write `exp(outcome)` so that a log-scale fit sees the generated means.
    pub exponentiate: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_periods: 10,
            onset_period: 6,
            true_att: -0.5,
            control_trend: None,
            group_offset: 0.3,
            pre_deviations: None,
            post_xi_params: None,
            cell_noise_sd: 0.05,
            units_per_group: 4,
            stratum: "all".into(),
            exponentiate: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub true_att: f64,
    /// Noise-free cell means on the model scale, indexed by period − 1.
    pub control_means: Vec<f64>,
    pub treated_means: Vec<f64>,
    /// `δ_2, …, δ_{g−1}` (zeros when none were injected).
    pub pre_deviations: Vec<f64>,
    /// Realized `ξ_g, …, ξ_T` (zeros without `post_xi_params`).
    pub xi: Vec<f64>,
    pub cumulative_xi: Vec<f64>,
}

impl GroundTruth {
    /// Treated-minus-counterfactual at `T` implied by the truth, including
    /// the deviations.
    pub fn parallel_trends_total(&self) -> f64 {
        self.true_att + self.cumulative_xi.last().copied().unwrap_or(0.0)
    }
}

const XI_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("synthetic panel: {m}")));
        let (t, g) = (self.num_periods, self.onset_period);
        if !(2 <= g && g <= t) {
            return bad(format!("need 2 <= onset ({g}) <= periods ({t})"));
        }
        if self.units_per_group < 1 {
            return bad("units_per_group must be >= 1".into());
        }
        if !(self.cell_noise_sd >= 0.0) {
            return bad("cell_noise_sd must be >= 0".into());
        }
        if let Some(trend) = &self.control_trend {
            if trend.len() != t {
                return bad(format!("control_trend has {} entries for {t} periods", trend.len()));
            }
        }
        if let Some(d) = &self.pre_deviations {
            if d.len() != g - 2 {
                return bad(format!("pre_deviations needs {} entries, got {}", g - 2, d.len()));
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<(PanelDataset, GroundTruth)> {
    spec.validate()?;
    let (t_max, g) = (spec.num_periods, spec.onset_period);
    let trend: Vec<f64> = match &spec.control_trend {
        Some(v) => v.clone(),
        None => (1..=t_max).map(|t| 5.0 + 0.05 * t as f64).collect(),
    };
    let delta = spec.pre_deviations.clone().unwrap_or_else(|| vec![0.0; g - 2]);
    let horizon = t_max - g + 1;
    let traj = match &spec.post_xi_params {
        Some(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(XI_STREAM);
            ar1::simulate(p, horizon, 0.0, &mut rng)
        }
        None => ar1::replay(&Ar1Params::new(0.0, 0.0, 0.0), 0.0, vec![0.0; horizon]),
    };

    let mut treated = Vec::with_capacity(t_max);
    let mut drift = 0.0;
    for t in 1..=t_max {
        if (2..g).contains(&t) {
            drift += delta[t - 2];
        }
        let post = if t >= g { traj.cumulative[t - g] + spec.true_att } else { 0.0 };
        treated.push(trend[t - 1] + spec.group_offset + drift + post);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(NOISE_STREAM);
    let mut rows = Vec::with_capacity(2 * spec.units_per_group * t_max);
    for (group, means) in [(Group::Control, &trend), (Group::Treated, &treated)] {
        for u in 0..spec.units_per_group {
            for t in 1..=t_max {
                let z: f64 = rng.sample(StandardNormal);
                let y = means[t - 1] + spec.cell_noise_sd * z;
                rows.push(PanelObservation {
                    unit_id: format!("{}{}", if group.is_treated() { "t" } else { "c" }, u + 1),
                    group,
                    stratum: spec.stratum.clone(),
                    period: t,
                    outcome: if spec.exponentiate { y.exp() } else { y },
                });
            }
        }
    }
    let panel = PanelDataset::new(rows, g, false)?;
    let truth = GroundTruth {
        true_att: spec.true_att,
        control_means: trend,
        treated_means: treated,
        pre_deviations: delta,
        xi: traj.xi,
        cumulative_xi: traj.cumulative,
    };
    Ok((panel, truth))
}
