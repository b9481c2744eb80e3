//! Hamiltonian Monte Carlo with warmup adaptation.
//!
//! Targets implement [`LogDensity`] over their constrained parameters; the
//! sampler moves in unconstrained space through a [`Transform`] per
//! coordinate and adds the log-Jacobian. Chains run in parallel, each with
//! its own ChaCha stream derived from `(seed, chain index)`, so results do
//! not depend on thread scheduling.

mod adapt;
pub mod diagnostics;
mod nuts;
mod transform;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SamplingFailure};
pub use diagnostics::{effective_sample_size, split_rhat, Diagnostic};
pub use transform::Transform;

use adapt::{DualAveraging, Welford, WindowSchedule};
use nuts::{Potential, State};

/// A differentiable log density over constrained parameters.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density (up to a constant) at `position`, writing the gradient
    /// into `grad`. Points outside the support return `-inf`.
    fn log_density(&self, position: &[f64], grad: &mut [f64]) -> f64;
}

/// Split-R̂ threshold used to call a run converged.
pub const RHAT_THRESHOLD: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 0,
            target_acceptance: 0.8,
            max_tree_depth: 10,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidConfig("need at least 2 chains for split-R̂".into()));
        }
        if self.warmup < 1 || self.draws < 1 {
            return Err(Error::InvalidConfig("warmup and draws must be >= 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig("target acceptance must lie in (0, 1)".into()));
        }
        if self.max_tree_depth < 1 {
            return Err(Error::InvalidConfig("max tree depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// The random stream for `chain`, derived from the run seed.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub mean_leapfrog_steps: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub rhat: Diagnostic,
    pub ess: Diagnostic,
}

/// Post-warmup draws indexed `(chain, draw, parameter)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub parameter_names: Vec<String>,
    num_chains: usize,
    num_draws: usize,
    values: Vec<f64>,
    pub diagnostics: Vec<ParameterDiagnostics>,
    pub divergence_count: usize,
    pub chain_stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    /// Builds from `chains[c][d][k]` and computes the diagnostics.
    pub fn from_chains(parameter_names: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let num_chains = chains.len();
        let num_draws = chains.first().map_or(0, Vec::len);
        let dim = parameter_names.len();
        let mut values = Vec::with_capacity(num_chains * num_draws * dim);
        for chain in &chains {
            if chain.len() != num_draws {
                return Err(Error::Mismatch("chains have different lengths".into()));
            }
            for draw in chain {
                if draw.len() != dim {
                    return Err(Error::Mismatch(format!(
                        "draw has {} values for {dim} parameters",
                        draw.len()
                    )));
                }
                values.extend_from_slice(draw);
            }
        }
        let mut draws = PosteriorDraws {
            parameter_names,
            num_chains,
            num_draws,
            values,
            diagnostics: Vec::new(),
            divergence_count: 0,
            chain_stats: Vec::new(),
        };
        draws.compute_diagnostics();
        Ok(draws)
    }

    fn compute_diagnostics(&mut self) {
        self.diagnostics = (0..self.parameter_names.len())
            .map(|k| {
                let chains = self.chains_for(k);
                ParameterDiagnostics {
                    name: self.parameter_names[k].clone(),
                    rhat: split_rhat(&chains).unwrap_or(Diagnostic::Unavailable),
                    ess: effective_sample_size(&chains).unwrap_or(Diagnostic::Unavailable),
                }
            })
            .collect();
    }

    pub fn num_chains(&self) -> usize {
        self.num_chains
    }

    pub fn num_draws(&self) -> usize {
        self.num_draws
    }

    pub fn total_draws(&self) -> usize {
        self.num_chains * self.num_draws
    }

    pub fn dim(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    pub fn draw(&self, chain: usize, draw: usize) -> &[f64] {
        let dim = self.dim();
        let start = (chain * self.num_draws + draw) * dim;
        &self.values[start..start + dim]
    }

    /// All draws in chain-major order; index `c·draws + d`.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim().max(1))
    }

    pub fn chains_for(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.num_chains)
            .map(|c| (0..self.num_draws).map(|d| self.draw(c, d)[param]).collect())
            .collect()
    }

    /// Pooled draws of one parameter.
    pub fn column(&self, param: usize) -> Vec<f64> {
        self.iter_draws().map(|d| d[param]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|k| self.column(k))
    }

    /// Largest finite split-R̂, ignoring degenerate parameters.
    pub fn max_rhat(&self) -> Option<f64> {
        self.diagnostics
            .iter()
            .filter_map(|d| d.rhat.value())
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    pub fn converged(&self) -> bool {
        self.diagnostics
            .iter()
            .all(|d| d.rhat.value().is_none_or(|r| r < RHAT_THRESHOLD))
    }

    /// Re-expresses every draw through `f`, recomputing diagnostics for the
    /// new parameters. Sampler statistics carry over.
    pub fn map_parameters(&self, names: Vec<String>, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let chains = (0..self.num_chains)
            .map(|c| (0..self.num_draws).map(|d| f(self.draw(c, d))).collect())
            .collect();
        let mut mapped = PosteriorDraws::from_chains(names, chains)?;
        mapped.divergence_count = self.divergence_count;
        mapped.chain_stats = self.chain_stats.clone();
        Ok(mapped)
    }
}

struct Unconstrained<'a, M> {
    model: &'a M,
    transforms: &'a [Transform],
}

impl<M: LogDensity> Unconstrained<'_, M> {
    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.transforms).map(|(&x, t)| t.constrain(x)).collect()
    }
}

impl<M: LogDensity> Potential for Unconstrained<'_, M> {
    fn log_density(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut x = Vec::with_capacity(u.len());
        let mut log_jac = 0.0;
        let mut maps = Vec::with_capacity(u.len());
        for (&ui, t) in u.iter().zip(self.transforms) {
            let m = t.map(ui);
            x.push(m.value);
            log_jac += m.log_jacobian;
            maps.push(m);
        }
        let lp = self.model.log_density(&x, grad);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        for (g, m) in grad.iter_mut().zip(&maps) {
            *g = *g * m.jacobian + m.log_jacobian_grad;
        }
        lp + log_jac
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    stats: ChainStats,
}

fn run_chain<M: LogDensity>(
    target: &Unconstrained<'_, M>,
    dim: usize,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain);
    let mut state = None;
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = State::new(target, q);
        if s.is_finite() {
            state = Some(s);
            break;
        }
    }
    let mut state = state.ok_or_else(|| {
        Error::BadInitialization(format!("chain {chain}: 100 jittered starts were all non-finite"))
    })?;

    let mut inv_mass = vec![1.0; dim];
    let mut step_size = nuts::find_reasonable_step_size(target, &state, 1.0, &inv_mass, &mut rng);
    let mut dual = DualAveraging::new(config.target_acceptance, step_size);
    let mut schedule = WindowSchedule::new(config.warmup);
    let mut welford = Welford::new(dim);
    let mut warmup_divergences = 0;

    for it in 0..config.warmup {
        let info = nuts::transition(target, &mut state, step_size, &inv_mass, config.max_tree_depth, &mut rng);
        warmup_divergences += info.divergent as usize;
        step_size = dual.update(info.accept_stat);
        if schedule.in_window(it) {
            welford.add(&state.q);
        }
        if schedule.window_ends(it) {
            schedule.advance(it);
            inv_mass = welford.regularized_variance();
            welford.restart();
            step_size = nuts::find_reasonable_step_size(target, &state, step_size, &inv_mass, &mut rng);
            dual.restart(step_size);
        }
    }
    step_size = dual.final_step_size();
    if warmup_divergences == config.warmup || !step_size.is_finite() {
        return Err(Error::SamplingFailed(SamplingFailure {
            chain,
            reason: "every warmup transition diverged".into(),
            warmup_divergences,
            warmup_iterations: config.warmup,
            step_size,
        }));
    }

    let mut draws = Vec::with_capacity(config.draws);
    let mut divergences = 0;
    let (mut accept, mut depth, mut leapfrogs) = (0.0, 0.0, 0.0);
    for _ in 0..config.draws {
        let info = nuts::transition(target, &mut state, step_size, &inv_mass, config.max_tree_depth, &mut rng);
        divergences += info.divergent as usize;
        accept += info.accept_stat;
        depth += info.depth as f64;
        leapfrogs += info.n_leapfrog as f64;
        draws.push(target.constrain(&state.q));
    }
    let n = config.draws as f64;
    Ok(ChainOutput {
        draws,
        stats: ChainStats {
            step_size,
            mean_accept_stat: accept / n,
            mean_tree_depth: depth / n,
            mean_leapfrog_steps: leapfrogs / n,
            divergences,
            warmup_divergences,
        },
    })
}

/// Runs `config.chains` NUTS chains on `model` and returns the constrained
/// post-warmup draws.
pub fn sample<M: LogDensity>(
    model: &M,
    transforms: &[Transform],
    parameter_names: Vec<String>,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let dim = model.dim();
    if transforms.len() != dim || parameter_names.len() != dim {
        return Err(Error::Mismatch(format!(
            "model has {dim} parameters but {} transforms and {} names were given",
            transforms.len(),
            parameter_names.len()
        )));
    }
    let target = Unconstrained { model, transforms };
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_chain(&target, dim, config, chain))
        .collect::<Result<_>>()?;
    let mut chains = Vec::with_capacity(outputs.len());
    let mut chain_stats = Vec::with_capacity(outputs.len());
    for out in outputs {
        chains.push(out.draws);
        chain_stats.push(out.stats);
    }
    let mut draws = PosteriorDraws::from_chains(parameter_names, chains)?;
    draws.divergence_count = chain_stats.iter().map(|s| s.divergences).sum();
    draws.chain_stats = chain_stats;
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for (g, xi) in grad.iter_mut().zip(x) {
                *g = -xi;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    /// Correlated Gaussian with scales 1 and 20.
    struct Skewed;

    impl LogDensity for Skewed {
        fn dim(&self) -> usize {
            2
        }
        fn log_density(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -x[0];
            grad[1] = -x[1] / 400.0;
            -0.5 * (x[0] * x[0] + x[1] * x[1] / 400.0)
        }
    }

    #[test]
    fn standard_normal_moments() {
        let config = SamplerConfig::with_seed(7);
        let draws = sample(&StdNormal(1), &[Transform::Identity], vec!["x".into()], &config).unwrap();
        assert_eq!((draws.num_chains(), draws.num_draws()), (4, 1000));
        let x = draws.column(0);
        assert!(stats::mean(&x).abs() < 0.1);
        assert!((stats::sd(&x) - 1.0).abs() < 0.1);
        assert!(draws.diagnostics[0].rhat.value().unwrap() < 1.01);
        assert!(draws.converged());
    }

    #[test]
    fn metric_adapts_to_scale() {
        let config = SamplerConfig::with_seed(8);
        let draws = sample(&Skewed, &[Transform::Identity; 2], vec!["a".into(), "b".into()], &config).unwrap();
        let b = draws.column(1);
        assert!((stats::sd(&b) / 20.0 - 1.0).abs() < 0.1, "sd {}", stats::sd(&b));
        assert!(draws.chain_stats.iter().all(|s| s.mean_tree_depth < 4.0));
    }

    #[test]
    fn same_seed_same_draws() {
        let config = SamplerConfig {
            warmup: 200,
            draws: 200,
            ..SamplerConfig::with_seed(99)
        };
        let a = sample(&StdNormal(3), &[Transform::Identity; 3], vec!["a".into(), "b".into(), "c".into()], &config).unwrap();
        let b = sample(&StdNormal(3), &[Transform::Identity; 3], vec!["a".into(), "b".into(), "c".into()], &config).unwrap();
        assert_eq!(a, b);
        let c = sample(
            &StdNormal(3),
            &[Transform::Identity; 3],
            vec!["a".into(), "b".into(), "c".into()],
            &SamplerConfig { seed: 100, ..config },
        )
        .unwrap();
        assert_ne!(a.column(0), c.column(0));
    }

    struct Nowhere;

    impl LogDensity for Nowhere {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, _: &[f64], _: &mut [f64]) -> f64 {
            f64::NAN
        }
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let err = sample(&Nowhere, &[Transform::Identity], vec!["x".into()], &SamplerConfig::default());
        assert!(matches!(err, Err(Error::BadInitialization(_))));
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig { chains: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { target_acceptance: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let err = sample(&StdNormal(2), &[Transform::Identity], vec!["x".into()], &SamplerConfig::default());
        assert!(matches!(err, Err(Error::Mismatch(_))));
    }

    /// Densities pushed through each constraint map must come back with
    /// their analytic moments.
    struct Constrained(u8);

    impl LogDensity for Constrained {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let v = x[0];
            match self.0 {
                // Beta(2, 2) on (0, 1)
                0 => {
                    grad[0] = 1.0 / v - 1.0 / (1.0 - v);
                    v.ln() + (1.0 - v).ln()
                }
                // half-normal(2) on (0, ∞)
                1 => {
                    grad[0] = -v / 4.0;
                    -v * v / 8.0
                }
                // uniform on (0.1, 0.9)
                _ => {
                    grad[0] = 0.0;
                    0.0
                }
            }
        }
    }

    #[test]
    fn jacobians_reproduce_moments() {
        let cases = [
            (0u8, Transform::Interval { lower: 0.0, upper: 1.0 }, 0.5, (0.05f64).sqrt()),
            (1, Transform::Positive, 2.0 * (2.0 / std::f64::consts::PI).sqrt(), 2.0 * (1.0 - 2.0 / std::f64::consts::PI).sqrt()),
            (2, Transform::Interval { lower: 0.1, upper: 0.9 }, 0.5, 0.8 / 12f64.sqrt()),
        ];
        for (kind, t, mean, sd) in cases {
            let config = SamplerConfig { draws: 5000, ..SamplerConfig::with_seed(21 + kind as u64) };
            let draws = sample(&Constrained(kind), &[t], vec!["x".into()], &config).unwrap();
            let x = draws.column(0);
            let ess = draws.diagnostics[0].ess.value().unwrap();
            let se = sd / ess.sqrt();
            assert!((stats::mean(&x) - mean).abs() < 4.0 * se, "kind {kind}: mean {}", stats::mean(&x));
            assert!((stats::sd(&x) / sd - 1.0).abs() < 0.05, "kind {kind}: sd {}", stats::sd(&x));
        }
    }
}
