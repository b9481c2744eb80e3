//! Mean-shifted AR(1) deviation process
//! `ξ_s = η(1 − ρ) + ρ ξ_{s−1} + σ ε_s`, `ε_s ~ N(0, 1)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    /// Long-run mean η.
    pub eta: f64,
    /// Autoregressive coefficient ρ.
    pub rho: f64,
    /// Innovation sd σ.
    pub sigma: f64,
}

impl Ar1Params {
    pub fn new(eta: f64, rho: f64, sigma: f64) -> Self {
        Ar1Params { eta, rho, sigma }
    }

    pub fn is_stationary(&self) -> bool {
        self.rho.abs() < 1.0
    }

    /// Conditional mean of `ξ_s` given `ξ_{s−1} = prev`.
    #[inline]
    pub fn step_mean(&self, prev: f64) -> f64 {
        self.eta * (1.0 - self.rho) + self.rho * prev
    }

    /// Stationary `(mean, variance) = (η, σ²/(1 − ρ²))`.
    pub fn stationary_moments(&self) -> Result<(f64, f64)> {
        if !self.is_stationary() {
            return Err(Error::Nonstationary { rho: self.rho });
        }
        Ok((self.eta, self.sigma * self.sigma / (1.0 - self.rho * self.rho)))
    }

    /// Sum of the noise-free path `Σ_{k=0}^{h−1} η(1 − ρ^{k+1})` started at 0.
    pub fn deterministic_cumulative(&self, horizon: usize) -> f64 {
        let mut power = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            power *= self.rho;
            total += self.eta * (1.0 - power);
        }
        total
    }
}

/// A sampled path `ξ_g, …, ξ_T` with its prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationTrajectory {
    pub xi: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Standard-normal innovations that produced `xi`.
    pub noise: Vec<f64>,
    pub anchor: f64,
    /// Set when the path was generated with `|ρ| ≥ 1`.
    pub nonstationary: bool,
}

impl DeviationTrajectory {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Simulates `horizon` steps after `ξ_{g−1} = anchor`.
///
/// Nonstationary parameters are allowed; the trajectory is flagged.
pub fn simulate<R: Rng + ?Sized>(
    params: &Ar1Params,
    horizon: usize,
    anchor: f64,
    rng: &mut R,
) -> DeviationTrajectory {
    let noise: Vec<f64> = (0..horizon).map(|_| rng.sample(StandardNormal)).collect();
    replay(params, anchor, noise)
}

/// Simulates with `ξ_{g−1}` drawn from the stationary distribution.
pub fn simulate_stationary_start<R: Rng + ?Sized>(
    params: &Ar1Params,
    horizon: usize,
    rng: &mut R,
) -> Result<DeviationTrajectory> {
    let (mean, var) = params.stationary_moments()?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(simulate(params, horizon, mean + var.sqrt() * z, rng))
}

/// Rebuilds a trajectory from recorded innovations.
pub fn replay(params: &Ar1Params, anchor: f64, noise: Vec<f64>) -> DeviationTrajectory {
    let mut xi = Vec::with_capacity(noise.len());
    let mut cumulative = Vec::with_capacity(noise.len());
    let mut prev = anchor;
    let mut total = 0.0;
    for &eps in &noise {
        let next = params.step_mean(prev) + params.sigma * eps;
        total += next;
        xi.push(next);
        cumulative.push(total);
        prev = next;
    }
    DeviationTrajectory {
        xi,
        cumulative,
        noise,
        anchor,
        nonstationary: !params.is_stationary(),
    }
}

/// Gaussian transition log density of `xi` chained from `anchor`.
pub fn log_density(xi: &[f64], params: &Ar1Params, anchor: f64) -> Result<f64> {
    if !(params.sigma > 0.0) {
        return Err(Error::DegenerateDensity(format!(
            "AR(1) innovation sd must be positive, got {}",
            params.sigma
        )));
    }
    let mut prev = anchor;
    let mut total = 0.0;
    for &x in xi {
        let z = (x - params.step_mean(prev)) / params.sigma;
        total += -0.5 * z * z - LN_SQRT_2PI - params.sigma.ln();
        prev = x;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_free_path_has_closed_form() {
        let p = Ar1Params::new(1.0, 0.95, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = simulate(&p, 2, 0.0, &mut rng);
        assert_relative_eq!(traj.xi[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(traj.xi[1], 0.0975, epsilon = 1e-15);
        let traj = simulate(&p, 40, 0.0, &mut rng);
        for (k, x) in traj.xi.iter().enumerate() {
            assert_relative_eq!(*x, 1.0 - 0.95f64.powi(k as i32 + 1), epsilon = 1e-12);
        }
        assert_relative_eq!(traj.total(), p.deterministic_cumulative(40), epsilon = 1e-12);
    }

    #[test]
    fn zero_mean_zero_noise_is_parallel_trends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for rho in [-0.9, 0.0, 0.5, 1.3] {
            let traj = simulate(&Ar1Params::new(0.0, rho, 0.0), 13, 0.0, &mut rng);
            assert!(traj.xi.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn white_noise_returns_innovations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = simulate(&Ar1Params::new(0.0, 0.0, 1.0), 20, 0.0, &mut rng);
        assert_eq!(traj.xi, traj.noise);
    }

    #[test]
    fn stationary_moments_cases() {
        assert_eq!(Ar1Params::new(2.0, 0.0, 1.0).stationary_moments().unwrap(), (2.0, 1.0));
        let (m, v) = Ar1Params::new(0.0, 0.95, 1.0).stationary_moments().unwrap();
        assert_eq!(m, 0.0);
        assert_relative_eq!(v, 1.0 / 0.0975, epsilon = 1e-12);
        assert_relative_eq!(v, 10.256_410_256_410_256, epsilon = 1e-9);
        assert!(matches!(
            Ar1Params::new(1.64, 1.57, 0.340).stationary_moments(),
            Err(Error::Nonstationary { .. })
        ));
    }

    #[test]
    fn nonstationary_paths_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let traj = simulate(&Ar1Params::new(1.64, 2.36, 0.34), 5, 0.0, &mut rng);
        assert!(traj.nonstationary);
        assert!(simulate_stationary_start(&Ar1Params::new(0.0, 1.0, 1.0), 3, &mut rng).is_err());
    }

    #[test]
    fn log_density_standard_normal() {
        let lp = log_density(&[0.0], &Ar1Params::new(0.0, 0.0, 1.0), 0.0).unwrap();
        assert_relative_eq!(lp, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
        assert!(matches!(
            log_density(&[0.0], &Ar1Params::new(0.0, 0.0, 0.0), 0.0),
            Err(Error::DegenerateDensity(_))
        ));
    }

    #[test]
    fn log_density_mean_shift() {
        // ρ = 0 so the shift δ moves every conditional mean by δ
        let xi = [0.3, -1.2, 0.7];
        let base = Ar1Params::new(0.0, 0.0, 0.8);
        let shifted = Ar1Params::new(0.5, 0.0, 0.8);
        let a = log_density(&xi, &base, 0.0).unwrap();
        let b = log_density(&xi, &shifted, 0.0).unwrap();
        let expect: f64 = xi
            .iter()
            .map(|x| (-(x - 0.5f64).powi(2) + x * x) / (2.0 * 0.64))
            .sum();
        assert_relative_eq!(b - a, expect, epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_stationary_moments() {
        let p = Ar1Params::new(0.7, 0.6, 0.5);
        let (m, v) = p.stationary_moments().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let ends: Vec<f64> = (0..n)
            .map(|_| *simulate(&p, 40, 0.0, &mut rng).xi.last().unwrap())
            .collect();
        let mean = crate::stats::mean(&ends);
        let var = crate::stats::variance(&ends);
        let se_mean = (v / n as f64).sqrt();
        // var of the sample variance of a Gaussian ≈ 2v²/(n−1)
        let se_var = (2.0 * v * v / (n as f64 - 1.0)).sqrt();
        assert!((mean - m).abs() < 3.0 * se_mean, "mean {mean} vs {m}");
        assert!((var - v).abs() < 3.0 * se_var, "var {var} vs {v}");
    }

    proptest! {
        #[test]
        fn replay_and_prefix_sums(
            eta in -3.0f64..3.0, rho in -1.5f64..1.5, sigma in 0.0f64..3.0,
            anchor in -2.0f64..2.0, seed in any::<u64>(), horizon in 1usize..30,
        ) {
            let p = Ar1Params::new(eta, rho, sigma);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = simulate(&p, horizon, anchor, &mut rng);
            let again = replay(&p, anchor, traj.noise.clone());
            prop_assert_eq!(&traj, &again);
            prop_assert_eq!(traj.cumulative[0], traj.xi[0]);
            for k in 1..horizon {
                prop_assert_eq!(traj.cumulative[k], traj.cumulative[k - 1] + traj.xi[k]);
            }
            if sigma > 0.0 {
                prop_assert!(log_density(&traj.xi, &p, anchor).unwrap().is_finite());
            }
        }
    }
}
