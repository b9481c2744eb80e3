//! The TWFE linear model as a sampler target.
//!
//! Coefficients are sampled in whitened coordinates
//! `b = b_ref + σ_ref · L⁻ᵀ z`, where `L Lᵀ = XᵀX + (σ_ref/s)² I` and `b_ref`
//! is the matching ridge solution. At `σ = σ_ref` the conditional posterior
//! of `z` is exactly standard normal, so the sampler sees a well-conditioned
//! target whatever the design. The Jacobian of the map is constant. The
//! noise sd is sampled as `σ = σ_ref · τ` with `τ > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{LinearModelSpec, TwfeDesign};
use crate::error::{Error, Result};
use crate::sampler::{self, LogDensity, PosteriorDraws, SamplerConfig, Transform};

/// Name of the noise-sd column in TWFE posterior draws.
pub const NOISE_SD: &str = "sigma_y";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Half-normal prior on the noise sd; sampled jointly.
    Estimated,
    /// Noise sd held at a known value.
    Fixed { sd: f64 },
}

#[derive(Debug, Clone)]
pub struct TwfePosterior {
    n: f64,
    p: usize,
    prior_var: f64,
    noise_prior_scale: f64,
    noise: NoiseModel,
    sigma_ref: f64,
    b_ref: DVector<f64>,
    /// `σ_ref · L⁻ᵀ`
    whiten: DMatrix<f64>,
    /// `σ_ref² · WᵀXᵀXW` for unscaled `W = L⁻ᵀ`
    quad: DMatrix<f64>,
    /// `σ_ref · Wᵀ Xᵀ(y − X b_ref)`
    lin: DVector<f64>,
    rss_ref: f64,
}

impl TwfePosterior {
    pub fn new(spec: &LinearModelSpec, noise: NoiseModel) -> Result<Self> {
        let design = &spec.design;
        let x = &design.matrix;
        let y = &design.response;
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::InsufficientData("design has no rows".into()));
        }
        let xtx = x.transpose() * x;
        let prior_var = spec.coefficient_prior_sd * spec.coefficient_prior_sd;
        let sigma_ref = match noise {
            NoiseModel::Fixed { sd } if sd > 0.0 => sd,
            NoiseModel::Fixed { sd } => {
                return Err(Error::InvalidConfig(format!("fixed noise sd must be positive, got {sd}")))
            }
            NoiseModel::Estimated => pilot_noise_sd(x, y, &xtx, prior_var),
        };
        let ridge = sigma_ref * sigma_ref / prior_var;
        let precision = &xtx + DMatrix::<f64>::identity(p, p) * ridge;
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Singular("TWFE precision is not positive definite".into()))?;
        let b_ref = chol.solve(&(x.transpose() * y));
        let l = chol.l();
        // W = L⁻ᵀ, solved column by column from Lᵀ W = I
        let w = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::Singular("whitening factor".into()))?;
        let resid = y - x * &b_ref;
        let rss_ref = resid.norm_squared();
        let quad = w.transpose() * &xtx * &w * (sigma_ref * sigma_ref);
        let lin = w.transpose() * (x.transpose() * &resid) * sigma_ref;
        Ok(TwfePosterior {
            n: n as f64,
            p,
            prior_var,
            noise_prior_scale: spec.noise_prior_scale,
            noise,
            sigma_ref,
            b_ref,
            whiten: w * sigma_ref,
            quad,
            lin,
            rss_ref,
        })
    }

    pub fn num_coefficients(&self) -> usize {
        self.p
    }

    pub fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![Transform::Identity; self.p];
        if self.noise == NoiseModel::Estimated {
            t.push(Transform::Positive);
        }
        t
    }

    /// Coefficients and noise sd from a sampler position.
    pub fn coefficients(&self, position: &[f64]) -> (DVector<f64>, f64) {
        let z = DVector::from_column_slice(&position[..self.p]);
        let b = &self.b_ref + &self.whiten * z;
        let sigma = match self.noise {
            NoiseModel::Fixed { sd } => sd,
            NoiseModel::Estimated => self.sigma_ref * position[self.p],
        };
        (b, sigma)
    }
}

/// Residual sd of the ridge fit, used only to scale the parameterization.
fn pilot_noise_sd(x: &DMatrix<f64>, y: &DVector<f64>, xtx: &DMatrix<f64>, prior_var: f64) -> f64 {
    let p = x.ncols();
    let ridge = DMatrix::<f64>::identity(p, p) * (1.0 / prior_var);
    let b = match (xtx + ridge).cholesky() {
        Some(c) => c.solve(&(x.transpose() * y)),
        None => return 1.0,
    };
    let dof = x.nrows().saturating_sub(p).max(1) as f64;
    let rss = (y - x * b).norm_squared();
    let scale = y.amax().max(1.0);
    (rss / dof).sqrt().max(1e-8 * scale)
}

impl LogDensity for TwfePosterior {
    fn dim(&self) -> usize {
        match self.noise {
            NoiseModel::Estimated => self.p + 1,
            NoiseModel::Fixed { .. } => self.p,
        }
    }

    fn log_density(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let z = DVector::from_column_slice(&position[..self.p]);
        let (b, sigma) = self.coefficients(position);
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let qz = &self.quad * &z;
        let rss = (self.rss_ref - 2.0 * self.lin.dot(&z) + z.dot(&qz)).max(0.0);
        let var = sigma * sigma;
        let mut lp = -self.n * sigma.ln() - 0.5 * rss / var - 0.5 * b.norm_squared() / self.prior_var;
        // d rss / dz = −2 lin + 2 Q z;  d ‖b‖² / dz = 2 Wᵀ b
        let prior_grad = self.whiten.transpose() * &b / self.prior_var;
        for k in 0..self.p {
            grad[k] = (self.lin[k] - qz[k]) / var - prior_grad[k];
        }
        if self.noise == NoiseModel::Estimated {
            let k2 = self.noise_prior_scale * self.noise_prior_scale;
            lp += -0.5 * var / k2;
            let dsigma = -self.n / sigma + rss / (var * sigma) - sigma / k2;
            grad[self.p] = dsigma * self.sigma_ref;
        }
        lp
    }
}

/// Samples the TWFE posterior, returning draws of the named coefficients
/// followed by [`NOISE_SD`].
pub fn fit_twfe(spec: &LinearModelSpec, noise: NoiseModel, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let target = TwfePosterior::new(spec, noise)?;
    let raw_names: Vec<String> = (0..target.dim()).map(|k| format!("u{k}")).collect();
    let raw = sampler::sample(&target, &target.transforms(), raw_names, config)?;
    let mut names = spec.design.column_labels.clone();
    names.push(NOISE_SD.into());
    raw.map_parameters(names, |position| {
        let (b, sigma) = target.coefficients(position);
        let mut v: Vec<f64> = b.iter().copied().collect();
        v.push(sigma);
        v
    })
}

/// Checks that `draws` carry the columns of `design`.
pub fn check_draws(design: &TwfeDesign, draws: &PosteriorDraws) -> Result<()> {
    let expected = design.column_labels.len() + 1;
    if draws.dim() != expected
        || draws.parameter_names[..design.column_labels.len()] != design.column_labels[..]
        || draws.parameter_names[expected - 1] != NOISE_SD
    {
        return Err(Error::Mismatch(format!(
            "posterior draws {:?} do not belong to design {:?}",
            draws.parameter_names, design.column_labels
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_design;
    use crate::panel::{Group, PanelDataset, PanelObservation};

    fn panel() -> PanelDataset {
        let mut rows = Vec::new();
        let mut k = 0u32;
        for g in [0u8, 1] {
            for u in 0..2 {
                for t in 1..=5 {
                    k = k.wrapping_mul(1103515245).wrapping_add(12345);
                    let noise = ((k >> 16) % 1000) as f64 / 1000.0 - 0.5;
                    rows.push(PanelObservation {
                        unit_id: format!("{g}{u}"),
                        group: Group::from_flag(g).unwrap(),
                        stratum: "s".into(),
                        period: t,
                        outcome: 2.0 + 0.4 * t as f64 + 0.7 * g as f64
                            + if g == 1 && t >= 3 { -0.5 } else { 0.0 }
                            + 0.2 * noise,
                    });
                }
            }
        }
        PanelDataset::new(rows, 3, false).unwrap()
    }

    fn finite_difference_check(target: &TwfePosterior, position: &[f64]) {
        let mut grad = vec![0.0; position.len()];
        target.log_density(position, &mut grad);
        for k in 0..position.len() {
            let h = 1e-6;
            let mut up = position.to_vec();
            let mut dn = position.to_vec();
            up[k] += h;
            dn[k] -= h;
            let mut scratch = vec![0.0; position.len()];
            let fd = (target.log_density(&up, &mut scratch) - target.log_density(&dn, &mut scratch)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-4 * (1.0 + fd.abs()), "coord {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = LinearModelSpec::with_defaults(build_design(&panel(), None).unwrap());
        let target = TwfePosterior::new(&spec, NoiseModel::Estimated).unwrap();
        let pos: Vec<f64> = (0..target.dim()).map(|k| 0.3 - 0.1 * k as f64).collect();
        let mut pos = pos;
        *pos.last_mut().unwrap() = 1.3;
        finite_difference_check(&target, &pos);
        let target = TwfePosterior::new(&spec, NoiseModel::Fixed { sd: 0.3 }).unwrap();
        let pos: Vec<f64> = (0..target.dim()).map(|k| 0.2 * k as f64 - 0.5).collect();
        finite_difference_check(&target, &pos);
    }

    #[test]
    fn log_density_matches_direct_form() {
        let spec = LinearModelSpec::with_defaults(build_design(&panel(), None).unwrap());
        let target = TwfePosterior::new(&spec, NoiseModel::Estimated).unwrap();
        let pos: Vec<f64> = (0..target.dim()).map(|k| 0.05 * k as f64 + 0.5).collect();
        let mut grad = vec![0.0; pos.len()];
        let lp = target.log_density(&pos, &mut grad);
        let (b, sigma) = target.coefficients(&pos);
        let x = &spec.design.matrix;
        let rss = (&spec.design.response - x * &b).norm_squared();
        let n = x.nrows() as f64;
        let direct = -n * sigma.ln() - 0.5 * rss / (sigma * sigma) - 0.5 * b.norm_squared() / 100.0
            - 0.5 * sigma * sigma;
        assert!((lp - direct).abs() < 1e-8 * direct.abs().max(1.0));
    }

    #[test]
    fn draws_carry_design_labels() {
        let spec = LinearModelSpec::with_defaults(build_design(&panel(), None).unwrap());
        let config = SamplerConfig { warmup: 200, draws: 200, ..SamplerConfig::with_seed(3) };
        let draws = fit_twfe(&spec, NoiseModel::Estimated, &config).unwrap();
        check_draws(&spec.design, &draws).unwrap();
        assert_eq!(draws.parameter_names.last().unwrap(), NOISE_SD);
        let beta = crate::stats::mean(&draws.column(spec.design.att_column));
        assert!((beta + 0.5).abs() < 0.15, "beta {beta}");
    }

    #[test]
    fn rejects_bad_fixed_noise() {
        let spec = LinearModelSpec::with_defaults(build_design(&panel(), None).unwrap());
        assert!(TwfePosterior::new(&spec, NoiseModel::Fixed { sd: 0.0 }).is_err());
    }
}
