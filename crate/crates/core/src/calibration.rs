//! Prior regimes for the AR(1) hyperparameters and the empirical-Bayes
//! least-squares calibration from pre-treatment violations.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::ar1::Ar1Params;
use crate::error::{Error, Result};
use crate::sampler::{LogDensity, Transform};

/// `η = c / (1 − ρ)` is reported only when `|1 − ρ|` exceeds this.
pub const ETA_SINGULARITY_TOL: f64 = 1e-6;

/// Names of the nine regimes of the configuration table, in table order.
pub const TABLE_REGIMES: [&str; 9] = [
    "Fixed-1", "Fixed-2", "Fixed-3", "Fully-1", "Fully-2", "Fully-3", "EB-1", "EB-2", "EB-3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Fixed,
    FullyBayesian,
    EmpiricalBayes,
}

/// How one hyperparameter is specified before calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ParamSpec {
    Fixed { value: f64 },
    Uniform { lower: f64, upper: f64 },
    Beta { alpha: f64, beta: f64 },
    HalfNormal { scale: f64 },
    /// Taken from the empirical-Bayes estimate.
    Estimated,
}

/// A realized law for one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ParamLaw {
    Point { value: f64 },
    Uniform { lower: f64, upper: f64 },
    Beta { alpha: f64, beta: f64 },
    HalfNormal { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleMultipliers {
    pub eta: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Default for ScaleMultipliers {
    fn default() -> Self {
        ScaleMultipliers {
            eta: 1.0,
            rho: 1.0,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRegime {
    pub name: String,
    pub kind: RegimeKind,
    pub eta: ParamSpec,
    pub rho: ParamSpec,
    pub sigma: ParamSpec,
    #[serde(default)]
    pub scale_multipliers: ScaleMultipliers,
}

impl PriorRegime {
    pub fn needs_estimate(&self) -> bool {
        [self.eta, self.rho, self.sigma]
            .iter()
            .any(|s| matches!(s, ParamSpec::Estimated))
    }

    /// Same regime with η pinned to `eta`.
    pub fn with_fixed_eta(&self, eta: f64) -> PriorRegime {
        PriorRegime {
            eta: ParamSpec::Fixed { value: eta },
            scale_multipliers: ScaleMultipliers {
                eta: 1.0,
                ..self.scale_multipliers
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(format!("regime `{}`: {what}", self.name)));
        let m = self.scale_multipliers;
        if !(m.eta > 0.0 && m.rho > 0.0 && m.sigma > 0.0) {
            return bad("scale multipliers must be positive".into());
        }
        for (label, spec) in [("eta", self.eta), ("rho", self.rho), ("sigma", self.sigma)] {
            match spec {
                ParamSpec::Fixed { value } if !value.is_finite() => {
                    return bad(format!("{label} must be finite"))
                }
                ParamSpec::Uniform { lower, upper } if !(lower < upper) => {
                    return bad(format!("{label} uniform bounds need lower < upper"))
                }
                ParamSpec::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                    return bad(format!("{label} beta shapes must be positive"))
                }
                ParamSpec::HalfNormal { scale } if !(scale > 0.0) => {
                    return bad(format!("{label} half-normal scale must be positive"))
                }
                _ => {}
            }
        }
        match self.sigma {
            ParamSpec::Fixed { value } if value < 0.0 => bad("sigma must be >= 0".into()),
            ParamSpec::Uniform { lower, .. } if lower < 0.0 => bad("sigma must be >= 0".into()),
            _ => Ok(()),
        }
    }
}

fn regime(name: &str, kind: RegimeKind, eta: ParamSpec, rho: ParamSpec, sigma: ParamSpec) -> PriorRegime {
    PriorRegime {
        name: name.into(),
        kind,
        eta,
        rho,
        sigma,
        scale_multipliers: ScaleMultipliers::default(),
    }
}

/// The nine table regimes plus the σ-scaled EB variants `EB-2s` and `EB-3s`.
pub fn builtin_regimes() -> BTreeMap<String, PriorRegime> {
    let eta_prior = ParamSpec::Uniform {
        lower: 0.1,
        upper: 0.9,
    };
    let mut regimes = Vec::new();
    for (i, sigma) in [0.001, 1.0, 5.0].into_iter().enumerate() {
        regimes.push(regime(
            &format!("Fixed-{}", i + 1),
            RegimeKind::Fixed,
            eta_prior,
            ParamSpec::Fixed { value: 0.95 },
            ParamSpec::Fixed { value: sigma },
        ));
    }
    for (i, scale) in [1.0, 2.0, 5.0].into_iter().enumerate() {
        regimes.push(regime(
            &format!("Fully-{}", i + 1),
            RegimeKind::FullyBayesian,
            eta_prior,
            ParamSpec::Beta {
                alpha: 2.0,
                beta: 2.0,
            },
            ParamSpec::HalfNormal { scale },
        ));
    }
    let eb = |name: &str, multipliers: ScaleMultipliers| PriorRegime {
        scale_multipliers: multipliers,
        ..regime(
            name,
            RegimeKind::EmpiricalBayes,
            ParamSpec::Estimated,
            ParamSpec::Estimated,
            ParamSpec::Estimated,
        )
    };
    let base = ScaleMultipliers::default();
    regimes.push(eb("EB-1", base));
    regimes.push(eb("EB-2", ScaleMultipliers { rho: 2.0, ..base }));
    regimes.push(eb("EB-3", ScaleMultipliers { rho: 3.0, ..base }));
    regimes.push(eb("EB-2s", ScaleMultipliers { sigma: 2.0, ..base }));
    regimes.push(eb("EB-3s", ScaleMultipliers { sigma: 5.0, ..base }));
    regimes.into_iter().map(|r| (r.name.clone(), r)).collect()
}

pub fn lookup_regime(name: &str) -> Option<PriorRegime> {
    builtin_regimes().remove(name)
}

/// Least-squares fit of `X_t = c + ρ X_{t−1} + σ ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbEstimate {
    pub c: f64,
    pub rho_hat: f64,
    /// `c / (1 − ρ̂)`, absent when `ρ̂` is numerically 1.
    pub eta_hat: Option<f64>,
    pub sigma_hat: f64,
    pub n_used: usize,
    pub stationary: bool,
}

/// Fits the lag regression to the pre-treatment violation series `x`.
///
/// Uses the `n − 2` divisor for the residual variance, where `n = |x|`.
pub fn fit_eb(x: &[f64]) -> Result<EbEstimate> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "empirical-Bayes fit needs at least 3 violation terms, got {n}"
        )));
    }
    let lagged = &x[..n - 1];
    let target = &x[1..];
    let pairs = (n - 1) as f64;
    let lag_mean = lagged.iter().sum::<f64>() / pairs;
    let target_mean = target.iter().sum::<f64>() / pairs;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (l, y) in lagged.iter().zip(target) {
        sxx += (l - lag_mean) * (l - lag_mean);
        sxy += (l - lag_mean) * (y - target_mean);
    }
    let scale = lagged.iter().map(|l| l * l).sum::<f64>().max(1.0);
    if sxx <= 1e-14 * scale {
        return Err(Error::Collinear);
    }
    let rho_hat = sxy / sxx;
    let c = target_mean - rho_hat * lag_mean;
    let rss: f64 = lagged
        .iter()
        .zip(target)
        .map(|(l, y)| {
            let r = y - (c + rho_hat * l);
            r * r
        })
        .sum();
    let sigma_hat = (rss / (n - 2) as f64).sqrt();
    let eta_hat = ((1.0 - rho_hat).abs() > ETA_SINGULARITY_TOL).then(|| c / (1.0 - rho_hat));
    Ok(EbEstimate {
        c,
        rho_hat,
        eta_hat,
        sigma_hat,
        n_used: n - 1,
        stationary: rho_hat.abs() < 1.0,
    })
}

/// Realized laws for `(η, ρ, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSpec {
    pub eta: ParamLaw,
    pub rho: ParamLaw,
    pub sigma: ParamLaw,
}

impl ParamLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamLaw::Point { value } => value,
            ParamLaw::Uniform { lower, upper } => {
                Uniform::new(lower, upper).expect("validated bounds").sample(rng)
            }
            ParamLaw::Beta { alpha, beta } => {
                Beta::new(alpha, beta).expect("validated shapes").sample(rng)
            }
            ParamLaw::HalfNormal { scale } => {
                let z: f64 = rng.sample(StandardNormal);
                scale * z.abs()
            }
        }
    }

    pub fn point(&self) -> Option<f64> {
        match *self {
            ParamLaw::Point { value } => Some(value),
            _ => None,
        }
    }

    /// Log density up to a constant, with gradient.
    fn log_density(&self, x: f64) -> (f64, f64) {
        match *self {
            ParamLaw::Point { .. } => (0.0, 0.0),
            ParamLaw::Uniform { lower, upper } => {
                if x > lower && x < upper {
                    (0.0, 0.0)
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            }
            ParamLaw::Beta { alpha, beta } => {
                if x > 0.0 && x < 1.0 {
                    (
                        (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln(),
                        (alpha - 1.0) / x - (beta - 1.0) / (1.0 - x),
                    )
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            }
            ParamLaw::HalfNormal { scale } => {
                if x > 0.0 {
                    (-0.5 * x * x / (scale * scale), -x / (scale * scale))
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            }
        }
    }

    fn transform(&self) -> Option<Transform> {
        match *self {
            ParamLaw::Point { .. } => None,
            ParamLaw::Uniform { lower, upper } => Some(Transform::Interval { lower, upper }),
            ParamLaw::Beta { .. } => Some(Transform::Interval {
                lower: 0.0,
                upper: 1.0,
            }),
            ParamLaw::HalfNormal { .. } => Some(Transform::Positive),
        }
    }
}

impl HyperSpec {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Ar1Params {
        Ar1Params {
            eta: self.eta.draw(rng),
            rho: self.rho.draw(rng),
            sigma: self.sigma.draw(rng),
        }
    }

    pub fn laws(&self) -> [(&'static str, ParamLaw); 3] {
        [("eta", self.eta), ("rho", self.rho), ("sigma", self.sigma)]
    }

    /// True when ρ is a point mass with `|ρ| ≥ 1`.
    pub fn is_nonstationary(&self) -> bool {
        self.rho.point().is_some_and(|r| r.abs() >= 1.0)
    }

    /// The joint prior over the non-degenerate hyperparameters, as a target
    /// for the sampler. Returns `None` when every law is a point mass.
    pub fn prior_target(&self) -> Option<HyperPrior> {
        let free: Vec<(usize, ParamLaw)> = self
            .laws()
            .iter()
            .enumerate()
            .filter(|(_, (_, law))| law.point().is_none())
            .map(|(i, (_, law))| (i, *law))
            .collect();
        (!free.is_empty()).then_some(HyperPrior { spec: *self, free })
    }
}

/// Joint density of the free hyperparameters of a [`HyperSpec`].
#[derive(Debug, Clone)]
pub struct HyperPrior {
    spec: HyperSpec,
    free: Vec<(usize, ParamLaw)>,
}

impl HyperPrior {
    pub fn names(&self) -> Vec<String> {
        self.free
            .iter()
            .map(|(i, _)| ["eta", "rho", "sigma"][*i].to_string())
            .collect()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        self.free
            .iter()
            .map(|(_, law)| law.transform().expect("free laws have transforms"))
            .collect()
    }

    /// Fills in point masses around a vector of free values.
    pub fn params(&self, free_values: &[f64]) -> Ar1Params {
        let mut full = [0.0; 3];
        for (k, (_, law)) in self.spec.laws().iter().enumerate() {
            if let Some(v) = law.point() {
                full[k] = v;
            }
        }
        for ((i, _), v) in self.free.iter().zip(free_values) {
            full[*i] = *v;
        }
        Ar1Params::new(full[0], full[1], full[2])
    }
}

impl LogDensity for HyperPrior {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (k, ((_, law), &x)) in self.free.iter().zip(position).enumerate() {
            let (lp, g) = law.log_density(x);
            total += lp;
            grad[k] = g;
        }
        total
    }
}

/// Turns a regime into concrete laws, applying multipliers to the
/// empirical-Bayes point estimates.
pub fn realize_regime(regime: &PriorRegime, eb: Option<&EbEstimate>) -> Result<HyperSpec> {
    regime.validate()?;
    let estimate = || eb.ok_or_else(|| Error::MissingEbEstimate(regime.name.clone()));
    let m = regime.scale_multipliers;
    let realize = |spec: ParamSpec, estimated: &dyn Fn() -> Result<f64>, multiplier: f64| -> Result<ParamLaw> {
        Ok(match spec {
            ParamSpec::Fixed { value } => ParamLaw::Point { value },
            ParamSpec::Uniform { lower, upper } => ParamLaw::Uniform { lower, upper },
            ParamSpec::Beta { alpha, beta } => ParamLaw::Beta { alpha, beta },
            ParamSpec::HalfNormal { scale } => ParamLaw::HalfNormal { scale },
            ParamSpec::Estimated => ParamLaw::Point {
                value: estimated()? * multiplier,
            },
        })
    };
    let eta_hat = || -> Result<f64> {
        estimate()?.eta_hat.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "regime `{}`: eta estimate undefined because rho_hat is numerically 1",
                regime.name
            ))
        })
    };
    Ok(HyperSpec {
        eta: realize(regime.eta, &eta_hat, m.eta)?,
        rho: realize(regime.rho, &|| Ok(estimate()?.rho_hat), m.rho)?,
        sigma: realize(regime.sigma, &|| Ok(estimate()?.sigma_hat), m.sigma)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn supermarket_eb1() -> EbEstimate {
        EbEstimate {
            c: 1.60 * (1.0 - 0.371),
            rho_hat: 0.371,
            eta_hat: Some(1.60),
            sigma_hat: 0.166,
            n_used: 11,
            stationary: true,
        }
    }

    #[test]
    fn table_rows() {
        let regimes = builtin_regimes();
        assert_eq!(regimes.len(), 11);
        for name in TABLE_REGIMES {
            assert!(regimes.contains_key(name), "{name}");
        }
        let fixed1 = &regimes["Fixed-1"];
        assert_eq!(fixed1.sigma, ParamSpec::Fixed { value: 0.001 });
        assert_eq!(fixed1.rho, ParamSpec::Fixed { value: 0.95 });
        assert_eq!(fixed1.eta, ParamSpec::Uniform { lower: 0.1, upper: 0.9 });
        let fully3 = &regimes["Fully-3"];
        assert_eq!(fully3.sigma, ParamSpec::HalfNormal { scale: 5.0 });
        assert_eq!(fully3.rho, ParamSpec::Beta { alpha: 2.0, beta: 2.0 });
        assert_eq!(fully3.kind, RegimeKind::FullyBayesian);
        assert!(lookup_regime("Fixed-9").is_none());
    }

    #[test]
    fn realize_fixed_and_eb() {
        let spec = realize_regime(&lookup_regime("Fixed-2").unwrap(), None).unwrap();
        assert_eq!(spec.sigma, ParamLaw::Point { value: 1.0 });
        assert_eq!(spec.rho, ParamLaw::Point { value: 0.95 });
        assert_eq!(spec.eta, ParamLaw::Uniform { lower: 0.1, upper: 0.9 });

        let eb = supermarket_eb1();
        let spec = realize_regime(&lookup_regime("EB-1").unwrap(), Some(&eb)).unwrap();
        assert_eq!(spec.sigma, ParamLaw::Point { value: 0.166 });
        assert_eq!(spec.rho, ParamLaw::Point { value: 0.371 });
        assert_eq!(spec.eta, ParamLaw::Point { value: 1.60 });

        assert!(matches!(
            realize_regime(&lookup_regime("EB-1").unwrap(), None),
            Err(Error::MissingEbEstimate(_))
        ));
    }

    #[test]
    fn eb_multipliers_follow_table() {
        let eb = supermarket_eb1();
        let rho = |name: &str| {
            realize_regime(&lookup_regime(name).unwrap(), Some(&eb)).unwrap().rho.point().unwrap()
        };
        assert_relative_eq!(rho("EB-2"), 0.742, epsilon = 1e-12);
        assert_relative_eq!(rho("EB-3"), 1.113, epsilon = 1e-12);
        let pharmacy = EbEstimate { rho_hat: 0.785, ..eb };
        let spec = realize_regime(&lookup_regime("EB-2").unwrap(), Some(&pharmacy)).unwrap();
        assert_relative_eq!(spec.rho.point().unwrap(), 1.57, epsilon = 1e-12);
        assert!(spec.is_nonstationary());
        let spec = realize_regime(&lookup_regime("EB-3s").unwrap(), Some(&eb)).unwrap();
        assert_relative_eq!(spec.sigma.point().unwrap(), 0.83, epsilon = 1e-12);
        assert_eq!(spec.rho.point(), Some(0.371));
    }

    #[test]
    fn invalid_regimes_rejected() {
        let mut r = lookup_regime("Fixed-1").unwrap();
        r.eta = ParamSpec::Uniform { lower: 1.0, upper: 1.0 };
        assert!(realize_regime(&r, None).is_err());
        let mut r = lookup_regime("Fully-1").unwrap();
        r.sigma = ParamSpec::HalfNormal { scale: 0.0 };
        assert!(r.validate().is_err());
        let mut r = lookup_regime("EB-1").unwrap();
        r.scale_multipliers.rho = 0.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn hand_ols_perfect_fit() {
        let est = fit_eb(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((est.c - 1.0).abs() < 1e-10);
        assert!((est.rho_hat + 1.0).abs() < 1e-10);
        assert!((est.eta_hat.unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(est.sigma_hat, 0.0);
        assert_eq!(est.n_used, 4);
        assert!(!est.stationary);
    }

    #[test]
    fn eb_error_paths() {
        assert!(matches!(fit_eb(&[2.0, 2.0, 2.0, 2.0]), Err(Error::Collinear)));
        assert!(matches!(fit_eb(&[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn eta_undefined_at_unit_root() {
        // X_t = 1 + X_{t−1}: exact fit with ρ̂ = 1
        let est = fit_eb(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((est.rho_hat - 1.0).abs() < 1e-12);
        assert!(est.eta_hat.is_none());
        let err = realize_regime(&lookup_regime("EB-1").unwrap(), Some(&est)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn explosive_estimate_still_reports_eta() {
        let est = fit_eb(&[0.1, 0.3, 0.9, 2.6, 7.9, 23.5]).unwrap();
        assert!(est.rho_hat > 1.0);
        assert!(!est.stationary);
        assert!(est.eta_hat.is_some());
    }

    #[test]
    fn eb_consistency_on_long_series() {
        let truth = Ar1Params::new(1.60, 0.371, 0.166);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let path = ar1::simulate(&truth, 10_000, 1.60, &mut rng);
        let est = fit_eb(&path.xi).unwrap();
        assert!((est.eta_hat.unwrap() - 1.60).abs() < 0.1);
        assert!((est.rho_hat - 0.371).abs() < 0.05);
        assert!((est.sigma_hat - 0.166).abs() < 0.01);
    }

    #[test]
    fn hyper_draws_respect_supports() {
        let spec = realize_regime(&lookup_regime("Fully-2").unwrap(), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let p = spec.draw(&mut rng);
            assert!(p.eta > 0.1 && p.eta < 0.9);
            assert!(p.rho > 0.0 && p.rho < 1.0);
            assert!(p.sigma >= 0.0);
        }
        let target = spec.prior_target().unwrap();
        assert_eq!(target.names(), vec!["eta", "rho", "sigma"]);
        let fixed = realize_regime(&lookup_regime("EB-1").unwrap(), Some(&supermarket_eb1())).unwrap();
        assert!(fixed.prior_target().is_none());
    }

    proptest! {
        #[test]
        fn eb_is_shift_equivariant(
            xs in proptest::collection::vec(-3.0f64..3.0, 5..40),
            shift in -50.0f64..50.0,
        ) {
            let Ok(a) = fit_eb(&xs) else { return Ok(()) };
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let b = fit_eb(&shifted).unwrap();
            prop_assert!((b.rho_hat - a.rho_hat).abs() < 1e-10 * (1.0 + shift.abs()));
            prop_assert!((b.c - (a.c + shift * (1.0 - a.rho_hat))).abs() < 1e-10 * (1.0 + shift.abs() * 10.0));
            prop_assert!((b.sigma_hat - a.sigma_hat).abs() < 1e-10 * (1.0 + shift.abs()));
            if let (Some(ea), Some(eb)) = (a.eta_hat, b.eta_hat) {
                if (1.0 - a.rho_hat).abs() > 1e-2 {
                    prop_assert!((eb - ea - shift).abs() < 1e-8 * (1.0 + shift.abs()) / (1.0 - a.rho_hat).abs());
                }
            }
        }
    }
}
