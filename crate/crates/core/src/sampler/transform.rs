//! Smooth bijections from the real line onto constrained supports.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `x = exp(u)` onto `(0, ∞)`.
    Positive,
    /// `x = lower + (upper − lower)·logistic(u)` onto `(lower, upper)`.
    Interval { lower: f64, upper: f64 },
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Result of mapping one coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Mapped {
    pub value: f64,
    /// `dx/du`.
    pub jacobian: f64,
    pub log_jacobian: f64,
    /// `d log|dx/du| / du`.
    pub log_jacobian_grad: f64,
}

impl Transform {
    pub fn constrain(&self, u: f64) -> f64 {
        self.map(u).value
    }

    pub fn map(&self, u: f64) -> Mapped {
        match *self {
            Transform::Identity => Mapped {
                value: u,
                jacobian: 1.0,
                log_jacobian: 0.0,
                log_jacobian_grad: 0.0,
            },
            Transform::Positive => {
                let x = u.exp();
                Mapped {
                    value: x,
                    jacobian: x,
                    log_jacobian: u,
                    log_jacobian_grad: 1.0,
                }
            }
            Transform::Interval { lower, upper } => {
                let width = upper - lower;
                let s = logistic(u);
                Mapped {
                    value: lower + width * s,
                    jacobian: width * s * (1.0 - s),
                    log_jacobian: width.ln() - softplus(-u) - softplus(u),
                    log_jacobian_grad: 1.0 - 2.0 * s,
                }
            }
        }
    }

    /// Inverse map; values outside the support give non-finite results.
    pub fn unconstrain(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Positive => x.ln(),
            Transform::Interval { lower, upper } => {
                let s = (x - lower) / (upper - lower);
                (s / (1.0 - s)).ln()
            }
        }
    }
}
