//! Two-way fixed-effects design matrix and its Gaussian linear model.
//!
//! Columns are `[intercept, period_2 … period_T, group, treated_post]`:
//! period 1 is absorbed into the intercept and the control group is the
//! reference level.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const INTERCEPT: &str = "intercept";
pub const GROUP: &str = "group";
pub const TREATED_POST: &str = "treated_post";

pub fn period_label(period: usize) -> String {
    format!("period_{period}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwfeDesign {
    pub matrix: DMatrix<f64>,
    pub response: DVector<f64>,
    pub column_labels: Vec<String>,
    pub att_column: usize,
    pub group_column: usize,
    pub num_periods: usize,
    pub onset_period: usize,
}

impl TwfeDesign {
    pub fn num_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_columns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column holding period `t`'s effect, `None` for the reference period.
    pub fn period_column(&self, period: usize) -> Option<usize> {
        (period >= 2 && period <= self.num_periods).then(|| period - 1)
    }
}

/// Coefficients of the TWFE model in named form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwfeCoefficients {
    pub intercept: f64,
    /// Period effects, `theta[0]` (period 1) is the reference and always 0.
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub noise_sd: f64,
}

impl TwfeCoefficients {
    pub fn from_vector(design: &TwfeDesign, coefficients: &[f64], noise_sd: f64) -> Self {
        let mut theta = vec![0.0];
        theta.extend_from_slice(&coefficients[1..design.num_periods]);
        TwfeCoefficients {
            intercept: coefficients[0],
            theta,
            gamma: coefficients[design.group_column],
            beta: coefficients[design.att_column],
            noise_sd,
        }
    }
}

/// Bayesian linear model over a TWFE design: independent `N(0, s²)` priors
/// on the coefficients and a half-normal prior on the noise sd.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelSpec {
    pub coefficient_prior_sd: f64,
    pub noise_prior_scale: f64,
    pub design: TwfeDesign,
}

impl LinearModelSpec {
    pub const DEFAULT_COEFFICIENT_PRIOR_SD: f64 = 10.0;
    pub const DEFAULT_NOISE_PRIOR_SCALE: f64 = 1.0;

    pub fn new(design: TwfeDesign, coefficient_prior_sd: f64, noise_prior_scale: f64) -> Result<Self> {
        if !(coefficient_prior_sd > 0.0) || !(noise_prior_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "prior scales must be positive (coefficient sd {coefficient_prior_sd}, noise scale {noise_prior_scale})"
            )));
        }
        Ok(LinearModelSpec {
            coefficient_prior_sd,
            noise_prior_scale,
            design,
        })
    }

    pub fn with_defaults(design: TwfeDesign) -> Self {
        LinearModelSpec {
            coefficient_prior_sd: Self::DEFAULT_COEFFICIENT_PRIOR_SD,
            noise_prior_scale: Self::DEFAULT_NOISE_PRIOR_SCALE,
            design,
        }
    }
}

/// Builds the TWFE design for the rows of `stratum` (all rows if `None`).
pub fn build_design(data: &PanelDataset, stratum: Option<&str>) -> Result<TwfeDesign> {
    let num_periods = data.num_periods();
    let onset = data.onset_period();
    let rows: Vec<_> = data.rows(stratum).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no observations in stratum {stratum:?}"
        )));
    }
    let ncols = num_periods + 2;
    let group_column = num_periods;
    let att_column = num_periods + 1;

    let mut matrix = DMatrix::zeros(rows.len(), ncols);
    let mut response = DVector::zeros(rows.len());
    for (i, obs) in rows.iter().enumerate() {
        matrix[(i, 0)] = 1.0;
        if obs.period >= 2 {
            matrix[(i, obs.period - 1)] = 1.0;
        }
        if obs.group.is_treated() {
            matrix[(i, group_column)] = 1.0;
            if obs.period >= onset {
                matrix[(i, att_column)] = 1.0;
            }
        }
        response[i] = obs.outcome;
    }

    let mut column_labels = vec![INTERCEPT.to_string()];
    column_labels.extend((2..=num_periods).map(period_label));
    column_labels.push(GROUP.into());
    column_labels.push(TREATED_POST.into());

    let dependent = dependent_columns(&matrix);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent.into_iter().map(|j| column_labels[j].clone()).collect(),
        });
    }

    Ok(TwfeDesign {
        matrix,
        response,
        column_labels,
        att_column,
        group_column,
        num_periods,
        onset_period: onset,
    })
}

/// Columns that lie in the span of the columns before them
/// (modified Gram–Schmidt).
fn dependent_columns(matrix: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..matrix.ncols() {
        let col = matrix.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let residual = v.norm();
        if norm == 0.0 || residual <= 1e-9 * norm {
            dependent.push(j);
        } else {
            basis.push(v / residual);
        }
    }
    dependent
}

/// Exact Gaussian posterior of the coefficients with the noise sd held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl ConjugatePosterior {
    pub fn sd(&self) -> DVector<f64> {
        self.covariance.diagonal().map(f64::sqrt)
    }
}

/// Conjugate oracle: covariance `(XᵀX/σ² + I/s²)⁻¹`, mean `cov · Xᵀy/σ²`.
pub fn analytic_posterior_oracle(spec: &LinearModelSpec, noise_sd: f64) -> Result<ConjugatePosterior> {
    conjugate_posterior(
        &spec.design.matrix,
        &spec.design.response,
        spec.coefficient_prior_sd,
        noise_sd,
    )
}

pub fn conjugate_posterior(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior_sd: f64,
    noise_sd: f64,
) -> Result<ConjugatePosterior> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InsufficientData("design has no rows".into()));
    }
    if !(noise_sd > 0.0) || !(prior_sd > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise sd {noise_sd} and prior sd {prior_sd} must be positive"
        )));
    }
    let noise_var = noise_sd * noise_sd;
    let p = x.ncols();
    let precision = x.transpose() * x / noise_var
        + DMatrix::<f64>::identity(p, p) / (prior_sd * prior_sd);
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Singular("posterior precision is not positive definite".into()))?;
    let covariance = chol.inverse();
    let mean = &covariance * (x.transpose() * y) / noise_var;
    Ok(ConjugatePosterior { mean, covariance })
}
