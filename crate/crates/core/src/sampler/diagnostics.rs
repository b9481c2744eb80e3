//! Convergence diagnostics: classic split-R̂ and the Geyer
//! initial-positive-sequence effective sample size.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stats;

/// A diagnostic value, or a marker that it cannot be computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diagnostic {
    Value(f64),
    /// The draws have no within-chain variation.
    Degenerate,
    /// Too few chains or draws.
    Unavailable,
}

impl Diagnostic {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Diagnostic::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for Diagnostic {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Diagnostic::Value(v) => serializer.serialize_f64(v),
            Diagnostic::Degenerate => serializer.serialize_str("degenerate"),
            Diagnostic::Unavailable => serializer.serialize_none(),
        }
    }
}

fn common_length(chains: &[Vec<f64>]) -> usize {
    chains.iter().map(Vec::len).min().unwrap_or(0)
}

/// Split-R̂ over `2·m` half-chains:
/// `sqrt((n − 1)/n + B/(n·W))` with half length `n`.
///
/// Odd-length chains drop their middle draw.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let len = common_length(chains);
    if chains.len() < 2 || len < 4 {
        return Err(Error::InsufficientData(format!(
            "split-R̂ needs >= 2 chains of >= 4 draws, got {} chains of {len}",
            chains.len()
        )));
    }
    if is_constant(chains) {
        return Ok(Diagnostic::Degenerate);
    }
    let half = len / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[len - half..len]);
    }
    let means: Vec<f64> = halves.iter().map(|h| stats::mean(h)).collect();
    let within = halves.iter().map(|h| stats::variance(h)).sum::<f64>() / halves.len() as f64;
    if !(within > 0.0) {
        return Ok(Diagnostic::Degenerate);
    }
    let n = half as f64;
    let between = n * stats::variance(&means);
    Ok(Diagnostic::Value(((n - 1.0) / n + between / (n * within)).sqrt()))
}

/// True when every draw in every chain has the same value.
fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains.iter().find_map(|c| c.first());
    chains.iter().flatten().all(|x| Some(x) == first)
}

fn autocovariance(chain: &[f64], mean: f64, lag: usize) -> f64 {
    let n = chain.len();
    let mut acc = 0.0;
    for i in 0..n - lag {
        acc += (chain[i] - mean) * (chain[i + lag] - mean);
    }
    acc / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// initial monotone sequence truncation.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let n = common_length(chains);
    let m = chains.len();
    if m == 0 || n < 4 {
        return Err(Error::InsufficientData(format!(
            "ESS needs >= 4 draws per chain, got {n}"
        )));
    }
    if is_constant(chains) {
        return Ok(Diagnostic::Degenerate);
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let nf = n as f64;
    let variances: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| autocovariance(c, mu, 0) * nf / (nf - 1.0))
        .collect();
    let mean_var = stats::mean(&variances);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += stats::variance(&means);
    }
    if !(mean_var > 0.0) || !(var_plus > 0.0) {
        return Ok(Diagnostic::Degenerate);
    }
    let rho_at = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };

    // rho[s] is the combined autocorrelation at lag s (Stan's indexing,
    // including the improved antithetic tail term)
    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho_at(s + 1);
        odd = rho_at(s + 2);
        if even + odd >= 0.0 {
            rho[s + 1] = even;
            rho[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho[max_s + 1] = even;
    }
    let mut s = 1;
    while s + 3 <= max_s {
        let prev = rho[s - 1] + rho[s];
        if rho[s + 1] + rho[s + 2] > prev {
            rho[s + 1] = prev / 2.0;
            rho[s + 2] = prev / 2.0;
        }
        s += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1])
        .max(1.0 / total.log10());
    Ok(Diagnostic::Value(total / tau))
}
