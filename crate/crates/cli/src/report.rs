//! JSON and CSV report writers. Output is a pure function of the inputs:
//! no timestamps or host details, maps are ordered, floats use the
//! shortest round-trip representation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bayesdid::effects::TrendRow;
use bayesdid::sampler::{Diagnostic, PosteriorDraws};
use bayesdid::stats::Summary;
use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fields every JSON report starts with.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, B: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
    /// Split-R̂ of every sampled parameter, by name.
    pub rhat: BTreeMap<String, Diagnostic>,
    #[serde(flatten)]
    pub body: B,
}

pub fn rhat_map<'a>(runs: impl IntoIterator<Item = (&'a str, &'a PosteriorDraws)>) -> BTreeMap<String, Diagnostic> {
    let mut map = BTreeMap::new();
    for (prefix, draws) in runs {
        for d in &draws.diagnostics {
            let key = if prefix.is_empty() { d.name.clone() } else { format!("{prefix}.{}", d.name) };
            map.insert(key, d.rhat);
        }
    }
    map
}

pub struct OutputDir(PathBuf);

impl OutputDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", path.display())))?;
        Ok(OutputDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Input(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Input(format!("cannot encode {name}: {e}"));
        wtr.write_record(header).map_err(csv_err)?;
        for row in rows {
            wtr.write_record(row).map_err(csv_err)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| CliError::Input(format!("cannot encode {name}: {e}")))?;
        self.write_bytes(name, &bytes)
    }
}

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_summary(s: &Option<Summary>) -> [String; 3] {
    match s {
        Some(s) => [num(s.mean), num(s.lower95), num(s.upper95)],
        None => Default::default(),
    }
}

pub const TREND_HEADER: [&str; 9] = [
    "period",
    "observed_treated",
    "observed_control",
    "counterfactual_mean",
    "counterfactual_lower95",
    "counterfactual_upper95",
    "modified_mean",
    "modified_lower95",
    "modified_upper95",
];

pub fn trend_records(rows: &[TrendRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut rec = vec![r.period.to_string(), num(r.observed_treated), num(r.observed_control)];
            rec.extend(opt_summary(&r.counterfactual));
            rec.extend(opt_summary(&r.modified));
            rec
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct CoefficientSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
    pub rhat: Diagnostic,
    pub ess: Diagnostic,
}

pub fn coefficient_summaries(draws: &PosteriorDraws) -> Vec<CoefficientSummary> {
    draws
        .diagnostics
        .iter()
        .enumerate()
        .map(|(k, d)| CoefficientSummary {
            name: d.name.clone(),
            summary: Summary::from_draws(&draws.column(k)),
            rhat: d.rhat,
            ess: d.ess,
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsBody<'a> {
    pub converged: bool,
    pub rhat_threshold: f64,
    pub max_rhat: Option<f64>,
    pub divergence_count: usize,
    pub parameters: &'a [bayesdid::sampler::ParameterDiagnostics],
    pub chains: &'a [bayesdid::sampler::ChainStats],
}

pub fn diagnostics_body(draws: &PosteriorDraws) -> DiagnosticsBody<'_> {
    DiagnosticsBody {
        converged: draws.converged(),
        rhat_threshold: bayesdid::sampler::RHAT_THRESHOLD,
        max_rhat: draws.max_rhat(),
        divergence_count: draws.divergence_count,
        parameters: &draws.diagnostics,
        chains: &draws.chain_stats,
    }
}
