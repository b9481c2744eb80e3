//! Two-group panel data: ingestion, validation and group-mean series.
//!
//! Periods are 1-based throughout the public API. Series returned by this
//! module are stored 0-based, so entry `t - 1` belongs to period `t`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment-group flag `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Control,
    Treated,
}

impl Group {
    pub fn from_flag(flag: u8) -> Option<Group> {
        match flag {
            0 => Some(Group::Control),
            1 => Some(Group::Treated),
            _ => None,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Group::Control => 0,
            Group::Treated => 1,
        }
    }

    pub fn is_treated(self) -> bool {
        self == Group::Treated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub unit_id: String,
    pub group: Group,
    pub stratum: String,
    pub period: usize,
    pub outcome: f64,
}

/// Header names of the ingestion CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub unit_id: String,
    pub group: String,
    pub stratum: String,
    pub period: String,
    pub outcome: String,
    /// When set, rows whose stratum is not listed are rejected.
    pub allowed_strata: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            unit_id: "unit_id".into(),
            group: "group".into(),
            stratum: "stratum".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            allowed_strata: None,
        }
    }
}

/// Validated long-format panel with a single treatment onset.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: Vec<PanelObservation>,
    onset_period: usize,
    num_periods: usize,
    log_scale: bool,
}

/// Per-period mean outcome of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMeanSeries {
    pub group: Group,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GroupMeanSeries {
    /// Mean at 1-based `period`.
    pub fn at(&self, period: usize) -> f64 {
        self.values[period - 1]
    }
}

impl PanelDataset {
    /// Validates the observations. `num_periods` is the largest period seen.
    pub fn new(
        observations: Vec<PanelObservation>,
        onset_period: usize,
        log_scale: bool,
    ) -> Result<Self> {
        for (i, obs) in observations.iter().enumerate() {
            if obs.period < 1 {
                return Err(Error::InvalidRow {
                    row: i as u64 + 1,
                    message: "period must be >= 1".into(),
                });
            }
            if !obs.outcome.is_finite() {
                return Err(Error::InvalidRow {
                    row: i as u64 + 1,
                    message: format!("outcome {} is not finite", obs.outcome),
                });
            }
        }
        let num_periods = observations.iter().map(|o| o.period).max().unwrap_or(0);
        if onset_period < 2 || onset_period > num_periods {
            return Err(Error::OnsetOutOfRange {
                onset: onset_period,
                num_periods,
            });
        }
        let data = PanelDataset {
            observations,
            onset_period,
            num_periods,
            log_scale,
        };
        data.check_cells(None)?;
        Ok(data)
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    /// Treatment onset `g`.
    pub fn onset_period(&self) -> usize {
        self.onset_period
    }

    /// Number of periods `T`.
    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    /// Number of post-treatment periods, `T - g + 1`.
    pub fn post_periods(&self) -> usize {
        self.num_periods - self.onset_period + 1
    }

    pub fn log_scale(&self) -> bool {
        self.log_scale
    }

    pub fn strata(&self) -> BTreeSet<&str> {
        self.observations.iter().map(|o| o.stratum.as_str()).collect()
    }

    /// Observations in `stratum`, or all of them when `stratum` is `None`.
    pub fn rows<'a>(
        &'a self,
        stratum: Option<&'a str>,
    ) -> impl Iterator<Item = &'a PanelObservation> + 'a {
        self.observations
            .iter()
            .filter(move |o| stratum.is_none_or(|s| o.stratum == s))
    }

    fn check_cells(&self, stratum: Option<&str>) -> Result<()> {
        let mut counts = vec![[0usize; 2]; self.num_periods];
        for obs in self.rows(stratum) {
            counts[obs.period - 1][obs.group.flag() as usize] += 1;
        }
        for group in [0u8, 1] {
            for (t, c) in counts.iter().enumerate() {
                if c[group as usize] == 0 {
                    return Err(Error::EmptyCell {
                        group,
                        period: t + 1,
                    });
                }
            }
        }
        Ok(())
    }

    /// Per-period group means `(control, treated)`.
    ///
    /// Cell values are summed in sorted order so the result does not depend
    /// on row order.
    pub fn group_means(
        &self,
        stratum: Option<&str>,
    ) -> Result<(GroupMeanSeries, GroupMeanSeries)> {
        let mut cells: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; self.num_periods];
        for obs in self.rows(stratum) {
            cells[obs.period - 1][obs.group.flag() as usize].push(obs.outcome);
        }
        let mut series = [Group::Control, Group::Treated].map(|group| GroupMeanSeries {
            group,
            values: Vec::with_capacity(self.num_periods),
            counts: Vec::with_capacity(self.num_periods),
        });
        for (t, cell) in cells.iter_mut().enumerate() {
            for (g, values) in cell.iter_mut().enumerate() {
                if values.is_empty() {
                    return Err(Error::EmptyCell {
                        group: g as u8,
                        period: t + 1,
                    });
                }
                values.sort_by(f64::total_cmp);
                let sum: f64 = values.iter().sum();
                series[g].values.push(sum / values.len() as f64);
                series[g].counts.push(values.len());
            }
        }
        let [control, treated] = series;
        Ok((control, treated))
    }

    /// Pre-treatment difference-in-first-differences of group means,
    /// `X_t = ΔȲ₁(t) − ΔȲ₀(t)` for `t = 2, …, g − 1`.
    pub fn pre_violation_series(&self, stratum: Option<&str>) -> Result<Vec<f64>> {
        if self.onset_period < 4 {
            return Err(Error::InsufficientPreData {
                onset: self.onset_period,
                required: 4,
            });
        }
        let (control, treated) = self.group_means(stratum)?;
        Ok((2..self.onset_period)
            .map(|t| {
                (treated.at(t) - treated.at(t - 1)) - (control.at(t) - control.at(t - 1))
            })
            .collect())
    }
}

/// Reads and validates a panel CSV.
pub fn load_panel(
    path: impl AsRef<Path>,
    schema: &ColumnMapping,
    onset_period: usize,
    log_transform: bool,
) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(file, schema, onset_period, log_transform)
}

/// Like [`load_panel`] but from any reader. Row numbers in errors are CSV
/// line numbers, with the header on line 1.
pub fn read_panel<R: Read>(
    reader: R,
    schema: &ColumnMapping,
    onset_period: usize,
    log_transform: bool,
) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_col = column(&schema.unit_id)?;
    let group_col = column(&schema.group)?;
    let stratum_col = column(&schema.stratum)?;
    let period_col = column(&schema.period)?;
    let outcome_col = column(&schema.outcome)?;
    let allowed: Option<BTreeSet<&str>> = schema
        .allowed_strata
        .as_ref()
        .map(|s| s.iter().map(String::as_str).collect());

    let mut observations = Vec::new();
    let mut unknown_strata = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record.position().map_or(i as u64 + 2, |p| p.line());
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let bad = |message: String| Error::InvalidRow { row, message };

        let group = field(group_col)
            .parse::<u8>()
            .ok()
            .and_then(Group::from_flag)
            .ok_or_else(|| bad(format!("group `{}` is not 0 or 1", field(group_col))))?;
        let period: usize = field(period_col)
            .parse()
            .map_err(|_| bad(format!("period `{}` is not an integer", field(period_col))))?;
        if period < 1 {
            return Err(bad("period must be >= 1".into()));
        }
        let raw: f64 = field(outcome_col)
            .parse()
            .map_err(|_| bad(format!("outcome `{}` is not a number", field(outcome_col))))?;
        if !raw.is_finite() {
            return Err(bad(format!("outcome {raw} is not finite")));
        }
        let outcome = if log_transform {
            if raw <= 0.0 {
                return Err(bad(format!(
                    "outcome {raw} must be positive for log transform"
                )));
            }
            raw.ln()
        } else {
            raw
        };
        let stratum = field(stratum_col).to_string();
        if let Some(allowed) = &allowed {
            if !allowed.contains(stratum.as_str()) {
                unknown_strata.push(row);
                continue;
            }
        }
        observations.push(PanelObservation {
            unit_id: field(unit_col).to_string(),
            group,
            stratum,
            period,
            outcome,
        });
    }
    if !unknown_strata.is_empty() {
        return Err(Error::UnknownStrata {
            rows: unknown_strata,
        });
    }
    let num_periods = observations.iter().map(|o| o.period).max().unwrap_or(0);
    if onset_period < 2 || onset_period > num_periods {
        return Err(Error::OnsetOutOfRange {
            onset: onset_period,
            num_periods,
        });
    }
    PanelDataset::new(observations, onset_period, log_transform)
}

/// Writes a panel in the default ingestion format.
pub fn write_panel<W: std::io::Write>(data: &PanelDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["unit_id", "group", "stratum", "period", "outcome"])?;
    for o in data.observations() {
        wtr.write_record([
            o.unit_id.clone(),
            o.group.flag().to_string(),
            o.stratum.clone(),
            o.period.to_string(),
            format!("{:?}", o.outcome),
        ])?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Counts the observations per (group, period, stratum); handy for reports.
pub fn cell_counts(data: &PanelDataset) -> BTreeMap<(String, u8, usize), usize> {
    let mut counts = BTreeMap::new();
    for o in data.observations() {
        *counts
            .entry((o.stratum.clone(), o.group.flag(), o.period))
            .or_insert(0) += 1;
    }
    counts
}
