use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// State of a chain that could not produce usable draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingFailure {
    pub chain: usize,
    pub reason: String,
    pub warmup_divergences: usize,
    pub warmup_iterations: usize,
    pub step_size: f64,
}

impl std::fmt::Display for SamplingFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "chain {}: {} ({} of {} warmup iterations divergent, step size {:.3e})",
            self.chain, self.reason, self.warmup_divergences, self.warmup_iterations, self.step_size
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    InvalidRow { row: u64, message: String },

    #[error("rows with unknown strata: {rows:?}")]
    UnknownStrata { rows: Vec<u64> },

    #[error("onset period {onset} outside [2, {num_periods}]")]
    OnsetOutOfRange { onset: usize, num_periods: usize },

    #[error("no observations for group {group} at period {period}")]
    EmptyCell { group: u8, period: usize },

    #[error("onset period {onset} leaves too few pre-treatment periods (need onset >= {required})")]
    InsufficientPreData { onset: usize, required: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("design is not identifiable; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("lag regression is collinear (lagged series has no variation)")]
    Collinear,

    #[error("AR(1) process is nonstationary (rho = {rho})")]
    Nonstationary { rho: f64 },

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("regime `{0}` is empirical-Bayes and needs an EB estimate")]
    MissingEbEstimate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("non-finite log density or gradient at initialization: {0}")]
    BadInitialization(String),

    #[error("sampling failed: {0}")]
    SamplingFailed(SamplingFailure),

    #[error("tipping sweep failed at eta = {eta}: {source}")]
    SweepFailed {
        eta: f64,
        #[source]
        source: Box<Error>,
    },
}
