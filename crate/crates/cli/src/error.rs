use std::fmt;

/// A failed command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input data, configuration or output location (exit 2).
    Input(String),
    /// Split-R̂ at or above the threshold under strict convergence (exit 3).
    Convergence(String),
    /// The sampler could not produce draws (exit 4).
    Sampling(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Sampling(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CliError::Sampling(m) => write!(f, "sampling failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bayesdid::Error> for CliError {
    fn from(e: bayesdid::Error) -> Self {
        use bayesdid::Error as E;
        let sampling = match &e {
            E::SamplingFailed(_) | E::BadInitialization(_) => true,
            E::SweepFailed { source, .. } => matches!(**source, E::SamplingFailed(_) | E::BadInitialization(_)),
            _ => false,
        };
        if sampling {
            CliError::Sampling(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}
