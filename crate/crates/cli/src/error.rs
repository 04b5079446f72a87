use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] elastorecon::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("hypotheses hold on {:.1}% of nodes (need 90%)", 100.0 * unmasked)]
    Hypotheses { unmasked: f64 },
}

impl CliError {
    /// 2 bad config or input, 3 forward-solver failure, 4 hypotheses failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(elastorecon::Error::NoConvergence { .. }) => 3,
            CliError::Hypotheses { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
