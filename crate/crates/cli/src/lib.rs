//! Config-driven experiment runner: single runs, sweeps and named presets.

pub mod config;
pub mod experiment;
pub mod sweep;

pub use config::{ExperimentConfig, Strategy};
pub use experiment::{run, Summary};
pub use sweep::{sweep, Axis};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The config or the command line is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Run(homopinn::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for invalid input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<homopinn::Error> for CliError {
    fn from(e: homopinn::Error) -> Self {
        use homopinn::Error as E;
        match e {
            E::Schedule(_) | E::UnknownProblem(_) | E::InvalidDimension(_) | E::InvalidArchitecture(_) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Run(e),
        }
    }
}
