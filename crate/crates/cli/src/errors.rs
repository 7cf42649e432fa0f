//! Process-level error taxonomy; every failure maps to a documented exit
//! code so scripts can branch on what went wrong.

use quadricflow_core::gradflow::TrainError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_MATH: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or malformed input (files, flags): exit 2.
    #[error("{0}")]
    Input(String),
    /// A mathematically infeasible request (rescale targets, domains): exit 3.
    #[error("{0}")]
    Math(String),
    /// Training left the finite floats: exit 4.
    #[error("{0}")]
    Diverged(String),
    /// A verification suite reported failures: exit 1.
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Math(_) => EXIT_MATH,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::VerifyFailed(_) => EXIT_VERIFY,
        }
    }

    /// Core errors raised while computing (not while reading inputs).
    pub fn math(err: quadricflow_core::Error) -> Self {
        CliError::Math(err.to_string())
    }

    pub fn input(err: impl std::fmt::Display) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Diverged { step, .. } => {
                CliError::Diverged(format!("training diverged at step {step}"))
            }
            TrainError::Core(e) => CliError::Math(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
