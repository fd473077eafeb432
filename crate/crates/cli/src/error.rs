use alm_core::error::AlmError;
use thiserror::Error;

/// Errors surfaced to the shell, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    NoRoot(AlmError),

    #[error("{0}")]
    Numerical(AlmError),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 ok, 1 verification failure, 2 invalid config, 3 no root in range, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::VerificationFailed(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::NoRoot(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<AlmError> for CliError {
    fn from(e: AlmError) -> Self {
        match e {
            AlmError::InvalidParams(_)
            | AlmError::InvalidSpec(_)
            | AlmError::UnsupportedMode(_)
            | AlmError::UnsupportedForPointMass => Self::Config(e.to_string()),
            AlmError::NoRootInRange { .. } => Self::NoRoot(e),
            AlmError::DomainError { .. }
            | AlmError::QuadratureFailure { .. }
            | AlmError::NumericalFailure(_)
            | AlmError::PositivityBreach { .. }
            | AlmError::UtilityOverflow { .. } => Self::Numerical(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Self::Io(io),
            other => Self::Io(std::io::Error::other(format!("{other:?}"))),
        }
    }
}
