use std::fmt;
use std::process::ExitCode;

use gcomp_core::bootstrap::BootstrapError;
use gcomp_core::data::DataError;
use gcomp_core::ice::IceError;

/// Failure classes, each with a stable exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: I/O and other runtime failures.
    Runtime(String),
    /// Exit 2: invalid or inconsistent configuration.
    Config(String),
    /// Exit 3: input data failed validation.
    Validation(String),
    /// Exit 4: estimation did not converge; the result file has been written.
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Convergence(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Validation(_) | DataError::Parse { .. } | DataError::Csv(_) => {
                CliError::Validation(e.to_string())
            }
            DataError::MissingColumn { .. } | DataError::InvalidSpec(_) => {
                CliError::Config(e.to_string())
            }
            DataError::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<IceError> for CliError {
    fn from(e: IceError) -> Self {
        match e {
            IceError::Data(d) => d.into(),
            IceError::EventNonMonotone { .. } => CliError::Validation(e.to_string()),
            IceError::DimensionMismatch { .. } | IceError::InvalidPlan(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<BootstrapError> for CliError {
    fn from(e: BootstrapError) -> Self {
        match e {
            BootstrapError::Ice(i) => i.into(),
            BootstrapError::TooFewResamples(_) | BootstrapError::NoWorkers => {
                CliError::Config(e.to_string())
            }
            BootstrapError::TooManyFailures { .. } | BootstrapError::Pool(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
