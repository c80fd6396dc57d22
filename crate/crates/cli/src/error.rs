use s2cformer::S2cError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] S2cError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Core(e) => match e {
                S2cError::Config(_) | S2cError::InvalidArgument(_) => 2,
                S2cError::Incompatible(_) => 4,
                S2cError::Data(_)
                | S2cError::Io { .. }
                | S2cError::Dimension(_)
                | S2cError::Coding(_)
                | S2cError::ParamShape(_) => 3,
                S2cError::NanLoss { .. } | S2cError::OutOfOrder { .. } => 1,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Core(S2cError::io(path, e))
}
