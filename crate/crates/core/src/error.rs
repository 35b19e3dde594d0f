use thiserror::Error;

/// Failure categories shared by every module. The CLI maps them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or unsupported parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// An iterative computation failed to converge or lost precision.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A size or memory guard refused the request.
    #[error("resource guard: {0}")]
    Resource(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) => 2,
            Error::Numerical(_) => 3,
            Error::Resource(_) => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
