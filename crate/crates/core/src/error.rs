use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// The evaluation point sits on a singularity.
    #[error("singular input: {0}")]
    Singular(String),
    /// A simulation or experiment configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An estimator was asked for data that was never recorded.
    #[error("usage error: {0}")]
    Usage(String),
    /// Quadrature produced a non-finite value.
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    /// Not enough samples or grid points for a statistical reduction.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Singular(_) => "singular",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Quadrature(_) => "quadrature",
            Error::InsufficientData(_) => "insufficient_data",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
