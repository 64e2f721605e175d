use thiserror::Error;

/// Errors raised by the library.
///
/// `Domain` covers violated numeric preconditions (out-of-range probabilities,
/// sizes, thresholds). `Data` covers malformed cohorts, schemas, assignments and
/// configurations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn data<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}
