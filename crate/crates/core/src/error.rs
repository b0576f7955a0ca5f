use thiserror::Error;

/// Failure modes shared by every module of the crate.
///
/// The variants map one-to-one onto the CLI exit codes: `Input`, `Domain`
/// and `Parse` are caller mistakes, `Resource` is a dimension-budget
/// overflow, and the rest are numerical or diagnostic failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("dimension budget exceeded: {0}")]
    Resource(String),

    #[error("no contraction in [0, {t_max}]: excess {excess:e} at t_max")]
    NoContraction { t_max: f64, excess: f64 },

    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
