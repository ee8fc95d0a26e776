use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The configuration sits on a corner where a quantity is undefined,
    /// e.g. the reduced committed state at gamma = 1, beta = 0.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A state failed the normalization check.
    #[error("state not normalized: squared norm {0}")]
    NotNormalized(f64),

    /// Should be unreachable for valid inputs.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Wire(#[from] crate::protocol::WireError),

    #[error("transport failure: {0}")]
    Transport(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Transport(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Checks that `x` lies in the closed unit interval.
pub(crate) fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} is outside [0, 1]")))
    }
}
