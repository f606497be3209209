//! Crate error type.

use thiserror::Error;

/// Errors produced by loaders, validators and solvers.
///
/// The CLI maps [`Error::Infeasible`] to exit code 2 and
/// [`Error::Numerical`] to exit code 3; everything else is an ordinary
/// failure.
#[derive(Debug, Error)]
pub enum Error {
    /// A series file did not follow the `# unit=.. step_minutes=..` format.
    #[error("{path}:{line}: {msg}")]
    SeriesFormat {
        path: String,
        line: usize,
        msg: String,
    },

    /// A parameter failed validation before any computation started.
    #[error("invalid value for {name}: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    /// Requested conversion between incompatible units.
    #[error("cannot convert {from} to {to}")]
    UnitMismatch { from: &'static str, to: &'static str },

    /// The constraint set admits no solution (reported, never clipped away).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A solver lost numerical validity (NaN, divergence, singularity).
    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            msg: msg.into(),
        }
    }
}
