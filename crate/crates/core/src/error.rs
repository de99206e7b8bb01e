//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the estimation pipeline.
///
/// `Numerical` marks failures of the optimization or linear algebra on
/// otherwise valid inputs; everything else is an input or parameter problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable AR model: max root modulus {max_root_modulus} >= 1")]
    UnstableModel { max_root_modulus: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty spike ensemble")]
    EmptyEnsemble,

    #[error("degenerate taper: all coefficients are zero")]
    DegenerateTaper,

    #[error("degenerate offsets: {0}")]
    DegenerateOffsets(String),

    #[error("infeasible point: {0}")]
    InfeasiblePoint(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("taper {index}: {source}")]
    Taper {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach the index of the taper whose estimation failed.
    pub fn for_taper(self, index: usize) -> Error {
        Error::Taper {
            index,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::InfeasiblePoint(_) => true,
            Error::Taper { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
