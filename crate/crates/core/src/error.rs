use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants are grouped by how a caller should react: bad inputs
/// (`Domain`, `Validation`, `Parse`, `DepthViolation`, `InvalidModel`,
/// `UnsupportedClaim`), market limits (`Infeasible`, `Unpriceable`) and
/// numerical trouble (`Solver`).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("position {units} outside depth box [{min}, {max}]")]
    DepthViolation { units: f64, min: f64, max: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported claim: {0}")]
    UnsupportedClaim(String),

    #[error("infeasible hedge: dominance fails on {regions:?}")]
    Infeasible { regions: Vec<(f64, f64)> },

    #[error("unpriceable claim: {0}")]
    Unpriceable(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by invalid user input rather than by the market
    /// or the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Validation(_)
                | Error::Parse { .. }
                | Error::DepthViolation { .. }
                | Error::InvalidModel(_)
                | Error::UnsupportedClaim(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
