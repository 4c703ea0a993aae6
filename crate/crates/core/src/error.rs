use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The increment law does not have a strictly negative mean.
    #[error("increment mean must be negative, got {mean}")]
    NonNegativeMean { mean: f64 },

    /// Evaluation point outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// Drift inequality violated on the verification grid.
    #[error("certification failed at t = {t}: margin {margin:e}")]
    CertificationFailed { t: f64, margin: f64 },

    #[error("no Lundberg exponent: {0}")]
    NoExponent(String),

    #[error("root finding failed: {0}")]
    NoRoot(String),

    /// No grid value satisfied a search condition below the cap.
    #[error("search exhausted at cap {cap}")]
    SearchExhausted { cap: f64 },

    /// A statistical check rejected its hypothesis.
    #[error("statistical check failed: {0}")]
    CheckFailed(String),
}
