use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("`{name}` = {value} lies outside the valid range {min} ..= {max}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("evanescent wave: q = {q} rad/m exceeds n*omega/c = {cutoff} rad/m")]
    Evanescent { q: f64, cutoff: f64 },

    #[error("no sign change of the phase mismatch over the cut-angle bracket")]
    NoSignChange,

    #[error("quadrature did not converge: doubling `{knob}` changed the result by {change:.3e} (tolerance {tolerance:.1e})")]
    NonConvergent {
        knob: &'static str,
        change: f64,
        tolerance: f64,
    },

    #[error("half level not crossed on both sides of the peak")]
    HalfLevelNotCrossed,

    #[error("illumination below the division threshold at {count} sample(s)")]
    BelowThreshold { count: usize },

    #[error("non-Hermitian double impulse response: max |q(x1;x',x'') - conj q(x1;x'',x')| = {residual:.3e}")]
    NotHermitian { residual: f64 },

    #[error("dense map of {rows} x {cols} exceeds the {limit} x {limit} cap")]
    TooLarge {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("dispersion dataset, line {line}: {message}")]
    Dataset { line: usize, message: String },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}
