use crate::fixedpoint::QFormat;

/// Errors produced by the fixed-point substrate, the approximation kernels
/// and the evaluation engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid Q-format: total_bits={total_bits}, frac_bits={frac_bits} (need 1 <= frac_bits < total_bits <= 64)")]
    InvalidFormat { total_bits: u32, frac_bits: u32 },

    #[error("{op}: result does not fit in {format}")]
    Overflow { op: &'static str, format: QFormat },

    #[error("{op}: operands have different formats ({left} vs {right})")]
    FormatMismatch {
        op: &'static str,
        left: QFormat,
        right: QFormat,
    },

    #[error("{op}: input must be positive")]
    NonPositiveInput { op: &'static str },

    #[error("{op}: input {value} outside the supported range [{lo}, {hi}]")]
    RangeViolation {
        op: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("row is empty")]
    EmptyRow,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
