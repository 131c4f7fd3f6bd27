//! Double-precision twins of the fixed-point kernels.
//!
//! Same algorithms, but tables hold exact values and shifts are exact
//! multiplications by powers of two. The evaluation engine uses these to
//! separate the error of each approximation scheme from quantization noise.

use crate::error::{Error, Result};

pub use super::exp::{pade_exp_real, peano_exp_real};
pub use super::reciprocal::{lmsr_recip_real, msr_recip_real, reciprocal_real};
pub use super::rsqrt::recip_sqrt_real;

/// Exact decomposition `x = 2^k (1 + f)`, `f` in `[0, 1)`, for finite `x > 0`.
pub(crate) fn split_pow2(x: f64) -> (i32, f64) {
    debug_assert!(x > 0.0 && x.is_finite());
    let (x, bias) = if x < f64::MIN_POSITIVE {
        (x * 2f64.powi(64), 64)
    } else {
        (x, 0)
    };
    let bits = x.to_bits();
    let k = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let mantissa = f64::from_bits((bits & ((1u64 << 52) - 1)) | (1023u64 << 52));
    (k - bias, mantissa - 1.0)
}

/// The multi-scale shift `alpha` for a reciprocal input, shared by both the
/// real and fixed-point paths.
pub(crate) fn msr_scale(leading_one: i32, alpha_star: u32) -> u32 {
    if leading_one <= alpha_star as i32 {
        0
    } else {
        (leading_one - alpha_star as i32) as u32
    }
}

pub(crate) fn check_reciprocal_input(op: &'static str, x: f64) -> Result<()> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::NonPositiveInput { op });
    }
    if x < 1.0 || !x.is_finite() {
        return Err(Error::RangeViolation {
            op,
            value: x,
            lo: 1.0,
            hi: f64::MAX,
        });
    }
    Ok(())
}
