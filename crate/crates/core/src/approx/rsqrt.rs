//! Reciprocal square root without division or square root.
//!
//! Writing `x = 2^k (1 + f)` with `f` in `[0, 1)`, `log2(x)` is approximated by
//! `k + f`, so `1/sqrt(x) ~= 2^(-(k + f)/2)`. The exponent is split into an
//! integer part `u` (a shift) and a fraction `v` in `[0, 1)` whose top `m` bits
//! address a table of `2^v`.

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, Rounding};

use super::real::split_pow2;
use super::tables::Pow2FracTable;

/// Fixed-point `1/sqrt(x)`, returned in `x`'s format.
pub fn recip_sqrt(x: FixedPoint, table: &Pow2FracTable) -> Result<FixedPoint> {
    if !x.is_positive() {
        return Err(Error::NonPositiveInput { op: "recip_sqrt" });
    }
    let k = x.leading_one()?;
    let f = x.fraction_after_leading_one(k)?;
    let frac_bits = x.format().frac_bits();

    // -(k + f) / 2 in x's fractional resolution; the arithmetic shift floors.
    let log2_sum = ((k as i128) << frac_bits) + f.raw() as i128;
    let log2_approx = (-log2_sum) >> 1;
    let u = (log2_approx >> frac_bits) as i32;
    let v = log2_approx - ((u as i128) << frac_bits);
    debug_assert!(v >= 0 && v < (1i128 << frac_bits));

    let m = table.m();
    let index = if frac_bits >= m {
        v >> (frac_bits - m)
    } else {
        v << (m - frac_bits)
    } as usize;

    table.entries()[index]
        .requantize(x.format(), Rounding::Nearest)?
        .shift(u)
}

/// The same approximation in double precision with an exact `2^v` table,
/// isolating the algorithmic error from quantization.
pub fn recip_sqrt_real(x: f64, m: u32) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::NonPositiveInput { op: "recip_sqrt" });
    }
    let (k, f) = split_pow2(x);
    let log2_approx = -(k as f64 + f) / 2.0;
    let u = log2_approx.floor();
    let v = log2_approx - u;
    let scale = (m as f64).exp2();
    let v_tilde = (v * scale).floor() / scale;
    Ok(v_tilde.exp2() * u.exp2())
}
