//! Padé [2/2] exponential and its clipped form used by softmax.
//!
//! `e^x ~= (12 + 6x + x^2) / (12 - 6x + x^2)`. Numerator and denominator share
//! `x^2` and `6x = (x << 2) + (x << 1)`; the ratio is a product with the
//! multi-scale reciprocal of the denominator. The denominator has no real
//! roots, so it is positive for every input.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, Rounding};

use super::real::reciprocal_real;
use super::Kernels;

/// Lower end of the interval on which the Padé form tracks `e^x` closely.
pub const EXP_ACCURATE_LO: f64 = -3.0;
/// Upper end of that interval.
pub const EXP_ACCURATE_HI: f64 = 2.0;

impl Kernels {
    /// Padé exponential of `x` in `[-3, 2]`, returned in `x`'s format.
    pub fn pade_exp(&self, x: FixedPoint) -> Result<FixedPoint> {
        let wide = self.widen(x)?;
        let acc = wide.format();
        let lo = FixedPoint::from_int(EXP_ACCURATE_LO as i64, acc)?;
        let hi = FixedPoint::from_int(EXP_ACCURATE_HI as i64, acc)?;
        if wide.cmp_value(lo) == Ordering::Less || wide.cmp_value(hi) == Ordering::Greater {
            return Err(Error::RangeViolation {
                op: "pade_exp",
                value: x.to_f64(),
                lo: EXP_ACCURATE_LO,
                hi: EXP_ACCURATE_HI,
            });
        }
        self.pade_exp_wide(wide)?
            .requantize(x.format(), Rounding::Nearest)
    }

    /// Zero below `-3`, the Padé form otherwise. Inputs are expected to be
    /// max-shifted (at most 2) but larger values are still evaluated.
    pub fn peano_exp(&self, x_tilde: FixedPoint) -> Result<FixedPoint> {
        let wide = self.widen(x_tilde)?;
        self.peano_exp_wide(wide)?
            .requantize(x_tilde.format(), Rounding::Nearest)
    }

    /// `peano_exp` with input and output in the accumulator format.
    pub(crate) fn peano_exp_wide(&self, x: FixedPoint) -> Result<FixedPoint> {
        let lo = FixedPoint::from_int(EXP_ACCURATE_LO as i64, x.format())?;
        if x.cmp_value(lo) == Ordering::Less {
            Ok(FixedPoint::zero(x.format()))
        } else {
            self.pade_exp_wide(x)
        }
    }

    fn pade_exp_wide(&self, x: FixedPoint) -> Result<FixedPoint> {
        let fmt = x.format();
        let x_sq = self.mul(x, x)?;
        let six_x = x.shift(2)?.checked_add(x.shift(1)?)?;
        let twelve = FixedPoint::from_int(12, fmt)?;
        let common = twelve.checked_add(x_sq)?;
        let numerator = common.checked_add(six_x)?;
        let denominator = common.checked_sub(six_x)?;
        assert!(
            denominator.is_positive(),
            "Padé denominator must be positive, got {denominator} at x={x}"
        );
        self.mul(numerator, self.reciprocal(denominator)?)
    }
}

fn pade_terms(x: f64) -> (f64, f64) {
    let common = 12.0 + x * x;
    (common + 6.0 * x, common - 6.0 * x)
}

/// Double-precision Padé exponential on `[-3, 2]`, with the ratio taken
/// through the real-valued MSR/LMSR reciprocal.
pub fn pade_exp_real(x: f64, alpha_star: u32, lmsr: bool) -> Result<f64> {
    if !(EXP_ACCURATE_LO..=EXP_ACCURATE_HI).contains(&x) {
        return Err(Error::RangeViolation {
            op: "pade_exp",
            value: x,
            lo: EXP_ACCURATE_LO,
            hi: EXP_ACCURATE_HI,
        });
    }
    peano_exp_real(x, alpha_star, lmsr)
}

pub fn peano_exp_real(x: f64, alpha_star: u32, lmsr: bool) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::RangeViolation {
            op: "peano_exp",
            value: x,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    if x < EXP_ACCURATE_LO {
        return Ok(0.0);
    }
    let (num, den) = pade_terms(x);
    assert!(den > 0.0);
    Ok(num * reciprocal_real(den, alpha_star, lmsr)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ApproxParams;
    use crate::fixedpoint::QFormat;

    fn io(v: f64) -> FixedPoint {
        FixedPoint::quantize(v, QFormat::IO, Rounding::Nearest).unwrap()
    }

    /// The rational function itself, with a true division.
    fn pade_ratio(x: f64) -> f64 {
        (12.0 + 6.0 * x + x * x) / (12.0 - 6.0 * x + x * x)
    }

    #[test]
    fn pade_examples() {
        let k = Kernels::default();
        assert_eq!(k.pade_exp(io(0.0)).unwrap().to_f64(), 1.0);
        assert_eq!(pade_ratio(2.0), 7.0);
        assert_eq!(k.pade_exp(io(2.0)).unwrap().to_f64(), 7.0);
        assert_eq!(pade_ratio(-3.0), 3.0 / 39.0);
        // MSR of 39 with alpha*=4 is 1/38.
        let at_m3 = k.pade_exp(io(-3.0)).unwrap().to_f64();
        assert!(
            (at_m3 - 3.0 / 38.0).abs() <= QFormat::IO.resolution(),
            "{at_m3}"
        );
        assert_eq!(pade_exp_real(-3.0, 4, false).unwrap(), 3.0 / 38.0);
        let lmsr = pade_exp_real(-3.0, 4, true).unwrap();
        assert!((lmsr - 3.0 / 39.0).abs() < 1e-4, "{lmsr}");
    }

    #[test]
    fn pade_range() {
        let k = Kernels::default();
        assert!(matches!(
            k.pade_exp(io(2.5)),
            Err(Error::RangeViolation { .. })
        ));
        assert!(k.pade_exp(io(-3.00390625)).is_err());
        assert!(pade_exp_real(-3.1, 4, false).is_err());
        assert!(pade_exp_real(2.01, 4, false).is_err());
    }

    #[test]
    fn peano_examples() {
        let k = Kernels::default();
        assert_eq!(k.peano_exp(io(-5.0)).unwrap().raw(), 0);
        assert_eq!(k.peano_exp(io(0.0)).unwrap().to_f64(), 1.0);
        assert_eq!(
            k.peano_exp(io(-3.0)).unwrap(),
            k.pade_exp(io(-3.0)).unwrap()
        );
        assert!(k.peano_exp(io(-3.0)).unwrap().is_positive());
        assert_eq!(peano_exp_real(-3.0001, 4, false).unwrap(), 0.0);
        assert!(peano_exp_real(-3.0, 4, false).unwrap() > 0.0);
        assert!(peano_exp_real(f64::NAN, 4, false).is_err());
    }

    #[test]
    fn peano_exp_sign_and_support() {
        for lmsr in [false, true] {
            let k = Kernels::new(ApproxParams::default().with_lmsr(lmsr)).unwrap();
            for raw in QFormat::IO.min_raw()..=(2 << 8) {
                let x = FixedPoint::from_raw(raw, QFormat::IO).unwrap();
                let y = k.peano_exp(x).unwrap();
                assert!(!y.is_negative());
                assert_eq!(y.is_zero(), x.to_f64() < -3.0, "x={x}");
            }
        }
    }

    #[test]
    fn pade_monotone_on_grid() {
        for lmsr in [false, true] {
            for alpha_star in [1, 4, 5, 8] {
                let k = Kernels::new(
                    ApproxParams::default()
                        .with_lmsr(lmsr)
                        .with_alpha_star(alpha_star),
                )
                .unwrap();
                let mut prev = 0;
                for raw in (-3 << 8)..=(2 << 8) {
                    let y = k
                        .pade_exp(FixedPoint::from_raw(raw, QFormat::IO).unwrap())
                        .unwrap()
                        .raw();
                    assert!(y >= prev, "raw={raw} lmsr={lmsr} alpha*={alpha_star}");
                    prev = y;
                }
                let mut prev = 0.0;
                for i in 0..=50_000 {
                    let x = -3.0 + 5.0 * i as f64 / 50_000.0;
                    let y = pade_exp_real(x, alpha_star, lmsr).unwrap();
                    assert!(y >= prev, "x={x}");
                    prev = y;
                }
            }
        }
    }

    #[test]
    fn accurate_within_msr_bound() {
        let k = Kernels::default();
        for raw in (-3 << 8)..=(2 << 8) {
            let x = FixedPoint::from_raw(raw, QFormat::IO).unwrap();
            let y = k.pade_exp(x).unwrap().to_f64();
            let p = pade_ratio(x.to_f64());
            // 1/floor(d) overshoots 1/d by at most 1/floor(d) <= 1/4 relative.
            assert!(y >= p * (1.0 - 1e-3) - 0.004, "x={x}");
            assert!(y <= p * 1.34 + 0.004, "x={x} y={y} p={p}");
        }
    }
}
