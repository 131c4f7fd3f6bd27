//! Signed fixed-point values with a run-time Q-format.
//!
//! A [`FixedPoint`] is a raw two's-complement mantissa paired with the
//! [`QFormat`] that gives it meaning: `value = raw * 2^-frac_bits`, exactly.
//! Every operation here is integer arithmetic on mantissas. Intermediates are
//! carried in `i128` so that a 64-bit by 64-bit product never wraps; results
//! that do not fit the target format are reported as [`Error::Overflow`]
//! rather than saturated or wrapped.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width and binary-point position of a fixed-point number.
///
/// Written `Qi.f`: `i` integer bits (sign included) and `f` fractional bits,
/// so the default 16-bit I/O format with 8 fractional bits is `Q8.8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "QFormatRepr", into = "QFormatRepr")]
pub struct QFormat {
    total_bits: u32,
    frac_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct QFormatRepr {
    total_bits: u32,
    frac_bits: u32,
}

impl TryFrom<QFormatRepr> for QFormat {
    type Error = Error;
    fn try_from(r: QFormatRepr) -> Result<Self> {
        QFormat::new(r.total_bits, r.frac_bits)
    }
}

impl From<QFormat> for QFormatRepr {
    fn from(q: QFormat) -> Self {
        QFormatRepr {
            total_bits: q.total_bits,
            frac_bits: q.frac_bits,
        }
    }
}

impl QFormat {
    /// 16-bit activations, 8 fractional bits.
    pub const IO: QFormat = QFormat {
        total_bits: 16,
        frac_bits: 8,
    };
    /// Double-width internal format used by the row reductions and kernels.
    pub const ACCUMULATOR: QFormat = QFormat {
        total_bits: 32,
        frac_bits: 16,
    };
    /// Storage format for lookup tables and segment coefficients (`Q2.14`).
    pub const TABLE: QFormat = QFormat {
        total_bits: 16,
        frac_bits: 14,
    };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if frac_bits >= 1 && frac_bits < total_bits && total_bits <= 64 {
            Ok(QFormat {
                total_bits,
                frac_bits,
            })
        } else {
            Err(Error::InvalidFormat {
                total_bits,
                frac_bits,
            })
        }
    }

    pub fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    /// Integer bits including the sign bit.
    pub fn int_bits(self) -> u32 {
        self.total_bits - self.frac_bits
    }

    pub fn min_raw(self) -> i64 {
        (-(1i128 << (self.total_bits - 1))) as i64
    }

    pub fn max_raw(self) -> i64 {
        ((1i128 << (self.total_bits - 1)) - 1) as i64
    }

    /// Value of one unit in the last place, `2^-frac_bits`.
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    fn contains_raw(self, raw: i128) -> bool {
        raw >= self.min_raw() as i128 && raw <= self.max_raw() as i128
    }
}

impl Default for QFormat {
    fn default() -> Self {
        QFormat::IO
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits(), self.frac_bits)
    }
}

impl FromStr for QFormat {
    type Err = Error;

    /// Parses `Qi.f` (case-insensitive `Q`).
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidParameter(format!("cannot parse Q-format {s:?}, expected e.g. Q2.14"));
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(bad)?;
        let (int, frac) = body.split_once('.').ok_or_else(bad)?;
        let int: u32 = int.parse().map_err(|_| bad())?;
        let frac: u32 = frac.parse().map_err(|_| bad())?;
        QFormat::new(int.checked_add(frac).ok_or_else(bad)?, frac)
    }
}

/// How low-order bits are discarded when a value loses precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Drop the bits (round toward negative infinity), as a hardware `>>` does.
    #[default]
    Truncate,
    /// Round to nearest, ties toward positive infinity.
    Nearest,
}

/// `v / 2^shift` under `mode`.
pub(crate) fn shift_right_rounded(v: i128, shift: u32, mode: Rounding) -> i128 {
    if shift == 0 {
        return v;
    }
    if shift >= 127 {
        return match mode {
            Rounding::Truncate if v < 0 => -1,
            _ => 0,
        };
    }
    match mode {
        Rounding::Truncate => v >> shift,
        Rounding::Nearest => (v + (1i128 << (shift - 1))) >> shift,
    }
}

/// Re-expresses a mantissa with `from_frac` fractional bits in `to_frac` bits.
/// Widening is exact; `raw` must be small enough that the left shift fits.
pub(crate) fn rescale(raw: i128, from_frac: u32, to_frac: u32, mode: Rounding) -> i128 {
    if to_frac >= from_frac {
        raw << (to_frac - from_frac)
    } else {
        shift_right_rounded(raw, from_frac - to_frac, mode)
    }
}

/// A signed fixed-point number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPoint {
    raw: i64,
    format: QFormat,
}

impl FixedPoint {
    pub fn from_raw(raw: i64, format: QFormat) -> Result<Self> {
        Self::from_wide(raw as i128, format, "from_raw")
    }

    pub(crate) fn from_wide(raw: i128, format: QFormat, op: &'static str) -> Result<Self> {
        if format.contains_raw(raw) {
            Ok(FixedPoint {
                raw: raw as i64,
                format,
            })
        } else {
            Err(Error::Overflow { op, format })
        }
    }

    pub fn zero(format: QFormat) -> Self {
        FixedPoint { raw: 0, format }
    }

    pub fn from_int(value: i64, format: QFormat) -> Result<Self> {
        Self::from_wide((value as i128) << format.frac_bits, format, "from_int")
    }

    /// Nearest representable value (or the one below it, when truncating).
    pub fn quantize(value: f64, format: QFormat, mode: Rounding) -> Result<Self> {
        let overflow = Error::Overflow {
            op: "quantize",
            format,
        };
        if !value.is_finite() {
            return Err(overflow);
        }
        let scaled = value * (format.frac_bits as f64).exp2();
        let r = match mode {
            Rounding::Truncate => scaled.floor(),
            // `scaled - floor` is exact, unlike `scaled + 0.5` above 2^52.
            Rounding::Nearest => {
                let f = scaled.floor();
                if scaled - f >= 0.5 {
                    f + 1.0
                } else {
                    f
                }
            }
        };
        // The i64 extremes are exactly representable as f64, so this range
        // test is exact for every format width.
        if r < format.min_raw() as f64 || r > format.max_raw() as f64 {
            return Err(overflow);
        }
        Self::from_wide(r as i128, format, "quantize")
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 * self.format.resolution()
    }

    pub fn is_positive(self) -> bool {
        self.raw > 0
    }

    pub fn is_negative(self) -> bool {
        self.raw < 0
    }

    pub fn is_zero(self) -> bool {
        self.raw == 0
    }

    /// Converts to another format, rounding when fractional bits are lost.
    pub fn requantize(self, format: QFormat, mode: Rounding) -> Result<Self> {
        let raw = rescale(
            self.raw as i128,
            self.format.frac_bits,
            format.frac_bits,
            mode,
        );
        Self::from_wide(raw, format, "requantize")
    }

    /// Position `k` of the most significant set bit, so `2^k <= value < 2^(k+1)`.
    /// Negative when the value is below one.
    pub fn leading_one(self) -> Result<i32> {
        if self.raw <= 0 {
            return Err(Error::NonPositiveInput { op: "leading_one" });
        }
        let msb = 63 - self.raw.leading_zeros() as i32;
        Ok(msb - self.format.frac_bits as i32)
    }

    /// The `f` in `value = 2^k (1 + f)`, obtained by masking off the leading
    /// one and re-aligning the remaining bits as a fraction in `self`'s format.
    /// Bits below the format's resolution are truncated when `k > 0`.
    pub fn fraction_after_leading_one(self, k: i32) -> Result<Self> {
        let expected = self.leading_one()?;
        if k != expected {
            return Err(Error::InvalidParameter(format!(
                "fraction_after_leading_one: k={k} but the leading one is at {expected}"
            )));
        }
        let frac = self.format.frac_bits as i32;
        let msb = k + frac;
        let below = (self.raw as i128) & ((1i128 << msb) - 1);
        let raw = if frac >= msb {
            below << (frac - msb)
        } else {
            below >> (msb - frac)
        };
        Self::from_wide(raw, self.format, "fraction_after_leading_one")
    }

    /// Multiplies by `2^amount`. Right shifts are arithmetic, so dropped bits
    /// round toward negative infinity.
    pub fn shift(self, amount: i32) -> Result<Self> {
        let raw = self.raw as i128;
        let shifted = if amount >= 0 {
            if raw == 0 {
                0
            } else if amount >= 64 {
                return Err(Error::Overflow {
                    op: "shift",
                    format: self.format,
                });
            } else {
                raw << amount
            }
        } else {
            shift_right_rounded(raw, amount.unsigned_abs(), Rounding::Truncate)
        };
        Self::from_wide(shifted, self.format, "shift")
    }

    fn same_format(self, rhs: Self, op: &'static str) -> Result<()> {
        if self.format == rhs.format {
            Ok(())
        } else {
            Err(Error::FormatMismatch {
                op,
                left: self.format,
                right: rhs.format,
            })
        }
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self> {
        self.same_format(rhs, "add")?;
        Self::from_wide(self.raw as i128 + rhs.raw as i128, self.format, "add")
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self> {
        self.same_format(rhs, "sub")?;
        Self::from_wide(self.raw as i128 - rhs.raw as i128, self.format, "sub")
    }

    pub fn checked_neg(self) -> Result<Self> {
        Self::from_wide(-(self.raw as i128), self.format, "neg")
    }

    /// Product of two values in the same format, re-quantized from the
    /// double-width intermediate.
    pub fn mul(self, rhs: Self, mode: Rounding) -> Result<Self> {
        self.same_format(rhs, "mul")?;
        self.mul_into(rhs, self.format, mode)
    }

    /// Product of two values in any formats, re-quantized into `out`.
    pub fn mul_into(self, rhs: Self, out: QFormat, mode: Rounding) -> Result<Self> {
        let wide = self.raw as i128 * rhs.raw as i128;
        let raw = rescale(
            wide,
            self.format.frac_bits + rhs.format.frac_bits,
            out.frac_bits,
            mode,
        );
        Self::from_wide(raw, out, "mul")
    }

    /// Exact comparison of the represented values, across formats.
    pub fn cmp_value(self, rhs: Self) -> Ordering {
        let f = self.format.frac_bits.max(rhs.format.frac_bits);
        let a = (self.raw as i128) << (f - self.format.frac_bits);
        let b = (rhs.raw as i128) << (f - rhs.format.frac_bits);
        a.cmp(&b)
    }
}

impl fmt::Display for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(v: f64) -> FixedPoint {
        FixedPoint::quantize(v, QFormat::IO, Rounding::Nearest).unwrap()
    }

    #[test]
    fn format_validation() {
        assert!(QFormat::new(16, 8).is_ok());
        assert!(QFormat::new(64, 63).is_ok());
        assert!(QFormat::new(8, 8).is_err());
        assert!(QFormat::new(8, 0).is_err());
        assert!(QFormat::new(65, 8).is_err());
        assert_eq!(QFormat::IO.max_value(), 127.99609375);
        assert_eq!(QFormat::IO.min_value(), -128.0);
        let wide = QFormat::new(64, 8).unwrap();
        assert_eq!(wide.min_raw(), i64::MIN);
        assert_eq!(wide.max_raw(), i64::MAX);
    }

    #[test]
    fn format_text() {
        assert_eq!(QFormat::TABLE.to_string(), "Q2.14");
        assert_eq!(QFormat::IO.to_string(), "Q8.8");
        assert_eq!("Q2.14".parse::<QFormat>().unwrap(), QFormat::TABLE);
        assert_eq!("q16.16".parse::<QFormat>().unwrap(), QFormat::ACCUMULATOR);
        assert!("2.14".parse::<QFormat>().is_err());
        assert!("Q0.14".parse::<QFormat>().is_err());
        assert!("Qx.y".parse::<QFormat>().is_err());
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(q(0.5).raw(), 128);
        let third = q(1.0 / 3.0);
        assert_eq!(third.raw(), 85);
        assert_eq!(third.to_f64(), 0.33203125);
        assert_eq!(
            FixedPoint::quantize(200.0, QFormat::IO, Rounding::Nearest),
            Err(Error::Overflow {
                op: "quantize",
                format: QFormat::IO
            })
        );
        assert!(FixedPoint::quantize(f64::NAN, QFormat::IO, Rounding::Nearest).is_err());
        assert_eq!(
            FixedPoint::quantize(-0.001, QFormat::IO, Rounding::Truncate)
                .unwrap()
                .raw(),
            -1
        );
    }

    #[test]
    fn leading_one_examples() {
        assert_eq!(q(6.0).leading_one(), Ok(2));
        assert_eq!(q(1.0).leading_one(), Ok(0));
        assert_eq!(q(0.25).leading_one(), Ok(-2));
        assert!(matches!(
            q(0.0).leading_one(),
            Err(Error::NonPositiveInput { .. })
        ));
        assert!(matches!(
            q(-1.0).leading_one(),
            Err(Error::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(q(6.0).fraction_after_leading_one(2).unwrap().to_f64(), 0.5);
        assert_eq!(q(1.0).fraction_after_leading_one(0).unwrap().to_f64(), 0.0);
        assert_eq!(
            q(0.375).fraction_after_leading_one(-2).unwrap().to_f64(),
            0.5
        );
        assert!(q(6.0).fraction_after_leading_one(1).is_err());
        assert!(q(-6.0).fraction_after_leading_one(2).is_err());
    }

    #[test]
    fn shift_examples() {
        assert_eq!(q(1.5).shift(2).unwrap().to_f64(), 6.0);
        assert_eq!(q(1.0).shift(-3).unwrap().to_f64(), 0.125);
        let five = FixedPoint::from_raw(5, QFormat::IO).unwrap();
        assert_eq!(five.shift(-1).unwrap().raw(), 2);
        let m5 = FixedPoint::from_raw(-5, QFormat::IO).unwrap();
        assert_eq!(m5.shift(-1).unwrap().raw(), -3);
        assert!(q(100.0).shift(1).is_err());
        assert_eq!(q(0.0).shift(200).unwrap().raw(), 0);
        assert_eq!(q(1.0).shift(-300).unwrap().raw(), 0);
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(
            q(1.5).mul(q(2.0), Rounding::Truncate).unwrap().to_f64(),
            3.0
        );
        assert_eq!(q(0.5).checked_add(q(0.25)).unwrap().to_f64(), 0.75);
        let three = FixedPoint::from_raw(3, QFormat::IO).unwrap();
        assert_eq!(three.mul(three, Rounding::Truncate).unwrap().raw(), 0);
        assert!(q(100.0).checked_add(q(100.0)).is_err());
        assert!(q(-128.0).checked_neg().is_err());
        assert_eq!(q(1.0).checked_sub(q(3.0)).unwrap().to_f64(), -2.0);
        let wide = FixedPoint::from_int(1, QFormat::ACCUMULATOR).unwrap();
        assert!(matches!(
            q(1.0).checked_add(wide),
            Err(Error::FormatMismatch { .. })
        ));
        // Mixed formats go through an explicit output format.
        let p = q(1.5)
            .mul_into(wide, QFormat::ACCUMULATOR, Rounding::Truncate)
            .unwrap();
        assert_eq!(p.to_f64(), 1.5);
    }

    #[test]
    fn mul_rounding_modes() {
        let a = FixedPoint::from_raw(3, QFormat::IO).unwrap();
        let b = FixedPoint::from_raw(200, QFormat::IO).unwrap();
        // 600 / 256 = 2.34
        assert_eq!(a.mul(b, Rounding::Truncate).unwrap().raw(), 2);
        assert_eq!(a.mul(b, Rounding::Nearest).unwrap().raw(), 2);
        let c = FixedPoint::from_raw(-3, QFormat::IO).unwrap();
        assert_eq!(c.mul(b, Rounding::Truncate).unwrap().raw(), -3);
        assert_eq!(c.mul(b, Rounding::Nearest).unwrap().raw(), -2);
    }

    #[test]
    fn cross_format_compare() {
        let a = FixedPoint::from_int(1, QFormat::TABLE).unwrap();
        let b = FixedPoint::from_int(1, QFormat::ACCUMULATOR).unwrap();
        assert_eq!(a.cmp_value(b), Ordering::Equal);
        assert_eq!(q(0.5).cmp_value(b), Ordering::Less);
    }

    fn any_format() -> impl Strategy<Value = QFormat> {
        (2u32..=64)
            .prop_flat_map(|total| (Just(total), 1..total))
            .prop_map(|(t, f)| QFormat::new(t, f).unwrap())
    }

    fn any_value() -> impl Strategy<Value = FixedPoint> {
        any_format().prop_flat_map(|fmt| {
            (fmt.min_raw()..=fmt.max_raw()).prop_map(move |r| FixedPoint::from_raw(r, fmt).unwrap())
        })
    }

    proptest! {
        #[test]
        fn quantize_round_trips_raw(x in any_value()) {
            // f64 holds 53 bits; wider mantissas are not exactly convertible.
            prop_assume!(x.raw().unsigned_abs() < (1u64 << 53));
            for mode in [Rounding::Truncate, Rounding::Nearest] {
                let back = FixedPoint::quantize(x.to_f64(), x.format(), mode).unwrap();
                prop_assert_eq!(back, x);
            }
        }

        #[test]
        fn leading_one_reconstructs(x in any_value()) {
            prop_assume!(x.raw() > 0 && x.raw() < (1i64 << 53));
            let k = x.leading_one().unwrap();
            let f = x.fraction_after_leading_one(k).unwrap();
            prop_assert!(f.raw() >= 0);
            prop_assert!(f.to_f64() < 1.0);
            // 2^k (1 + f) reconstructs x exactly when no fraction bits were
            // truncated, and otherwise from below within 2^(k - frac_bits).
            let frac = x.format().frac_bits() as i32;
            let recon = (k as f64).exp2() * (1.0 + f.to_f64());
            let err = x.to_f64() - recon;
            prop_assert!(err >= 0.0);
            prop_assert!(err < ((k - frac) as f64).exp2().max(0.0) + 1e-300);
            if k <= 0 {
                prop_assert_eq!(err, 0.0);
            }
        }

        #[test]
        fn shift_inverts_without_bit_loss(x in any_value(), a in 0i32..70) {
            let up = x.shift(a);
            if let Ok(up) = up {
                prop_assert_eq!(up.shift(-a).unwrap(), x);
            }
            let down = x.shift(-a).unwrap();
            let lost = a >= 64 || (x.raw() as i128) & ((1i128 << a.min(127)) - 1) != 0;
            if !lost {
                prop_assert_eq!(down.shift(a).unwrap(), x);
            }
        }

        #[test]
        fn quantize_error_bounds(v in -100.0f64..100.0) {
            let t = FixedPoint::quantize(v, QFormat::IO, Rounding::Truncate).unwrap();
            let n = FixedPoint::quantize(v, QFormat::IO, Rounding::Nearest).unwrap();
            let ulp = QFormat::IO.resolution();
            prop_assert!((t.to_f64() - v).abs() <= ulp);
            prop_assert!((n.to_f64() - v).abs() <= ulp / 2.0);
        }
    }
}
