//! Multi-scale reciprocal (MSR) and its linearly interpolated variant (LMSR).
//!
//! `1/x` is replaced by `(1/floor(x / 2^alpha)) / 2^alpha`, where the scale
//! `alpha` is chosen from the leading one of `x` so that the table index always
//! lands in `[1, 2^(alpha_star+1) - 1]`. Only a right shift and a table read are
//! needed; the index is `x` with its low bits dropped.

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, Rounding};

use super::real::{check_reciprocal_input, msr_scale, split_pow2};
use super::tables::RecipTable;

/// Scale shift, integer table index and the bit-width of the dropped part.
fn locate(op: &'static str, x: FixedPoint, alpha_star: u32) -> Result<(u32, usize, u32)> {
    if !x.is_positive() {
        return Err(Error::NonPositiveInput { op });
    }
    let lead = x.leading_one()?;
    if lead < 0 {
        return Err(Error::RangeViolation {
            op,
            value: x.to_f64(),
            lo: 1.0,
            hi: x.format().max_value(),
        });
    }
    let alpha = msr_scale(lead, alpha_star);
    let dropped = alpha + x.format().frac_bits();
    let index = (x.raw() >> dropped) as usize;
    Ok((alpha, index, dropped))
}

/// Table value (in the table's format) brought to `x`'s format and shifted
/// right by the scale.
fn finish(entry: FixedPoint, x: FixedPoint, alpha: u32) -> Result<FixedPoint> {
    entry
        .requantize(x.format(), Rounding::Nearest)?
        .shift(-(alpha as i32))
}

/// MSR approximation of `1/x` for `x >= 1`, in `x`'s format.
pub fn msr_recip(x: FixedPoint, table: &RecipTable) -> Result<FixedPoint> {
    let (alpha, index, _) = locate("msr_recip", x, table.alpha_star())?;
    finish(table.recip_of(index), x, alpha)
}

/// LMSR approximation of `1/x` for `x >= 1`, in `x`'s format.
///
/// The bits dropped when forming the index (scale bits and fraction bits)
/// are the interpolation weight between `1/index` and `1/(index+1)`. Past the
/// last entry the neighbour is `1/2^(alpha_star+1)`, which is the entry for
/// `2^alpha_star` shifted right once.
pub fn lmsr_recip(x: FixedPoint, table: &RecipTable) -> Result<FixedPoint> {
    let (alpha, index, dropped) = locate("lmsr_recip", x, table.alpha_star())?;
    let lo = table.recip_of(index).raw() as i128;
    let hi = if index < table.len() {
        table.recip_of(index + 1).raw() as i128
    } else {
        (table.recip_of(1 << table.alpha_star()).raw() >> 1) as i128
    };
    let weight = (x.raw() as i128) & ((1i128 << dropped) - 1);
    let interp = lo + (((hi - lo) * weight) >> dropped);
    let entry = FixedPoint::from_wide(interp, table.format(), "lmsr_recip")?;
    finish(entry, x, alpha)
}

pub fn msr_recip_real(x: f64, alpha_star: u32) -> Result<f64> {
    check_reciprocal_input("msr_recip", x)?;
    let (lead, _) = split_pow2(x);
    let scale = (msr_scale(lead, alpha_star) as f64).exp2();
    let index = (x / scale).floor();
    Ok(1.0 / index / scale)
}

pub fn lmsr_recip_real(x: f64, alpha_star: u32) -> Result<f64> {
    check_reciprocal_input("lmsr_recip", x)?;
    let (lead, _) = split_pow2(x);
    let scale = (msr_scale(lead, alpha_star) as f64).exp2();
    let s = x / scale;
    let index = s.floor();
    let weight = s - index;
    let lo = 1.0 / index;
    let hi = 1.0 / (index + 1.0);
    Ok((lo + (hi - lo) * weight) / scale)
}

pub fn reciprocal_real(x: f64, alpha_star: u32, lmsr: bool) -> Result<f64> {
    if lmsr {
        lmsr_recip_real(x, alpha_star)
    } else {
        msr_recip_real(x, alpha_star)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::QFormat;

    fn table(a: u32) -> RecipTable {
        RecipTable::build(a, QFormat::TABLE).unwrap()
    }

    fn acc(v: f64) -> FixedPoint {
        FixedPoint::quantize(v, QFormat::ACCUMULATOR, Rounding::Nearest).unwrap()
    }

    #[test]
    fn msr_examples() {
        let t = table(4);
        let y = msr_recip(acc(59.0), &t).unwrap();
        let expected = t
            .recip_of(29)
            .requantize(QFormat::ACCUMULATOR, Rounding::Nearest)
            .unwrap()
            .shift(-1)
            .unwrap();
        assert_eq!(y, expected);
        assert!((y.to_f64() - 1.0 / 58.0).abs() < 1e-4);
        assert_eq!(msr_recip(acc(1.0), &t).unwrap().to_f64(), 1.0);
        assert_eq!(msr_recip(acc(16.0), &t).unwrap().to_f64(), 0.0625);
        assert_eq!(msr_recip_real(59.0, 4).unwrap(), 1.0 / 58.0);
        assert_eq!(msr_recip_real(16.0, 4).unwrap(), 0.0625);
    }

    #[test]
    fn lmsr_examples() {
        let t = table(4);
        // Midpoint of round(2^14/29)=565 and round(2^14/30)=546, floored,
        // widened to 16 fraction bits and halved.
        let y = lmsr_recip(acc(59.0), &t).unwrap();
        assert_eq!(y.raw(), (555 << 2) >> 1);
        let real = lmsr_recip_real(59.0, 4).unwrap();
        assert!((real - 0.016_954_0).abs() < 1e-7, "{real}");
        assert_eq!(lmsr_recip(acc(16.0), &t).unwrap().to_f64(), 0.0625);
        assert_eq!(lmsr_recip_real(16.0, 4).unwrap(), 0.0625);
        let last = lmsr_recip(acc(31.0), &t).unwrap();
        assert_eq!(
            last,
            t.recip_of(31)
                .requantize(QFormat::ACCUMULATOR, Rounding::Nearest)
                .unwrap()
        );
        assert_eq!(lmsr_recip_real(31.0, 4).unwrap(), 1.0 / 31.0);
    }

    #[test]
    fn lmsr_interpolates_past_last_entry() {
        let t = table(4);
        // 31.5: index 31 with weight 1/2 toward 1/32.
        let y = lmsr_recip(acc(31.5), &t).unwrap().to_f64();
        let mid = (1.0 / 31.0 + 1.0 / 32.0) / 2.0;
        assert!((y - mid).abs() < 1e-4, "{y}");
        assert!((lmsr_recip_real(31.5, 4).unwrap() - mid).abs() < 1e-15);
        // 63: alpha=1, index 31, weight 1/2.
        assert!((lmsr_recip_real(63.0, 4).unwrap() - mid / 2.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let t = table(4);
        assert!(matches!(
            msr_recip(acc(0.0), &t),
            Err(Error::NonPositiveInput { .. })
        ));
        assert!(matches!(
            lmsr_recip(acc(-3.0), &t),
            Err(Error::NonPositiveInput { .. })
        ));
        assert!(matches!(
            msr_recip(acc(0.5), &t),
            Err(Error::RangeViolation { .. })
        ));
        assert!(msr_recip_real(0.5, 4).is_err());
        assert!(lmsr_recip_real(-1.0, 4).is_err());
        assert!(msr_recip_real(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn exact_table_hits() {
        for a in 1..=8 {
            let t = table(a);
            for d in 1..=t.len() {
                let x = acc(d as f64);
                let want = t
                    .recip_of(d)
                    .requantize(QFormat::ACCUMULATOR, Rounding::Nearest)
                    .unwrap();
                assert_eq!(msr_recip(x, &t).unwrap(), want);
                assert_eq!(lmsr_recip(x, &t).unwrap(), want);
                assert_eq!(msr_recip_real(d as f64, a).unwrap(), 1.0 / d as f64);
            }
        }
    }

    #[test]
    fn msr_never_underestimates() {
        let t = table(4);
        let slack = 0.5 / 16384.0 + 1.0 / 65536.0;
        for i in 0..40_000 {
            let x = 1.0 + i as f64 * 0.0123;
            let truth = 1.0 / x;
            assert!(msr_recip_real(x, 4).unwrap() >= truth);
            assert!(lmsr_recip_real(x, 4).unwrap() >= truth * (1.0 - 1e-15));
            let fixed = msr_recip(acc(x), &t).unwrap().to_f64();
            assert!(fixed >= 1.0 / acc(x).to_f64() - slack, "x={x}");
        }
    }

    #[test]
    fn lmsr_at_least_as_accurate_on_integers() {
        let wide = QFormat::new(48, 16).unwrap();
        for a in [4, 5] {
            let t = table(a);
            let ulp = 1.0 / 65536.0;
            for n in 1u32..=(1 << 20) {
                let x = n as f64;
                let truth = 1.0 / x;
                let e_msr = (msr_recip_real(x, a).unwrap() - truth).abs();
                let e_lmsr = (lmsr_recip_real(x, a).unwrap() - truth).abs();
                assert!(e_lmsr <= e_msr, "alpha*={a} x={n}");
                if n % 61 == 0 {
                    let xf = FixedPoint::from_int(n as i64, wide).unwrap();
                    let fm = (msr_recip(xf, &t).unwrap().to_f64() - truth).abs();
                    let fl = (lmsr_recip(xf, &t).unwrap().to_f64() - truth).abs();
                    assert!(fl <= fm + 2.0 * ulp, "alpha*={a} x={n}");
                }
            }
        }
    }
}
