//! Pre-stored lookup tables consumed by the kernels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, QFormat, Rounding};

/// Largest supported table parameter; `2^17` entries is already far beyond
/// anything a hardware block would store.
pub const MAX_TABLE_BITS: u32 = 16;

fn check_bits(name: &str, bits: u32) -> Result<()> {
    if (1..=MAX_TABLE_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be in 1..={MAX_TABLE_BITS}, got {bits}"
        )))
    }
}

/// `2^(j / 2^m)` for `j = 0 .. 2^m`: the fractional powers of two addressed by
/// the top `m` fraction bits of the reciprocal-square-root exponent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pow2FracTable {
    m: u32,
    entries: Vec<FixedPoint>,
}

impl Pow2FracTable {
    /// Entries are rounded to nearest. Adjacent entries are non-decreasing;
    /// they are strictly increasing as long as `format` resolves them.
    pub fn build(m: u32, format: QFormat) -> Result<Self> {
        check_bits("m", m)?;
        let n = 1usize << m;
        let step = (-(m as f64)).exp2();
        let entries = (0..n)
            .map(|j| FixedPoint::quantize((j as f64 * step).exp2(), format, Rounding::Nearest))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pow2FracTable { m, entries })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn format(&self) -> QFormat {
        self.entries[0].format()
    }

    pub fn entries(&self) -> &[FixedPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `1/1, 1/2, ..., 1/(2^(alpha_star+1) - 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecipTable {
    alpha_star: u32,
    entries: Vec<FixedPoint>,
}

impl RecipTable {
    pub fn build(alpha_star: u32, format: QFormat) -> Result<Self> {
        check_bits("alpha_star", alpha_star)?;
        let n = (1usize << (alpha_star + 1)) - 1;
        let entries = (1..=n)
            .map(|d| FixedPoint::quantize(1.0 / d as f64, format, Rounding::Nearest))
            .collect::<Result<Vec<_>>>()?;
        if entries[n - 1].raw() <= 0 {
            return Err(Error::InvalidParameter(format!(
                "{format} cannot represent 1/{n}; use more fractional bits or a smaller alpha_star"
            )));
        }
        Ok(RecipTable {
            alpha_star,
            entries,
        })
    }

    pub fn alpha_star(&self) -> u32 {
        self.alpha_star
    }

    pub fn format(&self) -> QFormat {
        self.entries[0].format()
    }

    /// `entries()[i]` holds `1/(i+1)`.
    pub fn entries(&self) -> &[FixedPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored approximation of `1/d`, for `1 <= d <= len()`.
    pub fn recip_of(&self, d: usize) -> FixedPoint {
        self.entries[d - 1]
    }
}
