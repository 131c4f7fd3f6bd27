//! Scalar approximation kernels.
//!
//! Each kernel avoids division and square roots: it uses shifts, table reads,
//! additions and multiplications only. Every kernel comes in two variants. The
//! fixed-point variant is bit-exact hardware arithmetic, reached through
//! [`Kernels`] or the free functions. The double-precision variant lives in
//! [`real`] and runs the same algorithm with exact tables.

mod exp;
mod gelu;
pub mod real;
mod reciprocal;
mod rsqrt;
mod tables;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, QFormat, Rounding};

pub use self::exp::{EXP_ACCURATE_HI, EXP_ACCURATE_LO};
pub use self::gelu::{PiecewiseLinear, Segment};
pub use self::reciprocal::{lmsr_recip, msr_recip};
pub use self::rsqrt::recip_sqrt;
pub use self::tables::{Pow2FracTable, RecipTable, MAX_TABLE_BITS};

/// Formats used by the kernels and layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formats {
    /// Layer inputs and outputs.
    pub io: QFormat,
    /// Reductions, Padé terms and reciprocals.
    pub accumulator: QFormat,
    /// Table entries and GELU coefficients.
    pub table: QFormat,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            io: QFormat::IO,
            accumulator: QFormat::ACCUMULATOR,
            table: QFormat::TABLE,
        }
    }
}

/// Tunable knobs of the approximations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    /// Fraction bits kept when indexing the `2^v` table.
    pub m: u32,
    /// Reciprocal table threshold; the table has `2^(alpha_star+1) - 1` entries.
    pub alpha_star: u32,
    /// Interpolate between reciprocal table entries (LMSR) instead of MSR.
    pub use_lmsr: bool,
    pub gelu: PiecewiseLinear,
    pub formats: Formats,
    /// Rounding of internal products. Results are rounded to nearest when
    /// narrowed back to the I/O format.
    pub rounding: Rounding,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            m: 4,
            alpha_star: 4,
            use_lmsr: false,
            gelu: PiecewiseLinear::peano_gelu(),
            formats: Formats::default(),
            rounding: Rounding::Truncate,
        }
    }
}

impl ApproxParams {
    pub fn with_m(mut self, m: u32) -> Self {
        self.m = m;
        self
    }

    pub fn with_alpha_star(mut self, alpha_star: u32) -> Self {
        self.alpha_star = alpha_star;
        self
    }

    pub fn with_lmsr(mut self, use_lmsr: bool) -> Self {
        self.use_lmsr = use_lmsr;
        self
    }

    pub fn with_gelu(mut self, gelu: PiecewiseLinear) -> Self {
        self.gelu = gelu;
        self
    }

    pub fn with_formats(mut self, formats: Formats) -> Self {
        self.formats = formats;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("alpha_star", self.alpha_star)] {
            if !(1..=MAX_TABLE_BITS).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be in 1..={MAX_TABLE_BITS}, got {v}"
                )));
            }
        }
        let Formats {
            io, accumulator, ..
        } = self.formats;
        if accumulator.frac_bits() < io.frac_bits() || accumulator.int_bits() < io.int_bits() {
            return Err(Error::InvalidParameter(format!(
                "accumulator format {accumulator} must contain the I/O format {io}"
            )));
        }
        // The Padé terms reach 12 + 6*2 + 2^2 = 28 and the sums of exponentials
        // must stay representable; six integer bits is a hard floor.
        if accumulator.int_bits() < 6 {
            return Err(Error::InvalidParameter(format!(
                "accumulator format {accumulator} needs at least 6 integer bits"
            )));
        }
        Ok(())
    }
}

/// Segment coefficients brought into fixed point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FixedSegment {
    pub left: FixedPoint,
    /// Quantized in the table format, then widened.
    pub slope: FixedPoint,
    /// Quantized directly in the accumulator format; offsets reach the
    /// output range, which the table format does not cover.
    pub offset: FixedPoint,
}

/// Validated parameters plus the tables and coefficients they imply.
///
/// Construction does all table building; every kernel call afterwards is a
/// pure function of its input, so a `Kernels` can be shared across threads.
#[derive(Debug, Clone)]
pub struct Kernels {
    params: ApproxParams,
    pow2: Pow2FracTable,
    recip: RecipTable,
    /// Breakpoints quantized to the I/O format, in order.
    gelu_breaks: Vec<FixedPoint>,
    /// One per interior interval; coefficients widened to the accumulator.
    gelu_segments: Vec<FixedSegment>,
}

impl Kernels {
    pub fn new(params: ApproxParams) -> Result<Self> {
        params.validate()?;
        let f = params.formats;
        let pow2 = Pow2FracTable::build(params.m, f.table)?;
        let recip = RecipTable::build(params.alpha_star, f.table)?;
        let (gelu_breaks, gelu_segments) = gelu::quantize_segments(&params.gelu, &f)?;
        Ok(Kernels {
            params,
            pow2,
            recip,
            gelu_breaks,
            gelu_segments,
        })
    }

    pub fn params(&self) -> &ApproxParams {
        &self.params
    }

    pub fn formats(&self) -> Formats {
        self.params.formats
    }

    pub fn pow2_table(&self) -> &Pow2FracTable {
        &self.pow2
    }

    pub fn recip_table(&self) -> &RecipTable {
        &self.recip
    }

    /// `1/sqrt(x)` in `x`'s format.
    pub fn recip_sqrt(&self, x: FixedPoint) -> Result<FixedPoint> {
        recip_sqrt(x, &self.pow2)
    }

    /// `1/x` via MSR or LMSR, as configured, in `x`'s format.
    pub fn reciprocal(&self, x: FixedPoint) -> Result<FixedPoint> {
        if self.params.use_lmsr {
            lmsr_recip(x, &self.recip)
        } else {
            msr_recip(x, &self.recip)
        }
    }

    pub(crate) fn widen(&self, x: FixedPoint) -> Result<FixedPoint> {
        x.requantize(self.params.formats.accumulator, Rounding::Nearest)
    }

    pub(crate) fn mul(&self, a: FixedPoint, b: FixedPoint) -> Result<FixedPoint> {
        a.mul(b, self.params.rounding)
    }
}

impl Default for Kernels {
    fn default() -> Self {
        Kernels::new(ApproxParams::default()).expect("default parameters are valid")
    }
}
