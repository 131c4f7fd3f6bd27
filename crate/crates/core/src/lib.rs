//! Division-free fixed-point approximations of the non-linear layers of a
//! vision transformer (layer normalization, softmax and GELU), together with
//! exact reference implementations and an error-analysis engine.
//!
//! The crate is layered bottom-up:
//!
//! - [`fixedpoint`]: signed Q-format values and bit-level primitives
//!   (leading-one detection, fraction extraction, shifts).
//! - [`approx`]: scalar kernels, namely reciprocal square root from a `2^v`
//!   table, Padé exponential, multi-scale reciprocal (MSR/LMSR) and
//!   piecewise-linear GELU.
//! - [`layers`]: row-wise layer norm, softmax and element-wise GELU, plus the
//!   double-precision oracles.
//! - [`eval`]: sweeps of each approximation against its oracle (MSE, max
//!   error) and per-row layer comparisons.
//!
//! ```
//! use peano::approx::Kernels;
//! use peano::fixedpoint::{FixedPoint, QFormat, Rounding};
//!
//! let k = Kernels::default();
//! let x = FixedPoint::quantize(59.0, QFormat::ACCUMULATOR, Rounding::Nearest)?;
//! let r = k.reciprocal(x)?;
//! assert!((r.to_f64() - 1.0 / 59.0).abs() < 1e-3);
//! # Ok::<(), peano::Error>(())
//! ```

pub mod approx;
mod error;
pub mod eval;
pub mod fixedpoint;
pub mod layers;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fixed-point.md")]
    mod fixed_point {}
    #[doc = include_str!("../../../book/src/reciprocal-sqrt.md")]
    mod reciprocal_sqrt {}
    #[doc = include_str!("../../../book/src/exponential-and-reciprocal.md")]
    mod exponential_and_reciprocal {}
    #[doc = include_str!("../../../book/src/gelu.md")]
    mod gelu {}
    #[doc = include_str!("../../../book/src/layers.md")]
    mod layers {}
    #[doc = include_str!("../../../book/src/error-analysis.md")]
    mod error_analysis {}
}
