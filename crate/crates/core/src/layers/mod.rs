//! Row-wise layers built from the scalar kernels: layer normalization,
//! softmax and element-wise GELU.
//!
//! Rows are independent. The `*_rows` entry points process rows in parallel
//! and produce the same bits as a sequential loop.

pub mod reference;

use rayon::prelude::*;

use crate::approx::Kernels;
use crate::error::{Error, Result};
use crate::fixedpoint::{rescale, FixedPoint, QFormat, Rounding};

pub use self::reference::{reference_gelu_map, reference_layer_norm, reference_softmax};

/// Row-major matrix of fixed-point values sharing one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    format: QFormat,
    data: Vec<i64>,
}

impl Tensor2D {
    /// From raw mantissas.
    pub fn new(rows: usize, cols: usize, format: QFormat, data: Vec<i64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(&bad) = data
            .iter()
            .find(|&&r| r < format.min_raw() || r > format.max_raw())
        {
            FixedPoint::from_raw(bad, format)?;
        }
        Ok(Tensor2D {
            rows,
            cols,
            format,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, format: QFormat) -> Self {
        Tensor2D {
            rows,
            cols,
            format,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_f64(
        rows: usize,
        cols: usize,
        values: &[f64],
        format: QFormat,
        mode: Rounding,
    ) -> Result<Self> {
        let data = values
            .iter()
            .map(|&v| FixedPoint::quantize(v, format, mode).map(FixedPoint::raw))
            .collect::<Result<Vec<_>>>()?;
        Tensor2D::new(rows, cols, format, data)
    }

    pub fn from_rows(rows: &[Vec<FixedPoint>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let format = rows
            .first()
            .and_then(|r| r.first())
            .map_or(QFormat::IO, |v| v.format());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            check_row_format(row)?;
            if let Some(v) = row.first() {
                if v.format() != format {
                    return Err(Error::FormatMismatch {
                        op: "Tensor2D::from_rows",
                        left: format,
                        right: v.format(),
                    });
                }
            }
            data.extend(row.iter().map(|v| v.raw()));
        }
        Ok(Tensor2D {
            rows: rows.len(),
            cols,
            format,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn raw_data(&self) -> &[i64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> FixedPoint {
        FixedPoint::from_raw(self.data[r * self.cols + c], self.format)
            .expect("tensor elements are range-checked")
    }

    pub fn row(&self, r: usize) -> Vec<FixedPoint> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn row_f64(&self, r: usize) -> Vec<f64> {
        self.row(r).into_iter().map(FixedPoint::to_f64).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let res = self.format.resolution();
        self.data.iter().map(|&r| r as f64 * res).collect()
    }

    /// Applies `f` to every row in parallel, keeping row order.
    pub fn map_rows<F>(&self, f: F) -> Result<Tensor2D>
    where
        F: Fn(&[FixedPoint]) -> Result<Vec<FixedPoint>> + Sync,
    {
        let rows = (0..self.rows)
            .into_par_iter()
            .map(|r| f(&self.row(r)))
            .collect::<Result<Vec<_>>>()?;
        if self.rows == 0 {
            return Ok(Tensor2D::zeros(0, self.cols, self.format));
        }
        Tensor2D::from_rows(&rows)
    }
}

/// Per-column affine parameters and the variance floor for layer norm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerNormParams {
    gamma: Vec<FixedPoint>,
    beta: Vec<FixedPoint>,
    eps_floor: FixedPoint,
}

impl LayerNormParams {
    pub fn new(
        gamma: Vec<FixedPoint>,
        beta: Vec<FixedPoint>,
        eps_floor: FixedPoint,
    ) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::ShapeMismatch {
                expected: gamma.len(),
                got: beta.len(),
            });
        }
        if !eps_floor.is_positive() {
            return Err(Error::InvalidParameter("eps_floor must be positive".into()));
        }
        Ok(LayerNormParams {
            gamma,
            beta,
            eps_floor,
        })
    }

    /// `gamma = 1`, `beta = 0`, variance floor of one ulp of `format`.
    pub fn identity(cols: usize, format: QFormat) -> Result<Self> {
        let one = FixedPoint::from_int(1, format)?;
        let eps = FixedPoint::from_raw(1, format)?;
        LayerNormParams::new(vec![one; cols], vec![FixedPoint::zero(format); cols], eps)
    }

    pub fn cols(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[FixedPoint] {
        &self.gamma
    }

    pub fn beta(&self) -> &[FixedPoint] {
        &self.beta
    }

    pub fn eps_floor(&self) -> FixedPoint {
        self.eps_floor
    }
}

fn check_row_format(row: &[FixedPoint]) -> Result<QFormat> {
    let first = row.first().ok_or(Error::EmptyRow)?.format();
    match row.iter().find(|v| v.format() != first) {
        Some(v) => Err(Error::FormatMismatch {
            op: "row",
            left: first,
            right: v.format(),
        }),
        None => Ok(first),
    }
}

/// Fractional bits of the pre-computed `1/n` constant. Wide enough that the
/// mean of a constant row of up to 4096 16-bit values comes out exact.
const INV_N_FRAC_BITS: u32 = 48;

/// `(sum * round(2^48 / n))` brought to `out`, rounding to nearest.
fn scaled_mean(sum: i128, sum_frac: u32, n: usize, out: QFormat) -> Result<FixedPoint> {
    let inv_n = ((1i128 << (INV_N_FRAC_BITS + 1)) / n as i128 + 1) >> 1;
    let product = sum.checked_mul(inv_n).ok_or(Error::Overflow {
        op: "layer_norm mean",
        format: out,
    })?;
    let raw = rescale(
        product,
        sum_frac + INV_N_FRAC_BITS,
        out.frac_bits(),
        Rounding::Nearest,
    );
    FixedPoint::from_wide(raw, out, "layer_norm mean")
}

/// Layer normalization of one row without division or square root.
///
/// Mean and mean of squares use a pre-computed `1/n`; the variance is
/// `E[x^2] - E[x]^2`, floored at `eps_floor`; its reciprocal square root comes
/// from the power-of-two table. Output is in the row's format.
pub fn peano_layer_norm(
    row: &[FixedPoint],
    p: &LayerNormParams,
    k: &Kernels,
) -> Result<Vec<FixedPoint>> {
    let fmt = check_row_format(row)?;
    let n = row.len();
    if p.cols() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: p.cols(),
        });
    }
    let acc = k.formats().accumulator;
    let overflow = Error::Overflow {
        op: "layer_norm sum",
        format: acc,
    };

    let mut sum: i128 = 0;
    let mut sum_sq: i128 = 0;
    for v in row {
        let r = v.raw() as i128;
        sum += r;
        sum_sq = r
            .checked_mul(r)
            .and_then(|sq| sum_sq.checked_add(sq))
            .ok_or_else(|| overflow.clone())?;
    }
    let avg = scaled_mean(sum, fmt.frac_bits(), n, acc)?;
    let avg_sq = scaled_mean(sum_sq, 2 * fmt.frac_bits(), n, acc)?;

    let var = avg_sq.checked_sub(k.mul(avg, avg)?)?;
    let eps = k.widen(p.eps_floor())?;
    let var = if var.cmp_value(eps).is_lt() { eps } else { var };
    let inv_sigma = k.recip_sqrt(var)?;

    row.iter()
        .zip(p.gamma().iter().zip(p.beta()))
        .map(|(&x, (&g, &b))| {
            let centered = k.widen(x)?.checked_sub(avg)?;
            let scaled = k.mul(k.mul(centered, inv_sigma)?, k.widen(g)?)?;
            scaled
                .checked_add(k.widen(b)?)?
                .requantize(fmt, Rounding::Nearest)
        })
        .collect()
}

/// Softmax of one row with the Padé exponential and multi-scale reciprocals.
///
/// Inputs are shifted so the maximum maps to 2; entries more than 5 below the
/// maximum contribute exactly zero. The normalizer is one reciprocal of the
/// row sum, multiplied into every term.
pub fn peano_softmax(row: &[FixedPoint], k: &Kernels) -> Result<Vec<FixedPoint>> {
    let fmt = check_row_format(row)?;
    let acc = k.formats().accumulator;
    let max = row.iter().map(|v| v.raw()).max().expect("row is non-empty");
    let max = k.widen(FixedPoint::from_raw(max, fmt)?)?;
    let two = FixedPoint::from_int(2, acc)?;

    let exps = row
        .iter()
        .map(|&x| {
            let shifted = k.widen(x)?.checked_sub(max)?.checked_add(two)?;
            k.peano_exp_wide(shifted)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum: i128 = exps.iter().map(|e| e.raw() as i128).sum();
    let sum = FixedPoint::from_wide(sum, acc, "softmax sum")?;
    let inv_sum = k.reciprocal(sum)?;

    exps.into_iter()
        .map(|e| k.mul(e, inv_sum)?.requantize(fmt, Rounding::Nearest))
        .collect()
}

/// [`peano_layer_norm`] in double precision with `gamma = 1`, `beta = 0`.
pub fn peano_layer_norm_real(row: &[f64], m: u32, eps_floor: f64) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let inv_n = 1.0 / row.len() as f64;
    let avg = row.iter().sum::<f64>() * inv_n;
    let avg_sq = row.iter().map(|x| x * x).sum::<f64>() * inv_n;
    let var = (avg_sq - avg * avg).max(eps_floor);
    let inv_sigma = crate::approx::real::recip_sqrt_real(var, m)?;
    Ok(row.iter().map(|x| (x - avg) * inv_sigma).collect())
}

/// [`peano_softmax`] in double precision.
pub fn peano_softmax_real(row: &[f64], alpha_star: u32, lmsr: bool) -> Result<Vec<f64>> {
    use crate::approx::real::{peano_exp_real, reciprocal_real};
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = row
        .iter()
        .map(|&x| peano_exp_real(x - max + 2.0, alpha_star, lmsr))
        .collect::<Result<Vec<_>>>()?;
    let inv_sum = reciprocal_real(exps.iter().sum(), alpha_star, lmsr)?;
    Ok(exps.into_iter().map(|e| e * inv_sum).collect())
}

pub fn peano_gelu_row(row: &[FixedPoint], k: &Kernels) -> Result<Vec<FixedPoint>> {
    row.iter().map(|&x| k.gelu(x)).collect()
}

pub fn layer_norm_rows(x: &Tensor2D, p: &LayerNormParams, k: &Kernels) -> Result<Tensor2D> {
    x.map_rows(|row| peano_layer_norm(row, p, k))
}

pub fn softmax_rows(x: &Tensor2D, k: &Kernels) -> Result<Tensor2D> {
    x.map_rows(|row| peano_softmax(row, k))
}

/// Element-wise GELU; shape and format are preserved.
pub fn peano_gelu_map(x: &Tensor2D, k: &Kernels) -> Result<Tensor2D> {
    let data = x
        .raw_data()
        .par_iter()
        .map(|&r| {
            k.gelu(FixedPoint::from_raw(r, x.format())?)
                .map(FixedPoint::raw)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor2D::new(x.rows(), x.cols(), x.format(), data)
}
