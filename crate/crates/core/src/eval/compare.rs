use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{ApproxParams, Kernels};
use crate::error::{Error, Result};
use crate::fixedpoint::{QFormat, Rounding};
use crate::layers::reference::{reference_gelu_map, reference_layer_norm, reference_softmax};
use crate::layers::{peano_gelu_row, peano_layer_norm, peano_softmax, LayerNormParams, Tensor2D};

/// Largest `|sum(y) - 1|` of the softmax kernel, measured over
/// `gaussian_tensor(100_000, 197, 1.0, 0, Q8.8)` with `alpha_star = 4` and
/// MSR. Dominated by rounding 197 outputs of about 1/197 each to Q8.8.
pub const SOFTMAX_SUM_DEVIATION_BOUND: f64 = 0.148_437_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    LayerNorm,
    Softmax,
    Gelu,
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "layernorm" => Ok(Layer::LayerNorm),
            "softmax" => Ok(Layer::Softmax),
            "gelu" => Ok(Layer::Gelu),
            _ => Err(Error::InvalidParameter(format!("unknown layer {s:?}"))),
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::LayerNorm => "layernorm",
            Layer::Softmax => "softmax",
            Layer::Gelu => "gelu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowStats {
    pub mse: f64,
    pub max_abs_err: f64,
    /// `sum(y) - 1` for softmax rows.
    pub sum_deviation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumDeviation {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl SumDeviation {
    /// Largest `|sum(y) - 1|` over all rows.
    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCompareReport {
    pub layer: Layer,
    pub rows: usize,
    pub cols: usize,
    pub m: u32,
    pub alpha_star: u32,
    pub use_lmsr: bool,
    /// Mean over rows of the per-row MSE.
    pub mean_mse: f64,
    pub max_abs_err: f64,
    pub sum_deviation: Option<SumDeviation>,
    pub per_row: Vec<RowStats>,
}

/// Runs `layer` on every row of `input` and compares against the exact layer
/// evaluated on the same (already quantized) inputs. Layer norm uses unit
/// `gamma`, zero `beta` and a variance floor of one I/O ulp on both sides.
pub fn layer_compare(
    input: &Tensor2D,
    layer: Layer,
    params: &ApproxParams,
) -> Result<LayerCompareReport> {
    if input.rows() == 0 || input.cols() == 0 {
        return Err(Error::EmptyRow);
    }
    let io = params.formats.io;
    if input.format() != io {
        return Err(Error::FormatMismatch {
            op: "layer_compare",
            left: input.format(),
            right: io,
        });
    }
    let k = Kernels::new(params.clone())?;
    let cols = input.cols();
    let ln = LayerNormParams::identity(cols, io)?;
    let eps = io.resolution();
    let ones = vec![1.0; cols];
    let zeros = vec![0.0; cols];

    let per_row = (0..input.rows())
        .into_par_iter()
        .map(|r| -> Result<RowStats> {
            let x = input.row(r);
            let xf = input.row_f64(r);
            let (approx, exact) = match layer {
                Layer::LayerNorm => (
                    peano_layer_norm(&x, &ln, &k)?,
                    reference_layer_norm(&xf, &ones, &zeros, eps)?,
                ),
                Layer::Softmax => (peano_softmax(&x, &k)?, reference_softmax(&xf)?),
                Layer::Gelu => (peano_gelu_row(&x, &k)?, reference_gelu_map(&xf)),
            };
            let approx: Vec<f64> = approx.iter().map(|v| v.to_f64()).collect();
            let mut sum_sq = 0.0;
            let mut max_abs_err: f64 = 0.0;
            for (a, e) in approx.iter().zip(&exact) {
                sum_sq += (a - e) * (a - e);
                max_abs_err = max_abs_err.max((a - e).abs());
            }
            Ok(RowStats {
                mse: sum_sq / cols as f64,
                max_abs_err,
                sum_deviation: (layer == Layer::Softmax).then(|| approx.iter().sum::<f64>() - 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_row.len() as f64;
    let mean_mse = per_row.iter().map(|s| s.mse).sum::<f64>() / n;
    let max_abs_err = per_row.iter().map(|s| s.max_abs_err).fold(0.0, f64::max);
    let sum_deviation = (layer == Layer::Softmax).then(|| {
        let devs = per_row.iter().filter_map(|s| s.sum_deviation);
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for d in devs {
            min = min.min(d);
            max = max.max(d);
            sum += d;
        }
        SumDeviation {
            min,
            mean: sum / n,
            max,
        }
    });
    Ok(LayerCompareReport {
        layer,
        rows: input.rows(),
        cols,
        m: params.m,
        alpha_star: params.alpha_star,
        use_lmsr: params.use_lmsr,
        mean_mse,
        max_abs_err,
        sum_deviation,
        per_row,
    })
}

/// A `rows x cols` tensor of seeded standard-normal draws scaled by
/// `std_dev`, rounded to nearest in `format` and saturated to its range.
pub fn gaussian_tensor(
    rows: usize,
    cols: usize,
    std_dev: f64,
    seed: u64,
    format: QFormat,
) -> Result<Tensor2D> {
    if !(std_dev >= 0.0 && std_dev.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "standard deviation must be finite and non-negative, got {std_dev}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * std_dev).clamp(format.min_value(), format.max_value())
        })
        .collect();
    Tensor2D::from_f64(rows, cols, &values, format, Rounding::Nearest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_softmax_rows() {
        for n in [1, 3, 64, 197] {
            let t = Tensor2D::from_f64(4, n, &vec![0.5; 4 * n], QFormat::IO, Rounding::Nearest)
                .unwrap();
            let r = layer_compare(&t, Layer::Softmax, &ApproxParams::default()).unwrap();
            assert!(
                r.max_abs_err <= QFormat::IO.resolution(),
                "n={n}: {}",
                r.max_abs_err
            );
            assert!(r.per_row.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn reproducible() {
        let p = ApproxParams::default();
        let t = gaussian_tensor(32, 197, 1.0, 3, QFormat::IO).unwrap();
        assert_eq!(t, gaussian_tensor(32, 197, 1.0, 3, QFormat::IO).unwrap());
        assert_ne!(t, gaussian_tensor(32, 197, 1.0, 4, QFormat::IO).unwrap());
        for layer in [Layer::LayerNorm, Layer::Softmax, Layer::Gelu] {
            let a = layer_compare(&t, layer, &p).unwrap();
            let b = layer_compare(&t, layer, &p).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.sum_deviation.is_some(), layer == Layer::Softmax);
            assert_eq!(a.per_row.len(), 32);
        }
    }

    #[test]
    fn larger_reciprocal_table_helps_softmax() {
        let t = gaussian_tensor(256, 197, 1.0, 11, QFormat::IO).unwrap();
        let small = layer_compare(&t, Layer::Softmax, &ApproxParams::default()).unwrap();
        let large = layer_compare(
            &t,
            Layer::Softmax,
            &ApproxParams::default().with_alpha_star(8),
        )
        .unwrap();
        assert!(
            large.mean_mse <= small.mean_mse,
            "{} > {}",
            large.mean_mse,
            small.mean_mse
        );
    }

    #[test]
    fn rejects_bad_input() {
        let p = ApproxParams::default();
        let empty = Tensor2D::zeros(0, 4, QFormat::IO);
        assert_eq!(layer_compare(&empty, Layer::Gelu, &p), Err(Error::EmptyRow));
        let wide = Tensor2D::zeros(1, 4, QFormat::ACCUMULATOR);
        assert!(matches!(
            layer_compare(&wide, Layer::Gelu, &p),
            Err(Error::FormatMismatch { .. })
        ));
        assert!(gaussian_tensor(1, 1, -1.0, 0, QFormat::IO).is_err());
        assert_eq!("LayerNorm".parse::<Layer>().unwrap(), Layer::LayerNorm);
        assert!("relu".parse::<Layer>().is_err());
    }
}
