use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::real::{peano_exp_real, recip_sqrt_real, reciprocal_real};
use crate::approx::{ApproxParams, Kernels};
use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, QFormat, Rounding};
use crate::layers::reference::{gelu, reference_layer_norm, reference_softmax};
use crate::layers::{
    peano_layer_norm, peano_layer_norm_real, peano_softmax, peano_softmax_real, LayerNormParams,
};

pub const DEFAULT_GRID_POINTS: usize = 100_000;
pub const DEFAULT_ROW_LEN: usize = 197;

/// Upper bound on the number of samples a single sweep may draw.
const MAX_SAMPLES: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    RecipSqrt,
    Reciprocal,
    Exp,
    Gelu,
    SoftmaxRow,
    LayernormRow,
}

impl Function {
    pub const ALL: [Function; 6] = [
        Function::RecipSqrt,
        Function::Reciprocal,
        Function::Exp,
        Function::Gelu,
        Function::SoftmaxRow,
        Function::LayernormRow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::RecipSqrt => "recip-sqrt",
            Function::Reciprocal => "reciprocal",
            Function::Exp => "exp",
            Function::Gelu => "gelu",
            Function::SoftmaxRow => "softmax-row",
            Function::LayernormRow => "layernorm-row",
        }
    }

    fn is_row(self) -> bool {
        matches!(self, Function::SoftmaxRow | Function::LayernormRow)
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        Function::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown function {s:?}")))
    }
}

/// How sample points are drawn from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `lo, lo + step, ...` up to and including `hi` when it falls on the grid.
    UniformStep { step: f64 },
    /// `count` evenly spaced points with both endpoints included.
    UniformPoints { count: usize },
    /// Every integer in the interval.
    Integers,
    /// `count` uniform draws from `[lo, hi)`.
    Random { count: usize, seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::UniformPoints {
            count: DEFAULT_GRID_POINTS,
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::UniformStep { step } => write!(f, "step:{step}"),
            Sampling::UniformPoints { count } => write!(f, "grid:{count}"),
            Sampling::Integers => f.write_str("integers"),
            Sampling::Random { count, seed } => write!(f, "random:{count}:{seed}"),
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    /// Parses `grid:<points>`, `step:<step>`, `integers` or
    /// `random:<count>[:<seed>]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognized sampling {s:?}"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let args: Vec<&str> = parts.collect();
        let sampling = match (kind, args.as_slice()) {
            ("integers", []) => Sampling::Integers,
            ("grid", []) => Sampling::default(),
            ("grid", [n]) => Sampling::UniformPoints {
                count: n.parse().map_err(|_| bad())?,
            },
            ("step", [h]) => Sampling::UniformStep {
                step: h.parse().map_err(|_| bad())?,
            },
            ("random", [n]) => Sampling::Random {
                count: n.parse().map_err(|_| bad())?,
                seed: 0,
            },
            ("random", [n, seed]) => Sampling::Random {
                count: n.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        sampling.validate()?;
        Ok(sampling)
    }
}

impl Sampling {
    fn validate(&self) -> Result<()> {
        match *self {
            Sampling::UniformStep { step } if !(step > 0.0 && step.is_finite()) => Err(
                Error::InvalidParameter(format!("step must be positive, got {step}")),
            ),
            Sampling::UniformPoints { count } | Sampling::Random { count, .. } if count == 0 => {
                Err(Error::InvalidParameter(
                    "sample count must be at least 1".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// Tables at full precision and shifts as exact power-of-two scaling;
    /// isolates the error of the method itself.
    #[default]
    RealArithmetic,
    /// The bit-accurate kernels, with inputs quantized to their working format.
    FixedPoint,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "real" | "real_arithmetic" => Ok(Precision::RealArithmetic),
            "fixed" | "fixed_point" => Ok(Precision::FixedPoint),
            _ => Err(Error::InvalidParameter(format!("unknown precision {s:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::RealArithmetic => "real_arithmetic",
            Precision::FixedPoint => "fixed_point",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub function: Function,
    pub lo: f64,
    pub hi: f64,
    pub sampling: Sampling,
    pub params: ApproxParams,
    pub precision: Precision,
    /// Elements per row for the row functions; samples are consumed in
    /// consecutive chunks and a short trailing chunk is dropped.
    pub row_len: usize,
}

impl SweepSpec {
    /// Default grid, default parameters, real arithmetic.
    pub fn new(function: Function, lo: f64, hi: f64) -> Self {
        SweepSpec {
            function,
            lo,
            hi,
            sampling: Sampling::default(),
            params: ApproxParams::default(),
            precision: Precision::default(),
            row_len: DEFAULT_ROW_LEN,
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_params(mut self, params: ApproxParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_row_len(mut self, row_len: usize) -> Self {
        self.row_len = row_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo >= self.hi {
            return Err(Error::EmptyInterval {
                lo: self.lo,
                hi: self.hi,
            });
        }
        self.sampling.validate()?;
        if self.function.is_row() && self.row_len == 0 {
            return Err(Error::InvalidParameter("row_len must be at least 1".into()));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub mse: f64,
    pub max_abs_err: f64,
    /// Input value at which `max_abs_err` was first reached.
    pub argmax_err: f64,
    /// Number of scalar outputs compared.
    pub sample_count: usize,
}

/// The sample points of `spec`, in ascending order except for random draws.
pub fn samples(spec: &SweepSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (lo, hi) = (spec.lo, spec.hi);
    let too_many = |n: f64| {
        Error::InvalidParameter(format!(
            "sweep would draw {n} samples (limit {MAX_SAMPLES})"
        ))
    };
    let points = match spec.sampling {
        Sampling::UniformStep { step } => {
            let n = ((hi - lo) / step * (1.0 + 1e-12)).floor() + 1.0;
            if n > MAX_SAMPLES as f64 {
                return Err(too_many(n));
            }
            (0..n as usize).map(|i| lo + step * i as f64).collect()
        }
        Sampling::UniformPoints { count } => {
            if count > MAX_SAMPLES {
                return Err(too_many(count as f64));
            }
            if count == 1 {
                vec![lo]
            } else {
                let last = (count - 1) as f64;
                (0..count)
                    .map(|i| lo + (hi - lo) * (i as f64 / last))
                    .collect()
            }
        }
        Sampling::Integers => {
            let (a, b) = (lo.ceil(), hi.floor());
            if a > b {
                return Err(Error::EmptyInterval { lo, hi });
            }
            if b - a + 1.0 > MAX_SAMPLES as f64 {
                return Err(too_many(b - a + 1.0));
            }
            (0..=(b - a) as usize).map(|i| a + i as f64).collect()
        }
        Sampling::Random { count, seed } => {
            if count > MAX_SAMPLES {
                return Err(too_many(count as f64));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| rng.random_range(lo..hi)).collect()
        }
    };
    Ok(points)
}

/// Sample inputs and their errors, in input order.
struct Errors {
    inputs: Vec<f64>,
    errors: Vec<f64>,
}

fn quantize(x: f64, format: QFormat) -> Result<FixedPoint> {
    FixedPoint::quantize(x, format, Rounding::Nearest)
}

fn scalar_errors(spec: &SweepSpec, xs: Vec<f64>) -> Result<Errors> {
    let p = &spec.params;
    let kernels = match spec.precision {
        Precision::FixedPoint => Some(Kernels::new(p.clone())?),
        Precision::RealArithmetic => None,
    };
    let f = spec.function;
    let errors = xs
        .par_iter()
        .map(|&x| -> Result<f64> {
            let (approx, exact) = match (&kernels, f) {
                (None, Function::RecipSqrt) => (recip_sqrt_real(x, p.m)?, 1.0 / x.sqrt()),
                (None, Function::Reciprocal) => {
                    (reciprocal_real(x, p.alpha_star, p.use_lmsr)?, 1.0 / x)
                }
                (None, Function::Exp) => (peano_exp_real(x, p.alpha_star, p.use_lmsr)?, x.exp()),
                (None, Function::Gelu) => (p.gelu.eval(x), gelu(x)),
                (Some(k), Function::RecipSqrt) => {
                    let q = quantize(x, p.formats.accumulator)?;
                    (k.recip_sqrt(q)?.to_f64(), 1.0 / x.sqrt())
                }
                (Some(k), Function::Reciprocal) => {
                    let q = quantize(x, p.formats.accumulator)?;
                    (k.reciprocal(q)?.to_f64(), 1.0 / x)
                }
                (Some(k), Function::Exp) => {
                    let q = quantize(x, p.formats.io)?;
                    (k.peano_exp(q)?.to_f64(), x.exp())
                }
                (Some(k), Function::Gelu) => {
                    let q = quantize(x, p.formats.io)?;
                    (k.gelu(q)?.to_f64(), gelu(x))
                }
                (_, Function::SoftmaxRow | Function::LayernormRow) => unreachable!(),
            };
            Ok(approx - exact)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Errors { inputs: xs, errors })
}

fn row_errors(spec: &SweepSpec, xs: Vec<f64>) -> Result<Errors> {
    let p = &spec.params;
    let n = spec.row_len;
    let rows = xs.len() / n;
    if rows == 0 {
        return Err(Error::InvalidParameter(format!(
            "{} samples do not fill a single row of {n}",
            xs.len()
        )));
    }
    let mut inputs = xs;
    inputs.truncate(rows * n);
    let eps = p.formats.io.resolution();
    let kernels = match spec.precision {
        Precision::FixedPoint => Some(Kernels::new(p.clone())?),
        Precision::RealArithmetic => None,
    };
    let ln_params = LayerNormParams::identity(n, p.formats.io)?;
    let ones = vec![1.0; n];
    let zeros = vec![0.0; n];
    let per_row = inputs
        .par_chunks(n)
        .map(|row| -> Result<Vec<f64>> {
            let exact = match spec.function {
                Function::SoftmaxRow => reference_softmax(row)?,
                _ => reference_layer_norm(row, &ones, &zeros, eps)?,
            };
            let approx = match (&kernels, spec.function) {
                (None, Function::SoftmaxRow) => peano_softmax_real(row, p.alpha_star, p.use_lmsr)?,
                (None, _) => peano_layer_norm_real(row, p.m, eps)?,
                (Some(k), f) => {
                    let q = row
                        .iter()
                        .map(|&x| quantize(x, p.formats.io))
                        .collect::<Result<Vec<_>>>()?;
                    let y = if f == Function::SoftmaxRow {
                        peano_softmax(&q, k)?
                    } else {
                        peano_layer_norm(&q, &ln_params, k)?
                    };
                    y.iter().map(|v| v.to_f64()).collect()
                }
            };
            Ok(approx.iter().zip(&exact).map(|(a, e)| a - e).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Errors {
        inputs,
        errors: per_row.concat(),
    })
}

/// Evaluates every sample of `spec` and reports the mean squared error and
/// the worst absolute error against the exact oracle.
///
/// ```
/// use peano::eval::{run_sweep, Function, Sampling, SweepSpec};
///
/// let spec = SweepSpec::new(Function::RecipSqrt, 1.0, 128.0)
///     .with_sampling(Sampling::UniformPoints { count: 10_000 });
/// let report = run_sweep(&spec)?;
/// assert!(report.mse > 5e-6 && report.mse < 2e-5);
/// # Ok::<(), peano::Error>(())
/// ```
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    let xs = samples(spec)?;
    let Errors { inputs, errors } = if spec.function.is_row() {
        row_errors(spec, xs)?
    } else {
        scalar_errors(spec, xs)?
    };
    let mut sum_sq = 0.0;
    let mut max_abs_err = 0.0;
    let mut argmax_err = inputs[0];
    for (&x, &e) in inputs.iter().zip(&errors) {
        sum_sq += e * e;
        if e.abs() > max_abs_err {
            max_abs_err = e.abs();
            argmax_err = x;
        }
    }
    Ok(SweepReport {
        spec: spec.clone(),
        mse: sum_sq / errors.len() as f64,
        max_abs_err,
        argmax_err,
        sample_count: errors.len(),
    })
}
