//! Piecewise-linear GELU.
//!
//! The function is zero left of the first breakpoint, the identity from the
//! last breakpoint on, and linear on each interval in between. Each interior
//! segment is stored as `slope * (x - left) + offset`, so evaluating it costs
//! one subtraction, one multiply and one add after the segment is selected by
//! comparisons.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, Rounding};
use crate::layers::reference::gelu as gelu_oracle;

use super::{FixedSegment, Formats, Kernels};

/// One interior segment: `slope * (x - left_breakpoint) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub offset: f64,
}

/// Largest jump tolerated between adjacent pieces: one ulp of the default
/// coefficient format (`2^-14`) plus `1e-4`.
pub const MAX_SEAM: f64 = 1.0 / 16384.0 + 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseRepr", into = "PiecewiseRepr")]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct PiecewiseRepr {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

impl TryFrom<PiecewiseRepr> for PiecewiseLinear {
    type Error = Error;
    fn try_from(r: PiecewiseRepr) -> Result<Self> {
        PiecewiseLinear::new(r.breakpoints, r.segments)
    }
}

impl From<PiecewiseLinear> for PiecewiseRepr {
    fn from(p: PiecewiseLinear) -> Self {
        PiecewiseRepr {
            breakpoints: p.breakpoints,
            segments: p.segments,
        }
    }
}

impl PiecewiseLinear {
    /// `segments[i]` covers `[breakpoints[i], breakpoints[i+1])`.
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidParameter(
                "a piecewise GELU needs at least two breakpoints".into(),
            ));
        }
        if segments.len() + 1 != breakpoints.len() {
            return Err(Error::ShapeMismatch {
                expected: breakpoints.len() - 1,
                got: segments.len(),
            });
        }
        let finite = breakpoints.iter().all(|b| b.is_finite())
            && segments
                .iter()
                .all(|s| s.slope.is_finite() && s.offset.is_finite());
        if !finite || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let pw = PiecewiseLinear {
            breakpoints,
            segments,
        };
        let worst = pw.max_seam();
        if worst > MAX_SEAM {
            return Err(Error::InvalidParameter(format!(
                "adjacent pieces disagree by {worst:.3e} at a breakpoint (limit {MAX_SEAM:.3e})"
            )));
        }
        Ok(pw)
    }

    /// The seven-piece approximation with breakpoints -3, -2.1, -0.75, 0,
    /// 0.5 and 3.
    pub fn peano_gelu() -> Self {
        let seg = |slope, offset| Segment { slope, offset };
        PiecewiseLinear::new(
            vec![-3.0, -2.1, -0.75, 0.0, 0.5, 3.0],
            vec![
                seg(-0.0414, 0.0),
                seg(-0.0982, -0.0373),
                seg(0.2266, -0.17),
                seg(0.6914, 0.0),
                seg(1.0617, 0.3457),
            ],
        )
        .expect("published coefficients are valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of linear pieces, counting the zero and identity tails.
    pub fn piece_count(&self) -> usize {
        self.segments.len() + 2
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        if x < b[0] {
            return 0.0;
        }
        if x >= b[b.len() - 1] {
            return x;
        }
        let i = b.partition_point(|&bp| bp <= x) - 1;
        let s = self.segments[i];
        s.slope * (x - b[i]) + s.offset
    }

    /// `|left limit - value|` at each breakpoint, in order.
    pub fn seams(&self) -> Vec<f64> {
        let b = &self.breakpoints;
        let n = b.len();
        (0..n)
            .map(|i| {
                let left = if i == 0 {
                    0.0
                } else {
                    let s = self.segments[i - 1];
                    s.slope * (b[i] - b[i - 1]) + s.offset
                };
                let right = if i == n - 1 {
                    b[i]
                } else {
                    self.segments[i].offset
                };
                (left - right).abs()
            })
            .collect()
    }

    pub fn max_seam(&self) -> f64 {
        self.seams().into_iter().fold(0.0, f64::max)
    }

    /// Fits a continuous approximation with `pieces` linear pieces (tails
    /// included) to GELU by minimizing the squared error on a grid over
    /// `[lo, hi]`.
    ///
    /// Knot values are solved by linear least squares for fixed breakpoints;
    /// breakpoint positions are refined by pattern search. The first knot is
    /// pinned to 0 and the last to the identity so the tails join continuously.
    /// The procedure is deterministic.
    pub fn fit_gelu(pieces: usize, lo: f64, hi: f64) -> Result<Self> {
        if pieces < 4 {
            return Err(Error::InvalidParameter(format!(
                "fitting needs at least 4 pieces, got {pieces}"
            )));
        }
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::EmptyInterval { lo, hi });
        }
        const FIT_POINTS: usize = 1601;
        let xs: Vec<f64> = (0..FIT_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| gelu_oracle(x)).collect();

        let n_breaks = pieces - 1;
        let span = 3.0f64.min(hi.abs()).min(lo.abs());
        let mut breaks: Vec<f64> = (0..n_breaks)
            .map(|i| -span + 2.0 * span * i as f64 / (n_breaks - 1) as f64)
            .collect();
        let mut best = fit_knots(&breaks, &xs, &ys).map_or(f64::INFINITY, |(_, e)| e);

        let min_gap = 1e-3;
        let mut step = 0.25;
        while step > 1e-5 {
            let mut improved = false;
            for i in 0..n_breaks {
                for dir in [-1.0, 1.0] {
                    let mut trial = breaks.clone();
                    trial[i] += dir * step;
                    let ok_left = i == 0 || trial[i] - trial[i - 1] >= min_gap;
                    let ok_right = i + 1 == n_breaks || trial[i + 1] - trial[i] >= min_gap;
                    if !ok_left || !ok_right || trial[i] <= lo || trial[i] >= hi {
                        continue;
                    }
                    if let Some((_, err)) = fit_knots(&trial, &xs, &ys) {
                        if err < best {
                            best = err;
                            breaks = trial;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }

        let (knots, _) = fit_knots(&breaks, &xs, &ys)
            .ok_or_else(|| Error::InvalidParameter("GELU fit is degenerate".into()))?;
        let segments = breaks
            .windows(2)
            .zip(knots.windows(2))
            .map(|(b, y)| Segment {
                slope: (y[1] - y[0]) / (b[1] - b[0]),
                offset: y[0],
            })
            .collect();
        PiecewiseLinear::new(breaks, segments)
    }
}

/// Least-squares knot values for fixed breakpoints; returns the knots and
/// the summed squared error over the grid.
fn fit_knots(breaks: &[f64], xs: &[f64], ys: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = breaks.len();
    let last = breaks[n - 1];
    let free = n - 2;
    let mut ata = DMatrix::<f64>::zeros(free, free);
    let mut atb = DVector::<f64>::zeros(free);

    // Knot j (1..n-1) is unknown j-1. Knot 0 is 0; knot n-1 equals `last`.
    for (&x, &y) in xs.iter().zip(ys) {
        if x < breaks[0] || x >= last {
            continue;
        }
        let i = breaks.partition_point(|&b| b <= x) - 1;
        let t = (x - breaks[i]) / (breaks[i + 1] - breaks[i]);
        let mut target = y;
        let mut basis: [(usize, f64); 2] = [(usize::MAX, 0.0); 2];
        for (slot, (knot, w)) in [(i, 1.0 - t), (i + 1, t)].into_iter().enumerate() {
            if knot == n - 1 {
                target -= w * last;
            } else if knot > 0 {
                basis[slot] = (knot - 1, w);
            }
        }
        for &(r, wr) in &basis {
            if r == usize::MAX {
                continue;
            }
            atb[r] += wr * target;
            for &(c, wc) in &basis {
                if c != usize::MAX {
                    ata[(r, c)] += wr * wc;
                }
            }
        }
    }

    let sol = ata.lu().solve(&atb)?;
    let mut knots = Vec::with_capacity(n);
    knots.push(0.0);
    knots.extend(sol.iter().copied());
    knots.push(last);
    if knots.iter().any(|k| !k.is_finite()) {
        return None;
    }

    let sse = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let f = if x < breaks[0] {
                0.0
            } else if x >= last {
                x
            } else {
                let i = breaks.partition_point(|&b| b <= x) - 1;
                let t = (x - breaks[i]) / (breaks[i + 1] - breaks[i]);
                knots[i] * (1.0 - t) + knots[i + 1] * t
            };
            (f - y).powi(2)
        })
        .sum();
    Some((knots, sse))
}

pub(super) fn quantize_segments(
    pw: &PiecewiseLinear,
    formats: &Formats,
) -> Result<(Vec<FixedPoint>, Vec<FixedSegment>)> {
    let q = |v: f64, fmt| FixedPoint::quantize(v, fmt, Rounding::Nearest);
    let breaks = pw
        .breakpoints()
        .iter()
        .map(|&b| q(b, formats.io))
        .collect::<Result<Vec<_>>>()?;
    if breaks.windows(2).any(|w| w[0].raw() >= w[1].raw()) {
        return Err(Error::InvalidParameter(format!(
            "GELU breakpoints collide after quantizing to {}",
            formats.io
        )));
    }
    let widen = |v: FixedPoint| v.requantize(formats.accumulator, Rounding::Nearest);
    let segments = pw
        .segments()
        .iter()
        .zip(&breaks)
        .map(|(s, &left)| {
            Ok(FixedSegment {
                left: widen(left)?,
                slope: widen(q(s.slope, formats.table)?)?,
                offset: q(s.offset, formats.accumulator)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((breaks, segments))
}

impl Kernels {
    /// Piecewise-linear GELU, in `x`'s format.
    pub fn gelu(&self, x: FixedPoint) -> Result<FixedPoint> {
        let breaks = &self.gelu_breaks;
        let below = |b: &FixedPoint| x.cmp_value(*b).is_lt();
        if below(&breaks[0]) {
            return Ok(FixedPoint::zero(x.format()));
        }
        if !below(&breaks[breaks.len() - 1]) {
            return Ok(x);
        }
        let i = breaks.partition_point(|b| !below(b)) - 1;
        self.eval_segment(i, x)
    }

    /// Evaluates interior segment `i` at `x`, whether or not `x` lies in it.
    pub(crate) fn eval_segment(&self, i: usize, x: FixedPoint) -> Result<FixedPoint> {
        let seg = &self.gelu_segments[i];
        let dx = self.widen(x)?.checked_sub(seg.left)?;
        self.mul(seg.slope, dx)?
            .checked_add(seg.offset)?
            .requantize(x.format(), Rounding::Nearest)
    }

    /// GELU breakpoints as quantized for segment selection.
    pub fn gelu_breakpoints(&self) -> &[FixedPoint] {
        &self.gelu_breaks
    }

    /// `|left limit - value|` of the fixed-point GELU at each quantized
    /// breakpoint: the preceding piece evaluated at the breakpoint against the
    /// kernel's output there.
    pub fn gelu_seams(&self) -> Result<Vec<f64>> {
        self.gelu_breaks
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let left = if i == 0 {
                    FixedPoint::zero(b.format())
                } else {
                    self.eval_segment(i - 1, b)?
                };
                let right = self.gelu(b)?;
                Ok((left.to_f64() - right.to_f64()).abs())
            })
            .collect()
    }
}
