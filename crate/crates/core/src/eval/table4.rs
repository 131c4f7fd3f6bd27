use rayon::prelude::*;
use serde::Serialize;

use super::sweep::{run_sweep, Function, Precision, Sampling, SweepReport, SweepSpec};
use crate::approx::{ApproxParams, PiecewiseLinear};
use crate::error::Result;

/// The parameter grid of the accuracy study. The default reproduces the
/// nine-row study: `m` in {3, 4, 5} on [1, 128], MSR then LMSR for
/// `alpha_star` in {4, 5} on [8, 64], and GELU with 7 and 10 pieces on [-4, 4].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table4Grid {
    pub m_values: Vec<u32>,
    pub alpha_values: Vec<u32>,
    /// Piece counts; 7 uses the published coefficients, any other count is
    /// fitted.
    pub gelu_pieces: Vec<usize>,
    pub sampling: Sampling,
    pub precision: Precision,
    pub base: ApproxParams,
}

impl Default for Table4Grid {
    fn default() -> Self {
        Table4Grid {
            m_values: vec![3, 4, 5],
            alpha_values: vec![4, 5],
            gelu_pieces: vec![7, 10],
            sampling: Sampling::default(),
            precision: Precision::RealArithmetic,
            base: ApproxParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table4Row {
    pub function: String,
    pub interval: String,
    pub parameter: String,
    pub report: SweepReport,
}

const RSQRT_INTERVAL: (f64, f64) = (1.0, 128.0);
const RECIP_INTERVAL: (f64, f64) = (8.0, 64.0);
const GELU_INTERVAL: (f64, f64) = (-4.0, 4.0);

fn interval_label((lo, hi): (f64, f64)) -> String {
    format!("[{lo}, {hi}]")
}

/// Runs every configuration of `grid` and returns one row per configuration
/// in grid order: reciprocal square root, MSR, LMSR, GELU.
///
/// The rows are evaluated in parallel; each row is itself deterministic, so
/// the output does not depend on the thread count.
pub fn table4_suite(grid: &Table4Grid) -> Result<Vec<Table4Row>> {
    let mut jobs: Vec<(&'static str, (f64, f64), String, SweepSpec)> = Vec::new();
    let spec = |f: Function, (lo, hi): (f64, f64), params: ApproxParams| {
        SweepSpec::new(f, lo, hi)
            .with_sampling(grid.sampling)
            .with_precision(grid.precision)
            .with_params(params)
    };
    for &m in &grid.m_values {
        let p = grid.base.clone().with_m(m);
        jobs.push((
            "Reciprocal square root",
            RSQRT_INTERVAL,
            format!("m = {m}"),
            spec(Function::RecipSqrt, RSQRT_INTERVAL, p),
        ));
    }
    for lmsr in [false, true] {
        for &a in &grid.alpha_values {
            let p = grid.base.clone().with_alpha_star(a).with_lmsr(lmsr);
            let label = format!("alpha* = {a}, {}", if lmsr { "LMSR" } else { "MSR" });
            jobs.push((
                "Reciprocal",
                RECIP_INTERVAL,
                label,
                spec(Function::Reciprocal, RECIP_INTERVAL, p),
            ));
        }
    }
    for &pieces in &grid.gelu_pieces {
        let (pw, label) = if pieces == 7 {
            (PiecewiseLinear::peano_gelu(), "7 segments".to_string())
        } else {
            (
                PiecewiseLinear::fit_gelu(pieces, GELU_INTERVAL.0, GELU_INTERVAL.1)?,
                format!("{pieces} segments (fitted breakpoints)"),
            )
        };
        let p = grid.base.clone().with_gelu(pw);
        jobs.push((
            "GELU",
            GELU_INTERVAL,
            label,
            spec(Function::Gelu, GELU_INTERVAL, p),
        ));
    }
    jobs.into_par_iter()
        .map(|(function, interval, parameter, spec)| {
            Ok(Table4Row {
                function: function.to_string(),
                interval: interval_label(interval),
                parameter,
                report: run_sweep(&spec)?,
            })
        })
        .collect()
}
