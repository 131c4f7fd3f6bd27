//! Error analysis: sweeps of each approximation against its exact oracle,
//! the parameter study over the published configurations, and per-row layer
//! comparisons.
//!
//! All reductions run sequentially over per-sample errors that were computed
//! in parallel and collected in input order. Results therefore do not depend
//! on the number of worker threads.

mod compare;
mod sweep;
mod table4;

pub use self::compare::{
    gaussian_tensor, layer_compare, Layer, LayerCompareReport, RowStats, SumDeviation,
    SOFTMAX_SUM_DEVIATION_BOUND,
};
pub use self::sweep::{
    run_sweep, samples, Function, Precision, Sampling, SweepReport, SweepSpec, DEFAULT_GRID_POINTS,
    DEFAULT_ROW_LEN,
};
pub use self::table4::{table4_suite, Table4Grid, Table4Row};
