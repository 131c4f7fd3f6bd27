//! `peano`: accuracy sweeps, the parameter study, layer comparisons on
//! synthetic tensors and LUT dumps.

mod output;

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use peano::approx::{ApproxParams, PiecewiseLinear, Pow2FracTable, RecipTable};
use peano::eval::{
    gaussian_tensor, layer_compare, run_sweep, table4_suite, Function, Layer, Precision, Sampling,
    SweepSpec, Table4Grid, DEFAULT_ROW_LEN, SOFTMAX_SUM_DEVIATION_BOUND,
};
use peano::fixedpoint::{FixedPoint, QFormat};

use output::{emit, sci, OutputFormat, Report};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "peano",
    version,
    about = "Division-free fixed-point approximations of transformer non-linearities"
)]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure one approximation against its exact oracle.
    Sweep(SweepArgs),
    /// Run the full parameter study.
    Table4(Table4Args),
    /// Compare a layer kernel with the exact layer on seeded Gaussian rows.
    LayerCompare(LayerCompareArgs),
    /// Write the power-of-two and reciprocal lookup tables as hex.
    DumpLuts(DumpLutsArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// Fraction bits indexing the 2^v table.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    m: u32,
    /// Reciprocal table threshold.
    #[arg(long = "alpha-star", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    alpha_star: u32,
    /// Interpolate between reciprocal table entries.
    #[arg(long)]
    lmsr: bool,
}

impl KernelArgs {
    fn params(&self) -> ApproxParams {
        ApproxParams::default()
            .with_m(self.m)
            .with_alpha_star(self.alpha_star)
            .with_lmsr(self.lmsr)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "fn", value_parser = parse_function)]
    function: Function,
    /// Lower bound (default depends on the function).
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    /// Upper bound (default depends on the function).
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// grid[:points], step:<h>, integers or random:<count>[:<seed>].
    #[arg(long, default_value = "grid:100000", value_parser = parse_sampling)]
    sampling: Sampling,
    #[command(flatten)]
    kernel: KernelArgs,
    /// real_arithmetic or fixed_point.
    #[arg(long, default_value = "real_arithmetic", value_parser = parse_precision)]
    precision: Precision,
    /// GELU piece count; 7 uses the published coefficients, others are fitted.
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u32).range(4..=64))]
    segments: u32,
    /// Elements per row for softmax-row and layernorm-row.
    #[arg(long = "row-len", default_value_t = DEFAULT_ROW_LEN, value_parser = parse_count)]
    row_len: usize,
    #[arg(long, value_enum, default_value = "markdown_table")]
    format: OutputFormat,
    /// Report file; printed after the summary line when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Table4Args {
    #[arg(long, value_enum, default_value = "markdown_table")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "real_arithmetic", value_parser = parse_precision)]
    precision: Precision,
    /// Grid points per interval.
    #[arg(long, default_value_t = 100_000, value_parser = parse_count)]
    points: usize,
}

#[derive(Args)]
struct LayerCompareArgs {
    #[arg(long, value_parser = parse_layer)]
    layer: Layer,
    #[arg(long, value_parser = parse_count)]
    rows: usize,
    #[arg(long, default_value_t = 197, value_parser = parse_count)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the generated inputs.
    #[arg(long = "std-dev", default_value_t = 1.0)]
    std_dev: f64,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Full per-row report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpLutsArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    m: u32,
    #[arg(long = "alpha-star", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    alpha_star: u32,
    /// Entry format, e.g. Q2.14.
    #[arg(long = "table-format", default_value = "Q2.14")]
    table_format: QFormat,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

fn parse_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_function(s: &str) -> Result<Function, String> {
    s.parse().map_err(|e: peano::Error| e.to_string())
}

fn parse_sampling(s: &str) -> Result<Sampling, String> {
    s.parse().map_err(|e: peano::Error| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: peano::Error| e.to_string())
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    s.parse().map_err(|e: peano::Error| e.to_string())
}

fn default_interval(f: Function) -> (f64, f64) {
    match f {
        Function::RecipSqrt => (1.0, 128.0),
        Function::Reciprocal => (8.0, 64.0),
        Function::Exp => (-3.0, 2.0),
        Function::Gelu | Function::SoftmaxRow | Function::LayernormRow => (-4.0, 4.0),
    }
}

fn sweep(args: SweepArgs) -> CliResult {
    let (lo, hi) = default_interval(args.function);
    let mut params = args.kernel.params();
    if args.segments != 7 {
        params = params.with_gelu(PiecewiseLinear::fit_gelu(
            args.segments as usize,
            -4.0,
            4.0,
        )?);
    }
    let spec = SweepSpec::new(args.function, args.lo.unwrap_or(lo), args.hi.unwrap_or(hi))
        .with_sampling(args.sampling)
        .with_params(params)
        .with_precision(args.precision)
        .with_row_len(args.row_len);
    let r = run_sweep(&spec)?;
    println!(
        "fn={} mse={} max_err={}",
        spec.function,
        sci(r.mse),
        sci(r.max_abs_err)
    );
    let report = Report {
        headers: &[
            "Function",
            "Interval",
            "Sampling",
            "Precision",
            "m",
            "alpha*",
            "LMSR",
            "Samples",
            "MSE",
            "Max error",
            "Argmax",
        ],
        cells: vec![vec![
            spec.function.to_string(),
            format!("[{}, {}]", spec.lo, spec.hi),
            spec.sampling.to_string(),
            spec.precision.to_string(),
            spec.params.m.to_string(),
            spec.params.alpha_star.to_string(),
            spec.params.use_lmsr.to_string(),
            r.sample_count.to_string(),
            sci(r.mse),
            sci(r.max_abs_err),
            r.argmax_err.to_string(),
        ]],
        records: vec![r],
    };
    write_report(&report.render(args.format)?, args.out.as_deref())
}

fn write_report(bytes: &[u8], out: Option<&Path>) -> CliResult {
    emit(bytes, out).map_err(|e| match out {
        Some(p) => at(p, e),
        None => e.into(),
    })
}

#[derive(Serialize)]
struct Table4Record<'a> {
    function: &'a str,
    interval: &'a str,
    parameter: &'a str,
    mse: f64,
    max_abs_err: f64,
    sample_count: usize,
}

fn table4(args: Table4Args) -> CliResult {
    let grid = Table4Grid {
        sampling: Sampling::UniformPoints { count: args.points },
        precision: args.precision,
        ..Table4Grid::default()
    };
    let rows = table4_suite(&grid)?;
    let report = Report {
        headers: &["Function", "Interval", "Parameter", "MSE"],
        cells: rows
            .iter()
            .map(|r| {
                vec![
                    r.function.clone(),
                    r.interval.clone(),
                    r.parameter.clone(),
                    sci(r.report.mse),
                ]
            })
            .collect(),
        records: rows
            .iter()
            .map(|r| Table4Record {
                function: &r.function,
                interval: &r.interval,
                parameter: &r.parameter,
                mse: r.report.mse,
                max_abs_err: r.report.max_abs_err,
                sample_count: r.report.sample_count,
            })
            .collect(),
    };
    write_report(&report.render(args.format)?, args.out.as_deref())
}

fn layer_compare_cmd(args: LayerCompareArgs) -> CliResult {
    let params = args.kernel.params();
    let input = gaussian_tensor(
        args.rows,
        args.cols,
        args.std_dev,
        args.seed,
        params.formats.io,
    )?;
    let r = layer_compare(&input, args.layer, &params)?;
    let mut line = format!(
        "layer={} rows={} cols={} mean_mse={} max_err={}",
        r.layer,
        r.rows,
        r.cols,
        sci(r.mean_mse),
        sci(r.max_abs_err)
    );
    if let Some(d) = r.sum_deviation {
        line += &format!(
            " sum_dev_min={} sum_dev_mean={} sum_dev_max={} sum_dev_bound={}",
            sci(d.min),
            sci(d.mean),
            sci(d.max),
            sci(SOFTMAX_SUM_DEVIATION_BOUND)
        );
    }
    println!("{line}");
    if let Some(path) = &args.out {
        let mut json = serde_json::to_vec_pretty(&r)?;
        json.push(b'\n');
        fs::write(path, json).map_err(|e| at(path, e))?;
    }
    Ok(())
}

/// Header line, then one lowercase hex raw value per line, zero-padded to the
/// format width.
fn lut_text(entries: &[FixedPoint], format: QFormat) -> String {
    let bits = format.total_bits();
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    let width = bits.div_ceil(4) as usize;
    let mut out = format!("# format={format} entries={}\n", entries.len());
    for e in entries {
        out += &format!("0x{:0width$x}\n", e.raw() as u64 & mask);
    }
    out
}

fn dump_luts(args: DumpLutsArgs) -> CliResult {
    let pow2 = Pow2FracTable::build(args.m, args.table_format)?;
    let recip = RecipTable::build(args.alpha_star, args.table_format)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| at(&args.out_dir, e))?;
    let files = [
        (
            format!("frac_pow2_m{}.hex", args.m),
            lut_text(pow2.entries(), args.table_format),
        ),
        (
            format!("stored_recip_alpha{}.hex", args.alpha_star),
            lut_text(recip.entries(), args.table_format),
        ),
    ];
    for (name, text) in files {
        let path = args.out_dir.join(name);
        fs::write(&path, text).map_err(|e| at(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn at(path: &Path, e: std::io::Error) -> Box<dyn Error> {
    format!("{}: {e}", path.display()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Table4(a) => table4(a),
        Command::LayerCompare(a) => layer_compare_cmd(a),
        Command::DumpLuts(a) => dump_luts(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
