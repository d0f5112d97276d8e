//! `balance` command line: analyze a case, generate synthetic cases, run
//! the benchmark grid.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure. stdout carries
//! only the requested artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use balance::attribution::ScoreMode;
use balance::baselines::LassoOptions;
use balance::bmfs::SolverOptions;
use balance::case::{load_case, load_case_csv, CaseInput};
use balance::merge::{MergeOptions, MergeStrategy};
use balance::pipeline::{analyze_case, AnalyzeOptions};
use balance::synth::{
    default_alarm, gen_case, run_benchmark, table_grid, write_csv, BenchConfig, Collinearity, SolverKind, SynthParams,
};
use balance::BalanceError;
use clap::{Args, Parser, Subcommand};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "balance", version, about = "Root-cause localization for alarmed KPIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score candidate causes of an alarm and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Write a synthetic case and its ground truth.
    Gen(GenArgs),
    /// Run a benchmark grid and write a CSV summary.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Case file, JSON or CSV (by extension).
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value = "relative")]
    mode: ScoreMode,
    #[arg(long, default_value_t = 3)]
    kappa: usize,
    #[arg(long, default_value = "union")]
    merge: MergeStrategy,
    /// Constrain coefficients to be non-negative.
    #[arg(long)]
    nonneg: bool,
    #[arg(long)]
    no_standardize: bool,
    /// Add a lag-1 copy of every candidate.
    #[arg(long)]
    lag: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// First alarm row; required for CSV, overrides the JSON window.
    #[arg(long)]
    alarm_start: Option<usize>,
    /// Last alarm row, inclusive.
    #[arg(long)]
    alarm_end: Option<usize>,
    /// KPI column of a CSV case; repeatable. Defaults to the first series.
    #[arg(long)]
    kpi: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report every timing as 0 for byte-stable output.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Latent dimension; defaults to p for absent and p/2 otherwise.
    #[arg(long)]
    pz: Option<usize>,
    #[arg(long, default_value = "partial")]
    kind: Collinearity,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Fraction of nonzero coefficients.
    #[arg(long, default_value_t = 0.005)]
    nonzeros: f64,
    /// Fraction of missing `x` cells.
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    /// Also drop KPI values at the missing rate.
    #[arg(long)]
    missing_y: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shift true causes by this many standard deviations in the alarm window.
    #[arg(long, default_value_t = 0.0)]
    plant: f64,
    #[arg(long)]
    alarm_start: Option<usize>,
    #[arg(long)]
    alarm_end: Option<usize>,
    /// Case JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON path; defaults to `<out stem>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Preset grid 1 to 4.
    #[arg(long)]
    table: Option<u8>,
    /// Custom grid: kinds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "partial")]
    kind: Vec<Collinearity>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    p: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    noise: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.005")]
    nonzeros: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    missing: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "bmfs,ard,lasso")]
    solvers: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

/// Failure with its exit code and message.
struct Failure {
    code: u8,
    msg: String,
}

impl From<BalanceError> for Failure {
    fn from(e: BalanceError) -> Self {
        let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_SOLVER };
        Failure { code, msg: e.to_string() }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, msg: msg.into() }
}

/// Writes to `path` or stdout. File output goes through a temporary file so
/// a failed run leaves nothing behind.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| input_error(format!("write failed: {e}"));
    match path {
        Some(p) => {
            let tmp = p.with_extension("partial");
            fs::write(&tmp, bytes).map_err(io)?;
            fs::rename(&tmp, p).map_err(io)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).map_err(io)?;
            out.flush().map_err(io)
        }
    }
}

fn load(args: &AnalyzeArgs) -> Result<CaseInput, Failure> {
    let is_csv = args.case.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let (Some(start), Some(end)) = (args.alarm_start, args.alarm_end) else {
            return Err(input_error("CSV cases need --alarm-start and --alarm-end"));
        };
        return Ok(load_case_csv(&args.case, start, end, &args.kpi)?);
    }
    if !args.kpi.is_empty() {
        return Err(input_error("--kpi applies to CSV cases only"));
    }
    let mut case = load_case(&args.case)?;
    if let Some(s) = args.alarm_start {
        case.alarm_start = s;
    }
    if let Some(e) = args.alarm_end {
        case.alarm_end = e;
    }
    case.validate()?;
    Ok(case)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let case = load(&args)?;
    let mut solver = SolverOptions::default();
    if let Some(t) = args.tol {
        solver.tol = t;
    }
    if let Some(m) = args.max_iters {
        solver.max_iters = m;
    }
    let opts = AnalyzeOptions {
        mode: args.mode,
        merge: MergeOptions { kappa: args.kappa, strategy: args.merge },
        nonneg: args.nonneg,
        standardize: !args.no_standardize,
        lag: args.lag,
        solver,
        record_timing: !args.no_timing,
    };
    let report = analyze_case(&case, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut json = report.to_json_pretty();
    json.push('\n');
    emit(args.out.as_deref(), json.as_bytes())
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into());
    out.with_file_name(format!("{stem}.truth.json"))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let mut params = SynthParams::new(args.kind, args.n, args.p, args.noise, args.nonzeros).with_seed(args.seed);
    if let Some(pz) = args.pz {
        params.p_z = pz;
    }
    params.missing_ratio = args.missing;
    params.missing_in_y = args.missing_y;
    let mut case = gen_case(&params)?;
    let (ds, de) = default_alarm(args.n);
    let (start, end) = (args.alarm_start.unwrap_or(ds), args.alarm_end.unwrap_or(de));
    if args.plant != 0.0 {
        case.plant_alarm(start, end, args.plant)?;
    }
    let input = case.to_case_input(start, end)?;
    let truth = serde_json::to_string_pretty(&case.ground_truth()).expect("truth serialises") + "\n";
    let truth_out = args.truth.clone().unwrap_or_else(|| truth_path(&args.out));
    emit(Some(&args.out), (input.to_json() + "\n").as_bytes())?;
    emit(Some(&truth_out), truth.as_bytes())
}

fn bench_grid(args: &BenchArgs) -> Result<Vec<SynthParams>, Failure> {
    if let Some(t) = args.table {
        return Ok(table_grid(t)?);
    }
    let mut grid = Vec::new();
    for &kind in &args.kind {
        for &p in &args.p {
            for &noise in &args.noise {
                for &nz in &args.nonzeros {
                    for &m in &args.missing {
                        let params = SynthParams::new(kind, args.n, p, noise, nz).with_missing(m);
                        params.validate()?;
                        grid.push(params);
                    }
                }
            }
        }
    }
    Ok(grid)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let solvers = args
        .solvers
        .iter()
        .map(|s| s.parse::<SolverKind>())
        .collect::<Result<Vec<_>, _>>()?;
    if args.trials == 0 {
        return Err(input_error("--trials must be at least 1"));
    }
    let grid = bench_grid(&args)?;
    let cfg = BenchConfig {
        trials: args.trials,
        master_seed: args.seed,
        solver_opts: SolverOptions::default(),
        lasso_opts: LassoOptions::default(),
        record_timing: !args.no_timing,
    };
    let rows = run_benchmark(&grid, &solvers, &cfg);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    emit(args.out.as_deref(), &buf)
}

/// Honors `BALANCE_THREADS` as a cap on benchmark workers.
fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("BALANCE_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| input_error(format!("BALANCE_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| input_error(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Gen(g) => cmd_gen(g),
        Command::Bench(b) => cmd_bench(b),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
