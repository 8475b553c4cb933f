//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 3 on numeric
//! failures, 1 on I/O errors. All CSV output is UTF-8 with LF line endings.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backward::{run_smoother, SmootherAlg, SmootherConfig};
use crate::bench::{run_experiment, ExperimentConfig, ModelSpec};
use crate::complexity::{self, Algorithm, BreakdownOptions, Dims};
use crate::error::{Error, Result};
use crate::forward::{run_dbf, run_mpf, run_sdbf, ForwardConfig};
use crate::linalg::Vector;
use crate::model::{simulate, ClgModel};
use crate::oracle::{kalman_rts, LinearModelFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dbsmooth", version, about = "Dual-filter particle smoothing for conditionally linear Gaussian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a state and measurement trajectory
    Simulate(SimulateArgs),
    /// Filter and smooth one trajectory
    Smooth(SmoothArgs),
    /// Run a Monte Carlo experiment from a TOML config
    Bench(BenchArgs),
    /// Print memory and flop estimates as CSV
    Flops(FlopsArgs),
    /// Exact Kalman/RTS smoothing of a linear Gaussian model
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelName {
    Ssm1,
    Ssm2,
    Linear,
}

impl ModelName {
    fn spec(self) -> ModelSpec {
        let name = match self {
            ModelName::Ssm1 => "ssm1",
            ModelName::Ssm2 => "ssm2",
            ModelName::Linear => "linear",
        };
        ModelSpec::by_name(name).expect("known model")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelName,
    /// number of steps (model default when omitted)
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SmoothArgs {
    #[arg(long, value_enum)]
    model: ModelName,
    /// dbsa, sdbsa, ddbsa, sddbsa, mpf, dbf or sdbf
    #[arg(long)]
    alg: String,
    #[arg(long, default_value_t = 100)]
    np: usize,
    /// backward passes (defaults to the particle count)
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    ni: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    reuse_weights: OnOff,
    /// trajectory CSV as written by `simulate`; simulated from `--seed` when omitted
    #[arg(long)]
    input: Option<PathBuf>,
    /// steps to simulate when no input is given
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `out_dir` of the config; `results` when neither is set)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    /// algorithm name, or `all`
    #[arg(long, default_value = "all")]
    alg: String,
    #[arg(long)]
    dl: u64,
    #[arg(long)]
    dn: u64,
    #[arg(long)]
    p: u64,
    #[arg(long)]
    np: u64,
    #[arg(long, default_value_t = 1)]
    m: u64,
    #[arg(long, default_value_t = 1)]
    ni: u64,
    #[arg(long, default_value_t = 1)]
    t: u64,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    reuse_weights: OnOff,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// TOML file describing the linear model
    #[arg(long)]
    linear_model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        match e {
            Error::Io(_) | Error::Csv(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Messages go to
/// stderr; the return value is the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Smooth(a) => smooth_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Flops(a) => flops_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Trajectory CSV: `k, x0.., y0..`.
pub fn trajectory_csv(states: &[Vector], measurements: &[Vector]) -> Result<String> {
    let d = states.first().map_or(0, |x| x.len());
    let p = measurements.first().map_or(0, |y| y.len());
    let header = std::iter::once("k".to_string()).chain(numbered("x", d)).chain(numbered("y", p)).collect();
    let rows = states.iter().zip(measurements).enumerate().map(|(k, (x, y))| {
        std::iter::once(k.to_string()).chain(x.iter().chain(y.iter()).map(|v| v.to_string())).collect()
    });
    csv_text(header, rows)
}

/// Reads a trajectory CSV. Returns the states (empty when the file has no
/// `x` columns) and the measurements.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols = |prefix: char| -> Vec<usize> {
        header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
            .map(|(i, _)| i)
            .collect()
    };
    let (xs, ys) = (cols('x'), cols('y'));
    if ys.is_empty() {
        return Err(Error::Config(format!("{}: no measurement columns y0, y1, ...", path.display())));
    }
    let mut states = Vec::new();
    let mut meas = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |idx: &[usize]| -> Result<Vector> {
            let v: std::result::Result<Vec<f64>, _> = idx.iter().map(|&i| rec[i].trim().parse::<f64>()).collect();
            v.map(Vector::from_vec).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        };
        if !xs.is_empty() {
            states.push(parse(&xs)?);
        }
        meas.push(parse(&ys)?);
    }
    Ok((states, meas))
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let spec = a.model.spec();
    let model = spec.build(a.seed)?;
    let traj = simulate(model.as_ref(), a.t.unwrap_or_else(|| spec.default_t()), a.seed)?;
    emit(a.out.as_deref(), &trajectory_csv(&traj.states, &traj.measurements)?)
}

/// Runs one filter or smoother on one measurement sequence.
pub fn smooth_one(
    model: &dyn ClgModel,
    ys: &[Vector],
    alg: Algorithm,
    fcfg: &ForwardConfig,
    scfg: &SmootherConfig,
) -> Result<Vec<Vector>> {
    Ok(match alg {
        Algorithm::Mpf => run_mpf(model, ys, fcfg)?.estimates,
        Algorithm::Dbf => run_dbf(model, ys, fcfg)?.estimates,
        Algorithm::Sdbf => run_sdbf(model, ys, fcfg)?.estimates,
        Algorithm::AlgL | Algorithm::Rbss => return Err(Error::UnknownAlgorithm(format!("{alg} is a cost model only"))),
        _ => {
            let salg: SmootherAlg = alg.name().parse()?;
            let cache = if salg.filter() == crate::forward::FilterKind::Dbf { run_dbf(model, ys, fcfg)? } else { run_sdbf(model, ys, fcfg)? };
            run_smoother(&cache, model, &SmootherConfig { alg: salg, ..scfg.clone() })?.estimates
        }
    })
}

fn smooth_cmd(a: SmoothArgs) -> Result<()> {
    let alg: Algorithm = a.alg.parse()?;
    if a.np == 0 || a.ni == 0 || a.m == Some(0) {
        return Err(Error::Config("--np, --m and --ni must be at least 1".into()));
    }
    let spec = a.model.spec();
    let model = spec.build(a.seed)?;
    let (truth, ys) = match &a.input {
        Some(p) => read_trajectory_csv(p)?,
        None => {
            let tr = simulate(model.as_ref(), a.t.unwrap_or_else(|| spec.default_t()), a.seed)?;
            (tr.states, tr.measurements)
        }
    };
    let fcfg = ForwardConfig { n_particles: a.np, seed: a.seed, run: 0, ..Default::default() };
    let scfg = SmootherConfig {
        m: a.m.unwrap_or(a.np),
        n_i: a.ni,
        weight_reuse: a.reuse_weights == OnOff::On,
        seed: a.seed,
        run: 0,
        ..Default::default()
    };
    let est = smooth_one(model.as_ref(), &ys, alg, &fcfg, &scfg)?;
    if truth.len() == est.len() {
        let (l, n) = crate::bench::rmse(std::slice::from_ref(&truth), std::slice::from_ref(&est), model.dims().d_l)?;
        eprintln!("{alg}: rmse_l {l:.6} rmse_n {n:.6}");
    }
    let d = est.first().map_or(0, |x| x.len());
    let header = std::iter::once("k".to_string()).chain(numbered("x", d)).collect();
    let rows = est.iter().enumerate().map(|(k, x)| std::iter::once(k.to_string()).chain(x.iter().map(|v| v.to_string())).collect());
    emit(a.out.as_deref(), &csv_text(header, rows)?)
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let dir = a.out_dir.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let report = run_experiment(&cfg)?;
    report.emit(&cfg, &dir)?;
    eprintln!("{:>7} {:>6} {:>10} {:>10} {:>10} {:>6}", "alg", "n_p", "rmse_l", "rmse_n", "ctb_ms", "div");
    for r in &report.rows {
        eprintln!("{:>7} {:>6} {:>10.4} {:>10.4} {:>10.2} {:>6.3}", r.alg.name(), r.n_p, r.rmse_l, r.rmse_n, r.ctb_ms, r.divergence_rate);
    }
    if !report.errors.is_empty() {
        eprintln!("{} failed runs, see {}", report.errors.len(), dir.join("errors.csv").display());
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

/// CSV rows of the `flops` table for the given algorithms.
pub fn flops_table(algs: &[Algorithm], dims: &Dims, opts: &BreakdownOptions) -> Result<String> {
    dims.validate()?;
    let header = [
        "alg", "d_l", "d_n", "p", "n_p", "m", "n_i", "t", "memory_reals", "flops_estimate", "backward_flops", "c1", "pm1", "be1",
        "sm1", "bp2", "pm2", "ms2", "be2", "sm2", "c2", "c3", "total",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for &alg in algs {
        let mut row = vec![alg.name().to_string()];
        row.extend([dims.d_l, dims.d_n, dims.p, dims.n_p, dims.m, dims.n_i, dims.t].map(|v| v.to_string()));
        row.push(complexity::memory_estimate(alg, dims)?.to_string());
        match complexity::cost_breakdown(alg, dims, opts) {
            Ok(c) => {
                let pc = c.per_recursion;
                row.push(c.flops_estimate.to_string());
                row.push(c.backward_flops.to_string());
                row.extend(
                    [pc.c1, pc.pm1, pc.be1, pc.sm1, pc.bp2, pc.pm2, pc.ms2, pc.be2, pc.sm2, pc.c2, pc.c3, pc.total].map(|v| v.to_string()),
                );
            }
            Err(Error::UnknownAlgorithm(_)) => row.extend(std::iter::repeat_n(String::new(), 14)),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    csv_text(header, rows)
}

fn flops_cmd(a: FlopsArgs) -> Result<()> {
    let algs = if a.alg.eq_ignore_ascii_case("all") { Algorithm::ALL.to_vec() } else { vec![a.alg.parse()?] };
    let dims = Dims { d_l: a.dl, d_n: a.dn, p: a.p, n_p: a.np, m: a.m, n_i: a.ni, t: a.t };
    let opts = BreakdownOptions { weight_reuse: a.reuse_weights == OnOff::On, ..Default::default() };
    emit(a.out.as_deref(), &flops_table(&algs, &dims, &opts)?)
}

fn oracle_cmd(a: OracleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.linear_model).map_err(|e| Error::Config(format!("{}: {e}", a.linear_model.display())))?;
    let file: LinearModelFile = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let model = file.to_model()?;
    let ys = file.measurements(&model)?;
    let sm = kalman_rts(&model, &ys)?;
    let d = model.f.nrows();
    let header = std::iter::once("k".to_string()).chain(numbered("mean", d)).chain(numbered("var", d)).collect();
    let rows = sm.iter().enumerate().map(|(k, g)| {
        std::iter::once(k.to_string()).chain(g.mean.iter().chain(g.cov.diagonal().iter()).map(|v| v.to_string())).collect()
    });
    emit(a.out.as_deref(), &csv_text(header, rows)?)
}
