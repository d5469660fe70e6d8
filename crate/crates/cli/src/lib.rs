//! The `bsf` command line: prediction, solving, calibration, sweeps and
//! prediction-versus-measurement reports.
//!
//! [`run`] takes the argument vector and the two output streams, and
//! returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, including a solve that ran out of iterations |
//! | 2 | invalid arguments or input files |
//! | 3 | I/O or transport failure |
//! | 4 | numerical divergence |

pub mod formats;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use bsf_core::calibration::{self, Calibration};
use bsf_core::cost_model::{optimal_workers, predict_curve, MachineConstants, Variant};
use bsf_core::jacobi::{gen_dd_system, gen_paper_system, solve, JacobiM, JacobiMR, SolveConfig};
use bsf_core::runtime::{serve_worker, Backend, FarmPlugin};
use bsf_core::{Error, LinearSystem};
use clap::{Args, Parser, Subcommand, ValueEnum};

use formats::{BackendKind, CurveFile, ProblemSource, RunConfig, SolveReport, VariantName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub const CALIBRATION_ENV: &str = "BSF_CALIBRATION";

#[derive(Debug, Parser)]
#[command(name = "bsf", version, about = "Scalability prediction and measurement for bulk synchronous farms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict speedup and efficiency of Jacobi-M or Jacobi-MR for K = 1..=kmax.
    Predict(PredictArgs),
    /// Solve a linear system with the Jacobi method.
    Solve(SolveArgs),
    /// Measure latency, tau_op and tau_tr on this machine. Run on an idle host.
    Calibrate(CalibrateArgs),
    /// Time a fixed-iteration sweep over worker counts.
    Sweep(SweepArgs),
    /// Join a prediction with measured speedups.
    Compare(CompareArgs),
    /// Write a generated linear system.
    Gen(GenArgs),
    #[command(hide = true)]
    Worker(WorkerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelVariant {
    M,
    Mr,
}

impl From<ModelVariant> for Variant {
    fn from(v: ModelVariant) -> Self {
        match v {
            ModelVariant::M => Variant::M,
            ModelVariant::Mr => Variant::MR,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    PaperTornado,
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    /// Named set of constants.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Calibration file written by `bsf calibrate`.
    #[arg(long, env = CALIBRATION_ENV)]
    calibration: Option<PathBuf>,
    /// Latency L in seconds.
    #[arg(long)]
    latency: Option<f64>,
    /// Seconds per arithmetic operation.
    #[arg(long)]
    tau_op: Option<f64>,
    /// Seconds per transferred double.
    #[arg(long)]
    tau_tr: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_enum)]
    variant: ModelVariant,
    /// System dimension.
    #[arg(long)]
    n: usize,
    /// Largest worker count to evaluate.
    #[arg(long)]
    kmax: usize,
    #[command(flatten)]
    constants: ConstantsArgs,
    /// Curve file to write; the curve goes to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Run description in TOML. Flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix file to solve.
    #[arg(long, conflicts_with_all = ["paper_system", "random_dd"])]
    input: Option<PathBuf>,
    /// Solve the scalable test system of this dimension.
    #[arg(long, value_name = "N", conflicts_with = "random_dd")]
    paper_system: Option<usize>,
    /// Solve a random diagonally dominant system of this dimension.
    #[arg(long, value_name = "N", requires = "seed")]
    random_dd: Option<usize>,
    /// Seed for --random-dd.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver variant [default: m].
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Stop once the squared step norm drops below this [default: 1e-6].
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration budget [default: 10000].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Worker count K [default: 1].
    #[arg(long)]
    workers: Option<usize>,
    /// Execution backend [default: in-process].
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Seconds to wait for multi-process workers.
    #[arg(long)]
    timeout: Option<f64>,
    /// Report file to write.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Sequential,
    M,
    Mr,
}

impl From<VariantArg> for VariantName {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sequential => VariantName::Sequential,
            VariantArg::M => VariantName::M,
            VariantArg::Mr => VariantName::Mr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Sequential,
    InProcess,
    MultiProcess,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Sequential => BackendKind::Sequential,
            BackendArg::InProcess => BackendKind::InProcess,
            BackendArg::MultiProcess => BackendKind::MultiProcess,
        }
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    output: PathBuf,
    /// Write a named set of constants instead of measuring.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Args)]
struct SweepSpec {
    #[arg(long, value_enum)]
    variant: ModelVariant,
    #[arg(long)]
    n: usize,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', required = true)]
    workers: Vec<usize>,
    /// Iterations per run; the first one is a warm-up.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, value_enum, default_value = "in-process")]
    backend: BackendArg,
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    spec: SweepSpec,
    /// Observations file to write; printed to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Curve file from `bsf predict`.
    #[arg(long, requires = "observations")]
    prediction: Option<PathBuf>,
    /// Observations file from `bsf sweep`.
    #[arg(long, requires = "prediction")]
    observations: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "prediction")]
    variant: Option<ModelVariant>,
    #[arg(long, conflicts_with = "prediction")]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "prediction")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, value_enum, default_value = "in-process")]
    backend: BackendArg,
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    #[command(flatten)]
    constants: ConstantsArgs,
    /// Report file to write; printed to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also keep the measured observations.
    #[arg(long)]
    observations_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenKind {
    PaperSystem,
    RandomDd,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix file to write; printed to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WorkerArgs {
    #[arg(long)]
    plugin: String,
    #[arg(long)]
    connect: SocketAddr,
    #[arg(long)]
    index: u32,
}

/// Failure of a command, already mapped to its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            ref e if e.is_io() => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Predict(a) => cmd_predict(a, out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Gen(a) => cmd_gen(a, out),
        Command::Worker(a) => cmd_worker(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "bsf: {}", f.message);
            f.code
        }
    }
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => formats::atomic_write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Summaries become comment lines when the data itself went to stdout.
fn summary_prefix(output: &Option<PathBuf>) -> &'static str {
    if output.is_some() {
        ""
    } else {
        "# "
    }
}

impl ConstantsArgs {
    fn resolve(&self) -> std::result::Result<MachineConstants<f64>, Failure> {
        let explicit = [self.latency, self.tau_op, self.tau_tr];
        let given = explicit.iter().filter(|v| v.is_some()).count();
        if self.preset.is_some() && given > 0 {
            return Err(Failure::usage("--preset cannot be combined with --latency/--tau-op/--tau-tr"));
        }
        if let Some(Preset::PaperTornado) = self.preset {
            return Ok(MachineConstants::paper_tornado());
        }
        match (given, &self.calibration) {
            (3, _) => Ok(MachineConstants::new(
                self.latency.unwrap(),
                self.tau_op.unwrap(),
                self.tau_tr.unwrap(),
            )?),
            (0, Some(path)) => Ok(formats::read_calibration(path)?.constants),
            _ => Err(Failure::usage(format!(
                "machine constants L (--latency), tau_op (--tau-op) and tau_tr (--tau-tr) are required; \
                 give all three, --preset paper-tornado, --calibration FILE or set {CALIBRATION_ENV}"
            ))),
        }
    }
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> CmdResult {
    let constants = a.constants.resolve()?;
    let curve = predict_curve(a.variant.into(), a.n, a.kmax, &constants)?;
    let best = optimal_workers(&curve)?;
    let file = CurveFile {
        curve,
        constants: Some(constants),
    };
    emit(out, a.output.as_deref(), &formats::format_curve(&file))?;
    let best_speedup = file.curve.rows[best - 1].speedup;
    writeln!(
        out,
        "{}scalability bound {} ; optimum K = {best} with speedup {}",
        summary_prefix(&a.output),
        formats::fmt_real(file.curve.scalability_bound),
        formats::fmt_real(best_speedup)
    )?;
    Ok(())
}

fn load_problem(p: &ProblemSource) -> bsf_core::Result<LinearSystem> {
    match p {
        ProblemSource::File { path } => formats::read_matrix(path),
        ProblemSource::PaperSystem { n } => gen_paper_system(*n),
        ProblemSource::RandomDd { n, seed } => Ok(gen_dd_system(*n, *seed)?.system),
    }
}

fn solve_config(a: &SolveArgs) -> std::result::Result<RunConfig, Failure> {
    let flag_problem = if let Some(path) = &a.input {
        Some(ProblemSource::File { path: path.clone() })
    } else if let Some(n) = a.paper_system {
        Some(ProblemSource::PaperSystem { n })
    } else {
        a.random_dd.map(|n| ProblemSource::RandomDd {
            n,
            seed: a.seed.unwrap_or(0),
        })
    };
    let mut cfg = match (&a.config, flag_problem) {
        (Some(path), problem) => {
            let mut c = formats::read_run_config(path)?;
            if let ProblemSource::File { path: rel } = &mut c.problem {
                if rel.is_relative() {
                    if let Some(dir) = path.parent() {
                        *rel = dir.join(&*rel);
                    }
                }
            }
            if let Some(p) = problem {
                c.problem = p;
            }
            c
        }
        (None, Some(p)) => RunConfig::new(p),
        (None, None) => {
            return Err(Failure::usage(
                "no problem given: use --config, --input, --paper-system or --random-dd",
            ))
        }
    };
    if let Some(v) = a.variant {
        cfg.variant = v.into();
    }
    if let Some(v) = a.eps {
        cfg.eps = v;
    }
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if let Some(v) = a.backend {
        cfg.backend = v.into();
    }
    if let Some(v) = a.timeout {
        cfg.timeout_secs = v;
    }
    if let Some(v) = &a.output {
        cfg.output = Some(v.clone());
    }
    Ok(cfg)
}

fn cmd_solve(a: SolveArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = solve_config(&a)?;
    let sys = load_problem(&cfg.problem)?;
    let backend = backend_for(cfg.backend, cfg.timeout_secs)?;
    let solve_cfg = SolveConfig {
        eps: cfg.eps,
        max_iters: cfg.max_iters,
        workers: cfg.workers,
        variant: cfg.variant.into(),
        keep_history: false,
    };
    let result = solve(&sys, &solve_cfg, &backend)?;
    let report = SolveReport::new(cfg.variant, cfg.workers, &result);
    if let Some(path) = &cfg.output {
        formats::atomic_write(path, &formats::format_solve_report(&report)?)?;
    }
    let status = if result.converged { "converged" } else { "not converged" };
    writeln!(
        out,
        "{status} after {} iterations ; residual {}",
        result.iterations,
        formats::fmt_real(result.residual_norm)
    )?;
    if cfg.output.is_none() && sys.n() <= 16 {
        let xs: Vec<String> = result.x.iter().map(|&v| formats::fmt_real(v)).collect();
        writeln!(out, "x = {}", xs.join(" "))?;
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, out: &mut dyn Write) -> CmdResult {
    let cal = match a.preset {
        Some(Preset::PaperTornado) => Calibration {
            constants: MachineConstants::paper_tornado(),
            metadata: None,
        },
        None => calibration::calibrate()?,
    };
    formats::atomic_write(&a.output, &formats::format_calibration(&cal)?)?;
    let c = &cal.constants;
    writeln!(
        out,
        "latency {} s ; tau_op {} s ; tau_tr {} s",
        formats::fmt_real(c.latency),
        formats::fmt_real(c.tau_op),
        formats::fmt_real(c.tau_tr)
    )?;
    if cal.metadata.as_ref().is_some_and(|m| m.tau_tr_clamped) {
        writeln!(out, "tau_tr was below the timer resolution and has been clamped")?;
    }
    Ok(())
}

fn run_sweep(s: &SweepSpec) -> std::result::Result<Vec<calibration::ObservationRecord>, Failure> {
    let backend = backend_for(s.backend.into(), s.timeout)?;
    Ok(calibration::sweep(s.variant.into(), s.n, &s.workers, s.iters, &backend)?)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> CmdResult {
    let records = run_sweep(&a.spec)?;
    emit(out, a.output.as_deref(), &formats::format_observations(&records)?)?;
    Ok(())
}

fn cmd_compare(a: CompareArgs, out: &mut dyn Write) -> CmdResult {
    let (curve, observations) = match (&a.prediction, &a.observations) {
        (Some(pred), Some(obs)) => (formats::read_curve(pred)?.curve, formats::read_observations(obs)?),
        _ => {
            let (Some(variant), Some(n)) = (a.variant, a.n) else {
                return Err(Failure::usage(
                    "compare needs --prediction and --observations, or --variant, --n and --workers",
                ));
            };
            if a.workers.is_empty() {
                return Err(Failure::usage("compare needs --workers"));
            }
            let constants = a.constants.resolve()?;
            let spec = SweepSpec {
                variant,
                n,
                workers: a.workers.clone(),
                iters: a.iters,
                backend: a.backend,
                timeout: a.timeout,
            };
            let records = run_sweep(&spec)?;
            if let Some(path) = &a.observations_output {
                formats::atomic_write(path, &formats::format_observations(&records)?)?;
            }
            let kmax = a.workers.iter().copied().max().unwrap_or(1);
            (predict_curve(variant.into(), n, kmax, &constants)?, records)
        }
    };
    let report = calibration::compare(&curve, &observations)?;
    emit(out, a.output.as_deref(), &formats::format_report(&report))?;
    writeln!(
        out,
        "{}predicted optimum K = {} ; observed optimum K = {} ; max deviation {}",
        summary_prefix(&a.output),
        report.predicted_argmax,
        report.observed_argmax,
        formats::fmt_real(report.max_deviation)
    )?;
    Ok(())
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> CmdResult {
    let sys = match a.kind {
        GenKind::PaperSystem => gen_paper_system(a.n)?,
        GenKind::RandomDd => gen_dd_system(a.n, a.seed)?.system,
    };
    emit(out, a.output.as_deref(), &formats::format_matrix(&sys))
}

fn cmd_worker(a: WorkerArgs) -> CmdResult {
    let name = a.plugin.as_str();
    if name == JacobiM::<f64>::NAME {
        serve_worker::<JacobiM<f64>>(a.connect, a.index)?;
    } else if name == JacobiMR::<f64>::NAME {
        serve_worker::<JacobiMR<f64>>(a.connect, a.index)?;
    } else {
        return Err(Failure::usage(format!("unknown worker plugin `{name}`")));
    }
    Ok(())
}

/// Backend used by `solve`, `sweep` and `compare` for a given kind. Worker
/// processes are copies of the running executable.
pub fn backend_for(kind: BackendKind, timeout_secs: f64) -> bsf_core::Result<Backend> {
    let program = std::env::current_exe().map_err(Error::Io)?;
    kind.to_backend(timeout_secs, Some(program))
}
