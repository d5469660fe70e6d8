//! Text file formats. Every writer goes through [`atomic_write`], and every
//! format reads back bit-exactly what it wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bsf_core::calibration::{Calibration, ComparisonReport, ComparisonRow, ObservationRecord};
use bsf_core::cost_model::{CurveRow, MachineConstants, PredictionCurve, Variant};
use bsf_core::jacobi::{SolveResult, SolverVariant};
use bsf_core::runtime::{Backend, IterationTrace, MultiProcessConfig, WorkerLauncher};
use bsf_core::{Error, LinearSystem, Result};
use serde::{Deserialize, Serialize};

fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// over `path`.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| with_path(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| with_path(path, e))?;
    tmp.persist(path).map_err(|e| with_path(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e))
}

/// Shortest decimal that parses back to the same double.
pub fn fmt_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-3..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_real(tok: &str, source: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(source, line, format!("`{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(source, line, format!("`{tok}` is not finite")));
    }
    Ok(v)
}

fn parse_count(tok: &str, source: &str, line: usize, what: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(source, line, format!("{what} `{tok}` is not a nonnegative integer")))
}

// ---------------------------------------------------------------- matrices

/// `n`, then the `n` rows of `A`, then `b`, one line each. Lines starting
/// with `#` and blank lines are ignored.
pub fn format_matrix(sys: &LinearSystem) -> String {
    let mut out = String::new();
    let line = |xs: &[f64]| xs.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(" ");
    writeln!(out, "{}", sys.n()).unwrap();
    for i in 0..sys.n() {
        writeln!(out, "{}", line(sys.row(i))).unwrap();
    }
    writeln!(out, "{}", line(sys.rhs())).unwrap();
    out
}

pub fn parse_matrix(text: &str, source: &str) -> Result<LinearSystem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (first, head) = lines.next().ok_or_else(|| parse_err(source, 1, "missing dimension line"))?;
    let n = parse_count(head, source, first, "dimension")?;
    if n == 0 {
        return Err(parse_err(source, first, "dimension must be at least 1"));
    }
    let mut a = Vec::with_capacity(n * n);
    let mut b = Vec::with_capacity(n);
    let mut rows = 0;
    for (no, l) in lines {
        let vals = l
            .split_whitespace()
            .map(|t| parse_real(t, source, no))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(parse_err(source, no, format!("expected {n} values, found {}", vals.len())));
        }
        match rows {
            r if r < n => a.extend(vals),
            r if r == n => b = vals,
            _ => return Err(parse_err(source, no, format!("expected exactly {} data lines", n + 1))),
        }
        rows += 1;
    }
    if rows != n + 1 {
        return Err(parse_err(
            source,
            text.lines().count(),
            format!("expected {} data lines after the dimension, found {rows}", n + 1),
        ));
    }
    LinearSystem::new(n, a, b)
}

pub fn read_matrix(path: &Path) -> Result<LinearSystem> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn write_matrix(path: &Path, sys: &LinearSystem) -> Result<()> {
    atomic_write(path, &format_matrix(sys))
}

// ------------------------------------------------- CSV with # key = value

struct Table {
    meta: BTreeMap<String, (usize, String)>,
    rows: Vec<(usize, Vec<String>)>,
}

fn parse_table(text: &str, source: &str, header: &[&str]) -> Result<Table> {
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                meta.insert(k.trim().to_string(), (no, v.trim().to_string()));
            }
            continue;
        }
        let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
        if !seen_header {
            if cells != header {
                return Err(parse_err(source, no, format!("expected header `{}`", header.join(","))));
            }
            seen_header = true;
            continue;
        }
        if cells.len() != header.len() {
            return Err(parse_err(
                source,
                no,
                format!("expected {} columns, found {}", header.len(), cells.len()),
            ));
        }
        rows.push((no, cells));
    }
    if !seen_header {
        return Err(parse_err(source, 1, format!("missing header `{}`", header.join(","))));
    }
    Ok(Table { meta, rows })
}

impl Table {
    fn get(&self, key: &str, source: &str) -> Result<(usize, &str)> {
        self.meta
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| parse_err(source, 1, format!("missing `# {key} = …` line")))
    }

    fn real(&self, key: &str, source: &str) -> Result<f64> {
        let (l, v) = self.get(key, source)?;
        parse_real(v, source, l)
    }

    fn count(&self, key: &str, source: &str) -> Result<usize> {
        let (l, v) = self.get(key, source)?;
        parse_count(v, source, l, key)
    }

    fn variant(&self, source: &str) -> Result<Variant> {
        let (l, v) = self.get("variant", source)?;
        v.parse().map_err(|e: Error| parse_err(source, l, e.to_string()))
    }
}

/// A prediction curve plus the constants it was computed from, if recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub curve: PredictionCurve<f64>,
    pub constants: Option<MachineConstants<f64>>,
}

const CURVE_HEADER: [&str; 3] = ["K", "speedup", "efficiency"];

pub fn format_curve(file: &CurveFile) -> String {
    let c = &file.curve;
    let mut out = String::new();
    writeln!(out, "# variant = {}", c.variant).unwrap();
    writeln!(out, "# n = {}", c.n).unwrap();
    if let Some(mc) = &file.constants {
        writeln!(out, "# latency = {}", fmt_real(mc.latency)).unwrap();
        writeln!(out, "# tau_op = {}", fmt_real(mc.tau_op)).unwrap();
        writeln!(out, "# tau_tr = {}", fmt_real(mc.tau_tr)).unwrap();
    }
    writeln!(out, "# scalability_bound = {}", fmt_real(c.scalability_bound)).unwrap();
    writeln!(out, "{}", CURVE_HEADER.join(",")).unwrap();
    for r in &c.rows {
        writeln!(out, "{},{},{}", r.workers, fmt_real(r.speedup), fmt_real(r.efficiency)).unwrap();
    }
    out
}

pub fn parse_curve(text: &str, source: &str) -> Result<CurveFile> {
    let t = parse_table(text, source, &CURVE_HEADER)?;
    let rows = t
        .rows
        .iter()
        .map(|(no, c)| {
            Ok(CurveRow {
                workers: parse_count(&c[0], source, *no, "K")?,
                speedup: parse_real(&c[1], source, *no)?,
                efficiency: parse_real(&c[2], source, *no)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let constants = if t.meta.contains_key("latency") {
        Some(MachineConstants {
            latency: t.real("latency", source)?,
            tau_op: t.real("tau_op", source)?,
            tau_tr: t.real("tau_tr", source)?,
        })
    } else {
        None
    };
    Ok(CurveFile {
        curve: PredictionCurve {
            variant: t.variant(source)?,
            n: t.count("n", source)?,
            rows,
            scalability_bound: t.real("scalability_bound", source)?,
        },
        constants,
    })
}

pub fn read_curve(path: &Path) -> Result<CurveFile> {
    parse_curve(&read_text(path)?, &path.display().to_string())
}

const OBS_HEADER: [&str; 4] = ["K", "mean_iter_time", "speedup", "efficiency"];

/// Sweep records of one `(variant, n)` pair.
pub fn format_observations(records: &[ObservationRecord]) -> Result<String> {
    let first = records.first().ok_or(Error::Empty("no observations to write"))?;
    if records.iter().any(|r| r.variant != first.variant || r.n != first.n) {
        return Err(Error::KeyMismatch("observations mix variants or dimensions".into()));
    }
    let mut out = String::new();
    writeln!(out, "# variant = {}", first.variant).unwrap();
    writeln!(out, "# n = {}", first.n).unwrap();
    writeln!(out, "{}", OBS_HEADER.join(",")).unwrap();
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.workers,
            fmt_real(r.mean_iter_time),
            fmt_real(r.speedup),
            fmt_real(r.efficiency)
        )
        .unwrap();
    }
    Ok(out)
}

pub fn parse_observations(text: &str, source: &str) -> Result<Vec<ObservationRecord>> {
    let t = parse_table(text, source, &OBS_HEADER)?;
    let variant = t.variant(source)?;
    let n = t.count("n", source)?;
    t.rows
        .iter()
        .map(|(no, c)| {
            Ok(ObservationRecord {
                variant,
                n,
                workers: parse_count(&c[0], source, *no, "K")?,
                mean_iter_time: parse_real(&c[1], source, *no)?,
                speedup: parse_real(&c[2], source, *no)?,
                efficiency: parse_real(&c[3], source, *no)?,
            })
        })
        .collect()
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationRecord>> {
    parse_observations(&read_text(path)?, &path.display().to_string())
}

const REPORT_HEADER: [&str; 6] = [
    "K",
    "speedup_pred",
    "speedup_obs",
    "efficiency_pred",
    "efficiency_obs",
    "deviation",
];

pub fn format_report(r: &ComparisonReport) -> String {
    let mut out = String::new();
    writeln!(out, "# variant = {}", r.variant).unwrap();
    writeln!(out, "# n = {}", r.n).unwrap();
    writeln!(out, "# max_deviation = {}", fmt_real(r.max_deviation)).unwrap();
    writeln!(out, "# predicted_argmax = {}", r.predicted_argmax).unwrap();
    writeln!(out, "# observed_argmax = {}", r.observed_argmax).unwrap();
    writeln!(out, "{}", REPORT_HEADER.join(",")).unwrap();
    for row in &r.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.workers,
            fmt_real(row.speedup_pred),
            fmt_real(row.speedup_obs),
            fmt_real(row.efficiency_pred),
            fmt_real(row.efficiency_obs),
            fmt_real(row.deviation)
        )
        .unwrap();
    }
    out
}

pub fn parse_report(text: &str, source: &str) -> Result<ComparisonReport> {
    let t = parse_table(text, source, &REPORT_HEADER)?;
    let rows = t
        .rows
        .iter()
        .map(|(no, c)| {
            let real = |i: usize| parse_real(&c[i], source, *no);
            Ok(ComparisonRow {
                workers: parse_count(&c[0], source, *no, "K")?,
                speedup_pred: real(1)?,
                speedup_obs: real(2)?,
                efficiency_pred: real(3)?,
                efficiency_obs: real(4)?,
                deviation: real(5)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        variant: t.variant(source)?,
        n: t.count("n", source)?,
        rows,
        max_deviation: t.real("max_deviation", source)?,
        predicted_argmax: t.count("predicted_argmax", source)?,
        observed_argmax: t.count("observed_argmax", source)?,
    })
}

// -------------------------------------------------------------------- TOML

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Domain(format!("cannot encode TOML: {e}")))
}

fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(1);
        parse_err(source, line, e.message().to_string())
    })
}

pub fn format_calibration(c: &Calibration) -> Result<String> {
    to_toml(c)
}

pub fn parse_calibration(text: &str, source: &str) -> Result<Calibration> {
    let c: Calibration = from_toml(text, source)?;
    c.constants
        .validate()
        .map_err(|e| parse_err(source, 1, e.to_string()))?;
    Ok(c)
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    parse_calibration(&read_text(path)?, &path.display().to_string())
}

/// Where the linear system of a run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSource {
    File { path: PathBuf },
    PaperSystem { n: usize },
    /// TOML integers are signed, so a stored seed must not exceed `i64::MAX`.
    RandomDd { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Sequential,
    #[serde(alias = "jacobi-m")]
    M,
    #[serde(alias = "jacobi-mr")]
    Mr,
}

impl From<VariantName> for SolverVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Sequential => SolverVariant::Sequential,
            VariantName::M => SolverVariant::JacobiM,
            VariantName::Mr => SolverVariant::JacobiMR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Sequential,
    InProcess,
    MultiProcess,
}

impl BackendKind {
    /// Multi-process workers are copies of `worker_program` started with the
    /// hidden `worker` subcommand.
    pub fn to_backend(self, timeout_secs: f64, worker_program: Option<PathBuf>) -> Result<Backend> {
        Ok(match self {
            BackendKind::Sequential => Backend::Sequential,
            BackendKind::InProcess => Backend::InProcess,
            BackendKind::MultiProcess => {
                if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
                    return Err(Error::Domain(format!("timeout must be positive, got {timeout_secs}")));
                }
                Backend::MultiProcess(MultiProcessConfig {
                    timeout: Duration::from_secs_f64(timeout_secs),
                    launcher: match worker_program {
                        Some(program) => WorkerLauncher::Command {
                            program,
                            args: vec!["worker".into()],
                        },
                        None => WorkerLauncher::Threads,
                    },
                    ..MultiProcessConfig::default()
                })
            }
        })
    }
}

fn default_variant() -> VariantName {
    VariantName::M
}
fn default_eps() -> f64 {
    bsf_core::jacobi::DEFAULT_EPS
}
fn default_max_iters() -> usize {
    bsf_core::jacobi::DEFAULT_MAX_ITERS
}
fn default_workers() -> usize {
    1
}
fn default_backend() -> BackendKind {
    BackendKind::InProcess
}
fn default_timeout() -> f64 {
    30.0
}

/// Declarative description of a `solve` run.
///
/// Defaults: `variant = "m"`, `eps = 1e-6`, `max_iters = 10000`,
/// `workers = 1`, `backend = "in-process"`, `timeout_secs = 30`, no output
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(problem: ProblemSource) -> Self {
        Self {
            problem,
            variant: default_variant(),
            eps: default_eps(),
            max_iters: default_max_iters(),
            workers: default_workers(),
            backend: default_backend(),
            timeout_secs: default_timeout(),
            output: None,
        }
    }
}

pub fn format_run_config(c: &RunConfig) -> Result<String> {
    to_toml(c)
}

pub fn parse_run_config(text: &str, source: &str) -> Result<RunConfig> {
    from_toml(text, source)
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read_text(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub iteration: usize,
    pub t_send: f64,
    pub t_work: f64,
    pub t_receive: f64,
    pub t_process: f64,
    pub wall: f64,
}

impl From<&IterationTrace> for TraceRow {
    fn from(t: &IterationTrace) -> Self {
        Self {
            iteration: t.iteration,
            t_send: t.t_send,
            t_work: t.t_work,
            t_receive: t.t_receive,
            t_process: t.t_process,
            wall: t.wall,
        }
    }
}

/// Result file of a `solve` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    pub variant: VariantName,
    pub workers: usize,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn new(variant: VariantName, workers: usize, r: &SolveResult<f64>) -> Self {
        Self {
            variant,
            workers,
            n: r.x.len(),
            iterations: r.iterations,
            converged: r.converged,
            residual_norm: r.residual_norm,
            x: r.x.clone(),
            trace: r.iteration_times.iter().map(TraceRow::from).collect(),
        }
    }
}

pub fn format_solve_report(r: &SolveReport) -> Result<String> {
    to_toml(r)
}

pub fn parse_solve_report(text: &str, source: &str) -> Result<SolveReport> {
    from_toml(text, source)
}
