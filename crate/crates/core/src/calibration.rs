//! Host calibration of the machine constants, observed speedup sweeps and
//! their comparison with the cost model.

use std::collections::BTreeSet;
use std::hint::black_box;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::cost_model::{argmax_speedup, MachineConstants, PredictionCurve, Variant};
use crate::error::{Error, Result};
use crate::jacobi::{gen_paper_system, JacobiInput, JacobiM, JacobiMR, StopRule};
use crate::runtime::{measure_iteration, run_farm, Backend, FarmConfig};

pub const LATENCY_ROUND_TRIPS: usize = 1000;
pub const TAU_OP_MULTIPLY_ADDS: u64 = 100_000_000;
pub const TAU_TR_DOUBLES: usize = 1_000_000;
pub const TAU_TR_REPETITIONS: usize = 5;
/// Runs per sweep cell; the median run is kept.
pub const SWEEP_RUNS: usize = 3;
/// Floor used when subtracting latency leaves no positive transfer time.
pub const TAU_TR_FLOOR: f64 = 1e-12;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn loopback() -> Result<TcpListener> {
    TcpListener::bind(("127.0.0.1", 0)).map_err(|e| Error::transport("binding loopback listener", e))
}

fn connect(listener: &TcpListener) -> Result<TcpStream> {
    let addr = listener
        .local_addr()
        .map_err(|e| Error::transport("reading listener address", e))?;
    let s = TcpStream::connect(addr).map_err(|e| Error::transport("connecting to echo server", e))?;
    s.set_nodelay(true)
        .map_err(|e| Error::transport("setting TCP_NODELAY", e))?;
    Ok(s)
}

fn join_echo(h: JoinHandle<std::io::Result<()>>) -> Result<()> {
    h.join()
        .map_err(|_| Error::Protocol("echo server panicked".into()))?
        .map_err(|e| Error::transport("echo server", e))
}

/// Half the median round-trip time of `round_trips` one-byte messages over
/// loopback TCP.
pub fn measure_latency_with(round_trips: usize) -> Result<f64> {
    if round_trips == 0 {
        return Err(Error::domain("latency needs at least one round trip"));
    }
    let listener = loopback()?;
    let mut client = connect(&listener)?;
    let (mut peer, _) = listener
        .accept()
        .map_err(|e| Error::transport("accepting latency probe", e))?;
    let server = thread::spawn(move || -> std::io::Result<()> {
        peer.set_nodelay(true)?;
        let mut byte = [0u8; 1];
        loop {
            match peer.read(&mut byte)? {
                0 => return Ok(()),
                _ => peer.write_all(&byte)?,
            }
        }
    });
    let mut samples = Vec::with_capacity(round_trips);
    let mut byte = [0u8; 1];
    let mut failure = None;
    for i in 0..round_trips {
        let start = Instant::now();
        if let Err(e) = client.write_all(&[i as u8]).and_then(|_| client.read_exact(&mut byte)) {
            failure = Some(Error::transport("latency round trip", e));
            break;
        }
        samples.push(start.elapsed().as_secs_f64());
    }
    drop(client);
    let joined = join_echo(server);
    if let Some(e) = failure {
        return Err(e);
    }
    joined?;
    Ok(median(samples) / 2.0)
}

pub fn measure_latency() -> Result<f64> {
    measure_latency_with(LATENCY_ROUND_TRIPS)
}

/// Time per arithmetic operation from a chain of `multiply_adds` dependent
/// `x = x·a + c` steps, each counted as two operations.
pub fn measure_tau_op_with(multiply_adds: u64) -> f64 {
    let a = black_box(0.999_999_9_f64);
    let c = black_box(1e-7_f64);
    let mut x = black_box(1.0_f64);
    let start = Instant::now();
    for _ in 0..multiply_adds {
        x = x * a + c;
    }
    let elapsed = start.elapsed().as_secs_f64();
    black_box(x);
    let ops = 2.0 * multiply_adds.max(1) as f64;
    (elapsed / ops).max(f64::MIN_POSITIVE)
}

pub fn measure_tau_op() -> f64 {
    measure_tau_op_with(TAU_OP_MULTIPLY_ADDS)
}

/// Result of a bulk-transfer measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMeasurement {
    /// Per-double transfer time after latency subtraction (clamped).
    pub tau_tr: f64,
    /// Per-double time before latency subtraction.
    pub raw: f64,
    /// `true` when subtraction would have left a non-positive value and
    /// [`TAU_TR_FLOOR`] was used instead.
    pub clamped: bool,
}

/// Doubles per socket write when streaming a transfer probe.
const CHUNK_DOUBLES: usize = 8192;

/// Per-double time of sending `doubles` f64 values over loopback.
///
/// Each round trip streams the message in fixed-size chunks to a receiver
/// that discards it into a scratch buffer and answers with one byte, so the
/// round trip costs `2L + n·τ_tr`. Neither side touches more memory as the
/// message grows.
pub fn measure_tau_tr_with(doubles: usize, repetitions: usize, latency: f64) -> Result<TransferMeasurement> {
    if doubles == 0 || repetitions == 0 {
        return Err(Error::domain("transfer measurement needs a non-empty message and one repetition"));
    }
    let listener = loopback()?;
    let mut client = connect(&listener)?;
    let (mut peer, _) = listener
        .accept()
        .map_err(|e| Error::transport("accepting transfer probe", e))?;
    let bytes = doubles * 8;
    // One extra untimed round trip warms up both ends.
    let rounds = repetitions + 1;
    let server = thread::spawn(move || -> std::io::Result<()> {
        peer.set_nodelay(true)?;
        let mut scratch = vec![0u8; CHUNK_DOUBLES * 8];
        for _ in 0..rounds {
            let mut left = bytes;
            while left > 0 {
                let want = left.min(scratch.len());
                match peer.read(&mut scratch[..want])? {
                    0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
                    got => left -= got,
                }
            }
            peer.write_all(&[1])?;
        }
        Ok(())
    });
    let chunk: Vec<u8> = (0..CHUNK_DOUBLES).flat_map(|i| (i as f64).to_le_bytes()).collect();
    let mut ack = [0u8; 1];
    let mut samples = Vec::with_capacity(repetitions);
    let mut failure = None;
    for round in 0..rounds {
        let start = Instant::now();
        let mut left = bytes;
        let sent = (|| {
            while left > 0 {
                let k = left.min(chunk.len());
                client.write_all(&chunk[..k])?;
                left -= k;
            }
            client.read_exact(&mut ack)
        })();
        if let Err(e) = sent {
            failure = Some(Error::transport("bulk transfer round trip", e));
            break;
        }
        if round > 0 {
            samples.push(start.elapsed().as_secs_f64());
        }
    }
    drop(client);
    let joined = join_echo(server);
    if let Some(e) = failure {
        return Err(e);
    }
    joined?;
    let rtt = median(samples);
    let raw = rtt / doubles as f64;
    let net = (rtt - 2.0 * latency) / doubles as f64;
    Ok(if net > 0.0 {
        TransferMeasurement {
            tau_tr: net,
            raw,
            clamped: false,
        }
    } else {
        TransferMeasurement {
            tau_tr: TAU_TR_FLOOR,
            raw,
            clamped: true,
        }
    })
}

pub fn measure_tau_tr(latency: f64) -> Result<TransferMeasurement> {
    measure_tau_tr_with(TAU_TR_DOUBLES, TAU_TR_REPETITIONS, latency)
}

/// How a set of constants was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetadata {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub latency_round_trips: usize,
    pub tau_op_multiply_adds: u64,
    pub tau_tr_doubles: usize,
    pub tau_tr_repetitions: usize,
    pub tau_tr_clamped: bool,
    pub hardware_threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub constants: MachineConstants<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<CalibrationMetadata>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Measures all three constants on this host.
pub fn calibrate() -> Result<Calibration> {
    let started_unix = unix_now();
    let latency = measure_latency()?;
    let tau_op = measure_tau_op();
    let transfer = measure_tau_tr(latency)?;
    let constants = MachineConstants::new(latency, tau_op, transfer.tau_tr)?;
    Ok(Calibration {
        constants,
        metadata: Some(CalibrationMetadata {
            started_unix,
            finished_unix: unix_now(),
            latency_round_trips: LATENCY_ROUND_TRIPS,
            tau_op_multiply_adds: TAU_OP_MULTIPLY_ADDS,
            tau_tr_doubles: TAU_TR_DOUBLES,
            tau_tr_repetitions: TAU_TR_REPETITIONS,
            tau_tr_clamped: transfer.clamped,
            hardware_threads: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }),
    })
}

/// Observed timing of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub variant: Variant,
    pub n: usize,
    pub workers: usize,
    /// Median over runs of the per-iteration mean wall time, warm-up excluded.
    pub mean_iter_time: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

/// Median per-iteration time of `runs` fixed-length runs.
fn time_cell(variant: Variant, input: &JacobiInput<f64>, workers: usize, backend: &Backend) -> Result<f64> {
    let cfg = FarmConfig::new(workers, backend.clone());
    let mut times = Vec::with_capacity(SWEEP_RUNS);
    for _ in 0..SWEEP_RUNS {
        let traces = match variant {
            Variant::M => run_farm::<JacobiM<f64>>(input, &cfg)?.1,
            Variant::MR => run_farm::<JacobiMR<f64>>(input, &cfg)?.1,
        };
        times.push(measure_iteration(&traces)?.wall);
    }
    Ok(median(times))
}

/// Runs Jacobi-M or Jacobi-MR for exactly `iters` iterations on the
/// scalable test system for each `K` in `workers`, relative to a `K = 1`
/// run of the same sweep.
pub fn sweep(
    variant: Variant,
    n: usize,
    workers: &[usize],
    iters: usize,
    backend: &Backend,
) -> Result<Vec<ObservationRecord>> {
    if workers.is_empty() {
        return Err(Error::Empty("no worker counts to sweep"));
    }
    if iters == 0 {
        return Err(Error::domain("a sweep needs at least one iteration"));
    }
    let mut seen = BTreeSet::new();
    for &k in workers {
        if k == 0 {
            return Err(Error::domain("worker counts must be at least 1"));
        }
        if !seen.insert(k) {
            return Err(Error::KeyMismatch(format!("worker count {k} listed twice")));
        }
    }
    let input = JacobiInput {
        system: gen_paper_system::<f64>(n)?,
        stop: StopRule::Fixed { iters },
        keep_history: false,
    };
    let mut cells = Vec::with_capacity(workers.len());
    let mut base = None;
    for &k in workers {
        let t = time_cell(variant, &input, k, backend)?;
        if k == 1 {
            base = Some(t);
        }
        cells.push((k, t));
    }
    let base = match base {
        Some(t) => t,
        None => time_cell(variant, &input, 1, backend)?,
    };
    Ok(cells
        .into_iter()
        .map(|(k, t)| {
            let speedup = if k == 1 { 1.0 } else { base / t };
            ObservationRecord {
                variant,
                n,
                workers: k,
                mean_iter_time: t,
                speedup,
                efficiency: speedup / k as f64,
            }
        })
        .collect())
}

/// One `K` present in both the prediction and the observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub workers: usize,
    pub speedup_pred: f64,
    pub speedup_obs: f64,
    pub efficiency_pred: f64,
    pub efficiency_obs: f64,
    /// `|pred − obs| / obs` on speedup.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub variant: Variant,
    pub n: usize,
    pub rows: Vec<ComparisonRow>,
    pub max_deviation: f64,
    /// Best `K` of the prediction among the compared rows.
    pub predicted_argmax: usize,
    pub observed_argmax: usize,
}

impl ComparisonReport {
    pub fn argmax_agrees(&self) -> bool {
        self.predicted_argmax == self.observed_argmax
    }
}

/// Joins a prediction with observations on `(variant, n, K)`.
pub fn compare(pred: &PredictionCurve<f64>, obs: &[ObservationRecord]) -> Result<ComparisonReport> {
    if obs.is_empty() {
        return Err(Error::Empty("no observations to compare"));
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(obs.len());
    for o in obs {
        if o.variant != pred.variant || o.n != pred.n {
            return Err(Error::KeyMismatch(format!(
                "observation ({}, n={}) does not match prediction ({}, n={})",
                o.variant, o.n, pred.variant, pred.n
            )));
        }
        if !seen.insert(o.workers) {
            return Err(Error::KeyMismatch(format!("K={} observed more than once", o.workers)));
        }
        let p = pred
            .rows
            .iter()
            .find(|r| r.workers == o.workers)
            .ok_or_else(|| Error::KeyMismatch(format!("K={} is not in the prediction", o.workers)))?;
        rows.push(ComparisonRow {
            workers: o.workers,
            speedup_pred: p.speedup,
            speedup_obs: o.speedup,
            efficiency_pred: p.efficiency,
            efficiency_obs: o.efficiency,
            deviation: (p.speedup - o.speedup).abs() / o.speedup,
        });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let predicted_argmax = argmax_speedup(rows.iter().map(|r| (r.workers, r.speedup_pred))).unwrap_or(1);
    let observed_argmax = argmax_speedup(rows.iter().map(|r| (r.workers, r.speedup_obs))).unwrap_or(1);
    Ok(ComparisonReport {
        variant: pred.variant,
        n: pred.n,
        rows,
        max_deviation,
        predicted_argmax,
        observed_argmax,
    })
}
