//! Closed-form cost metrics of the Bulk Synchronous Farm model.
//!
//! Two algorithm representations are covered: BSF-M (Map only) and BSF-MR
//! (Map followed by Reduce). For each one the module evaluates the predicted
//! speedup `a(K)`, the parallel efficiency `e(K) = a(K)/K` and the worker
//! count `P` at which the speedup peaks. The Jacobi instantiations derive the
//! per-iteration cost parameters from operation and transfer counts and the
//! calibrated [`MachineConstants`].
//!
//! All inputs are timings in seconds. Worker counts are integers; everywhere
//! a count enters a formula it is promoted to the scalar type, so `m = n/K`
//! is real-valued when `K` does not divide `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_count, Scalar};

/// Calibrated hardware timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineConstants<T> {
    /// Time to deliver a 1-byte message between two nodes.
    pub latency: T,
    /// Time of one arithmetic or comparison operation.
    pub tau_op: T,
    /// Time to transfer one floating-point number, excluding latency.
    pub tau_tr: T,
}

impl<T: Scalar> MachineConstants<T> {
    pub fn new(latency: T, tau_op: T, tau_tr: T) -> Result<Self> {
        let mc = Self {
            latency,
            tau_op,
            tau_tr,
        };
        mc.validate()?;
        Ok(mc)
    }

    /// Reference cluster constants, shipped as the `paper-tornado` preset.
    pub fn paper_tornado() -> Self {
        Self {
            latency: T::from_f64(1.5e-5).unwrap(),
            tau_op: T::from_f64(2.9e-8).unwrap(),
            tau_tr: T::from_f64(1.9e-7).unwrap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("latency", self.latency),
            ("tau_op", self.tau_op),
            ("tau_tr", self.tau_tr),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::domain(format!(
                    "machine constant {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Which list representation an algorithm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Map only.
    #[serde(rename = "m")]
    M,
    /// Map followed by Reduce.
    #[serde(rename = "mr")]
    MR,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::M => "m",
            Variant::MR => "mr",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" | "bsf-m" | "jacobi-m" => Ok(Variant::M),
            "mr" | "bsf-mr" | "jacobi-mr" => Ok(Variant::MR),
            other => Err(Error::domain(format!(
                "unknown variant `{other}` (expected `m` or `mr`)"
            ))),
        }
    }
}

/// Per-iteration cost parameters of a BSF-M algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsfMCosts<T> {
    /// Number of worker nodes `K`.
    pub workers: usize,
    /// `L`.
    pub latency: T,
    /// `t_s`: master sending one order to one worker.
    pub send: T,
    /// `t_w`: a single worker processing the whole order.
    pub work: T,
    /// `t_R`: master receiving the results of all workers.
    pub receive: T,
    /// `t_p`: master evaluating the results and checking the stop condition.
    pub process: T,
}

/// Per-iteration cost parameters of a BSF-MR algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsfMRCosts<T> {
    pub workers: usize,
    pub latency: T,
    /// `t_s`.
    pub send: T,
    /// `t_w`.
    pub work: T,
    /// `t_p`.
    pub process: T,
    /// `t_r`: one worker's result sent to the master.
    pub result_send: T,
    /// `t_a`: one application of the Reduce operation.
    pub compose: T,
    /// `l`: length of the Reduce list.
    pub reduce_len: usize,
}

fn check_time<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v.is_finite() && v >= T::zero() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "cost parameter {name} must be finite and nonnegative, got {v}"
        )))
    }
}

fn check_common<T: Scalar>(workers: usize, latency: T) -> Result<()> {
    if workers < 1 {
        return Err(Error::domain("worker count K must be at least 1"));
    }
    if !(latency.is_finite() && latency > T::zero()) {
        return Err(Error::domain(format!(
            "latency L must be positive and finite, got {latency}"
        )));
    }
    Ok(())
}

impl<T: Scalar> BsfMCosts<T> {
    pub fn validate(&self) -> Result<()> {
        check_common(self.workers, self.latency)?;
        check_time("t_s", self.send)?;
        check_time("t_w", self.work)?;
        check_time("t_R", self.receive)?;
        check_time("t_p", self.process)
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }
}

impl<T: Scalar> BsfMRCosts<T> {
    pub fn validate(&self) -> Result<()> {
        check_common(self.workers, self.latency)?;
        if self.reduce_len < 1 {
            return Err(Error::domain("Reduce list length l must be at least 1"));
        }
        check_time("t_s", self.send)?;
        check_time("t_w", self.work)?;
        check_time("t_p", self.process)?;
        check_time("t_r", self.result_send)?;
        check_time("t_a", self.compose)
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    /// `t_w + l·t_a`, the sequential Map plus Reduce time.
    fn total_work(&self) -> T {
        self.work + from_count::<T>(self.reduce_len) * self.compose
    }
}

// Both closed forms are grouped so that at K = 1 numerator and denominator
// are the same floating-point expression, which makes a(1) = e(1) = 1 exact.

/// BSF-M speedup `a(K)`.
pub fn speedup_m<T: Scalar>(c: &BsfMCosts<T>) -> Result<T> {
    c.validate()?;
    let k = from_count::<T>(c.workers);
    let (head, tail) = m_terms(c);
    let num = k * ((head + tail) + c.work);
    let den = (k * k * head + k * tail) + c.work;
    Ok(num / den)
}

/// BSF-M parallel efficiency, evaluated from its own closed form.
pub fn efficiency_m<T: Scalar>(c: &BsfMCosts<T>) -> Result<T> {
    c.validate()?;
    let k = from_count::<T>(c.workers);
    let (head, tail) = m_terms(c);
    let num = (head + tail) + c.work;
    let den = (k * k * head + k * tail) + c.work;
    Ok(num / den)
}

/// `(2L + t_s, t_R + t_p)`.
fn m_terms<T: Scalar>(c: &BsfMCosts<T>) -> (T, T) {
    (c.latency + c.latency + c.send, c.receive + c.process)
}

/// Worker count maximizing the BSF-M speedup, `sqrt(t_w / (2L + t_s))`.
pub fn scalability_bound_m<T: Scalar>(c: &BsfMCosts<T>) -> Result<T> {
    c.validate()?;
    let den = c.latency + c.latency + c.send;
    if c.work <= T::zero() {
        return Err(Error::domain("scalability bound needs t_w > 0"));
    }
    if den <= T::zero() {
        return Err(Error::domain("scalability bound needs 2L + t_s > 0"));
    }
    Ok((c.work / den).sqrt())
}

/// BSF-MR speedup `a(K)`.
pub fn speedup_mr<T: Scalar>(c: &BsfMRCosts<T>) -> Result<T> {
    c.validate()?;
    let k = from_count::<T>(c.workers);
    let head = c.latency + c.latency + c.send + c.result_send;
    let total = c.total_work();
    let num = (head + total) + c.process;
    // k·(head + t_a) + total/k − t_a + t_p, with the t_a terms collected.
    let den = ((k * head + total / k) + (k - T::one()) * c.compose) + c.process;
    Ok(num / den)
}

/// BSF-MR parallel efficiency, evaluated from its own closed form.
pub fn efficiency_mr<T: Scalar>(c: &BsfMRCosts<T>) -> Result<T> {
    c.validate()?;
    let k = from_count::<T>(c.workers);
    let head = c.latency + c.latency + c.send + c.result_send;
    let total = c.total_work();
    let num = (head + total) + c.process;
    let den = ((k * k * head + total) + k * (k - T::one()) * c.compose) + k * c.process;
    Ok(num / den)
}

/// Worker count maximizing the BSF-MR speedup,
/// `sqrt((t_w + l·t_a) / (2L + t_s + t_r + t_a))`.
pub fn scalability_bound_mr<T: Scalar>(c: &BsfMRCosts<T>) -> Result<T> {
    c.validate()?;
    let total = c.total_work();
    let den = c.latency + c.latency + c.send + c.result_send + c.compose;
    if total <= T::zero() {
        return Err(Error::domain("scalability bound needs t_w + l*t_a > 0"));
    }
    if den <= T::zero() {
        return Err(Error::domain("scalability bound needs 2L + t_s + t_r + t_a > 0"));
    }
    Ok((total / den).sqrt())
}

/// Operation and transfer counts of one iteration.
///
/// `c_r` is `n/K` for Jacobi-M and therefore real-valued when `K` does not
/// divide `n`; the counts are kept in the scalar type for that reason.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCounts<T> {
    /// Reals sent master → one worker.
    pub send: T,
    /// Arithmetic operations of the whole Map step.
    pub map: T,
    /// Reals sent one worker → master.
    pub receive: T,
    /// Master operations (evaluation and stop check).
    pub process: T,
    /// Operations per ⊕; zero for Map-only algorithms.
    pub compose: T,
}

fn check_dims(n: usize, workers: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::domain("dimension n must be at least 1"));
    }
    if workers < 1 {
        return Err(Error::domain("worker count K must be at least 1"));
    }
    Ok(())
}

/// Counts for one Jacobi-M iteration.
pub fn jacobi_m_counts<T: Scalar>(n: usize, workers: usize) -> Result<CostCounts<T>> {
    check_dims(n, workers)?;
    let nf = from_count::<T>(n);
    let two = T::one() + T::one();
    Ok(CostCounts {
        send: nf,
        map: two * nf * nf,
        receive: nf / from_count::<T>(workers),
        process: two * nf + two,
        compose: T::zero(),
    })
}

/// Counts for one Jacobi-MR iteration.
pub fn jacobi_mr_counts<T: Scalar>(n: usize, workers: usize) -> Result<CostCounts<T>> {
    check_dims(n, workers)?;
    if workers > n {
        return Err(Error::domain(format!(
            "Jacobi-MR needs K <= n, got K = {workers} > n = {n}"
        )));
    }
    let nf = from_count::<T>(n);
    let three = from_count::<T>(3);
    Ok(CostCounts {
        send: nf,
        map: nf * nf,
        receive: nf,
        process: three * nf,
        compose: nf,
    })
}

/// BSF-M parameters of Jacobi-M: `t_s = τ_tr·n`, `t_w = 2τ_op·n²`,
/// `t_R = τ_tr·K·(n/K)`, `t_p = 2τ_op·(n+1)`.
pub fn jacobi_m_costs<T: Scalar>(
    n: usize,
    workers: usize,
    mc: &MachineConstants<T>,
) -> Result<BsfMCosts<T>> {
    mc.validate()?;
    let counts = jacobi_m_counts::<T>(n, workers)?;
    let k = from_count::<T>(workers);
    Ok(BsfMCosts {
        workers,
        latency: mc.latency,
        send: mc.tau_tr * counts.send,
        work: mc.tau_op * counts.map,
        receive: mc.tau_tr * (k * counts.receive),
        process: mc.tau_op * counts.process,
    })
}

/// BSF-MR parameters of Jacobi-MR. Each worker folds `m = n/K` columns with
/// `m − 1` compositions, so the workers together spend
/// `τ_op·(n² + K·(m−1)·n) = τ_op·(n² + n·(n−K))`.
pub fn jacobi_mr_costs<T: Scalar>(
    n: usize,
    workers: usize,
    mc: &MachineConstants<T>,
) -> Result<BsfMRCosts<T>> {
    mc.validate()?;
    let counts = jacobi_mr_counts::<T>(n, workers)?;
    let nf = from_count::<T>(n);
    let k = from_count::<T>(workers);
    let worker_compositions = nf * (nf - k);
    Ok(BsfMRCosts {
        workers,
        latency: mc.latency,
        send: mc.tau_tr * counts.send,
        work: mc.tau_op * (counts.map + worker_compositions),
        process: mc.tau_op * counts.process,
        result_send: mc.tau_tr * counts.receive,
        compose: mc.tau_op * counts.compose,
        reduce_len: n,
    })
}

/// Jacobi-M scalability bound; `t_w` and `2L + t_s` do not depend on `K`.
pub fn jacobi_m_scalability_bound<T: Scalar>(n: usize, mc: &MachineConstants<T>) -> Result<T> {
    scalability_bound_m(&jacobi_m_costs(n, 1, mc)?)
}

/// Jacobi-MR scalability bound.
///
/// `t_w` depends on `K`, so the bound is the fixed point of
/// `K ← sqrt((t_w(K) + l·t_a) / (2L + t_s + t_r + t_a))` started at `K = 1`,
/// stopping when successive values differ by less than `1e-9` or after 100
/// rounds. `K` is treated as real-valued inside the iteration.
pub fn jacobi_mr_scalability_bound<T: Scalar>(n: usize, mc: &MachineConstants<T>) -> Result<T> {
    let base = jacobi_mr_costs(n, 1, mc)?;
    let nf = from_count::<T>(n);
    let den = base.latency + base.latency + base.send + base.result_send + base.compose;
    let lt_a = nf * base.compose;
    let tol = T::from_f64(1e-9).unwrap();
    let mut k = T::one();
    for _ in 0..100 {
        let work = mc.tau_op * (nf * nf + nf * (nf - k));
        let next = ((work + lt_a) / den).sqrt();
        let done = (next - k).abs() < tol;
        k = next;
        if done {
            break;
        }
    }
    Ok(k)
}

/// One row of a predicted speedup curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow<T> {
    pub workers: usize,
    pub speedup: T,
    pub efficiency: T,
}

/// Predicted speedup and efficiency for `K = 1..=K_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCurve<T> {
    pub variant: Variant,
    pub n: usize,
    pub rows: Vec<CurveRow<T>>,
    pub scalability_bound: T,
}

/// Evaluates the Jacobi-M or Jacobi-MR prediction for every `K` in
/// `1..=k_max`.
pub fn predict_curve<T: Scalar>(
    variant: Variant,
    n: usize,
    k_max: usize,
    mc: &MachineConstants<T>,
) -> Result<PredictionCurve<T>> {
    if k_max < 1 {
        return Err(Error::domain("K_max must be at least 1"));
    }
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let (speedup, efficiency) = match variant {
            Variant::M => {
                let c = jacobi_m_costs(n, k, mc)?;
                (speedup_m(&c)?, efficiency_m(&c)?)
            }
            Variant::MR => {
                let c = jacobi_mr_costs(n, k, mc)?;
                (speedup_mr(&c)?, efficiency_mr(&c)?)
            }
        };
        rows.push(CurveRow {
            workers: k,
            speedup,
            efficiency,
        });
    }
    let scalability_bound = match variant {
        Variant::M => jacobi_m_scalability_bound(n, mc)?,
        Variant::MR => jacobi_mr_scalability_bound(n, mc)?,
    };
    Ok(PredictionCurve {
        variant,
        n,
        rows,
        scalability_bound,
    })
}

/// `K` of the row with the largest speedup; ties go to the smaller `K`.
pub fn optimal_workers<T: Scalar>(curve: &PredictionCurve<T>) -> Result<usize> {
    argmax_speedup(curve.rows.iter().map(|r| (r.workers, r.speedup)))
        .ok_or(Error::Empty("prediction curve has no rows"))
}

pub(crate) fn argmax_speedup<T: PartialOrd>(
    rows: impl IntoIterator<Item = (usize, T)>,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (k, s) in rows {
        best = match best {
            Some((bk, bs)) if !(s > bs || (s == bs && k < bk)) => Some((bk, bs)),
            _ => Some((k, s)),
        };
    }
    best.map(|(k, _)| k)
}
