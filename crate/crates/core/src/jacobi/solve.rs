use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::plugins::{JacobiInput, JacobiM, JacobiMR, JacobiState, StopRule};
use super::{build_operator, jacobi_step_reference, LinearSystem};
use crate::error::{Error, Result};
use crate::runtime::{run_farm, Backend, FarmConfig, IterationTrace};
use crate::scalar::Scalar;

/// Default tolerance on the squared step norm.
pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverVariant {
    /// Reference step on the calling thread, no farm.
    Sequential,
    JacobiM,
    JacobiMR,
}

impl fmt::Display for SolverVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverVariant::Sequential => "sequential",
            SolverVariant::JacobiM => "jacobi-m",
            SolverVariant::JacobiMR => "jacobi-mr",
        })
    }
}

impl FromStr for SolverVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(SolverVariant::Sequential),
            "jacobi-m" | "m" => Ok(SolverVariant::JacobiM),
            "jacobi-mr" | "mr" => Ok(SolverVariant::JacobiMR),
            other => Err(Error::domain(format!(
                "unknown solver variant `{other}` (expected sequential, jacobi-m or jacobi-mr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig<T> {
    pub eps: T,
    pub max_iters: usize,
    pub workers: usize,
    pub variant: SolverVariant,
    pub keep_history: bool,
}

impl<T: Scalar> Default for SolveConfig<T> {
    fn default() -> Self {
        Self {
            eps: T::from_f64_lossy(DEFAULT_EPS),
            max_iters: DEFAULT_MAX_ITERS,
            workers: 1,
            variant: SolverVariant::Sequential,
            keep_history: false,
        }
    }
}

impl<T: Scalar> SolveConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::domain(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iters < 1 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        if self.workers < 1 {
            return Err(Error::domain("workers must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Ax − b‖₂` of the final approximation.
    pub residual_norm: T,
    pub iteration_times: Vec<IterationTrace>,
    /// Every iterate, when requested by [`SolveConfig::keep_history`].
    pub history: Vec<Vec<T>>,
}

/// Solves `sys` with the configured variant, starting from `x⁽⁰⁾ = d`.
///
/// Running out of iterations is reported through `converged = false`; a
/// non-finite iterate is an [`Error::Divergence`].
pub fn solve<T: Scalar>(
    sys: &LinearSystem<T>,
    cfg: &SolveConfig<T>,
    backend: &Backend,
) -> Result<SolveResult<T>> {
    cfg.validate()?;
    if let Some(i) = (0..sys.n()).find(|&i| sys.row(i)[i] == T::zero()) {
        return Err(Error::ZeroDiagonal { row: i + 1 });
    }
    let stop = StopRule::Converge {
        eps: cfg.eps,
        max_iters: cfg.max_iters,
    };
    let (state, traces) = match cfg.variant {
        SolverVariant::Sequential => solve_sequential(sys, stop, cfg.keep_history)?,
        variant => {
            let input = JacobiInput {
                system: sys.clone(),
                stop,
                keep_history: cfg.keep_history,
            };
            let farm = FarmConfig::new(cfg.workers, backend.clone());
            if variant == SolverVariant::JacobiM {
                run_farm::<JacobiM<T>>(&input, &farm)?
            } else {
                run_farm::<JacobiMR<T>>(&input, &farm)?
            }
        }
    };
    if let Some(iteration) = state.diverged_at {
        return Err(Error::Divergence { iteration });
    }
    let residual_norm = sys.residual_norm(&state.x)?;
    Ok(SolveResult {
        residual_norm,
        iterations: state.iterations,
        converged: state.converged,
        x: state.x,
        iteration_times: traces,
        history: state.history,
    })
}

fn solve_sequential<T: Scalar>(
    sys: &LinearSystem<T>,
    stop: StopRule<T>,
    keep_history: bool,
) -> Result<(JacobiState<T>, Vec<IterationTrace>)> {
    let op = build_operator(sys)?;
    let mut state = JacobiState::new(op.d().to_vec(), stop, keep_history);
    let mut traces = Vec::new();
    loop {
        let start = Instant::now();
        let next = jacobi_step_reference(&op, &state.x)?;
        let worked = Instant::now();
        let done = state.advance(next)?;
        let end = Instant::now();
        traces.push(IterationTrace {
            iteration: traces.len(),
            t_send: 0.0,
            t_work: (worked - start).as_secs_f64(),
            t_receive: 0.0,
            t_process: (end - worked).as_secs_f64(),
            wall: (end - start).as_secs_f64(),
        });
        if done {
            return Ok((state, traces));
        }
    }
}
