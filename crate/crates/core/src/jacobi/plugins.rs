use std::ops::Range;

use super::{build_operator, stop_check, IterationOperator, LinearSystem};
use crate::error::{Error, Result};
use crate::runtime::wire::{encode_slice, read_f64, read_u64, Wire};
use crate::runtime::FarmPlugin;
use crate::scalar::Scalar;

/// When the master stops iterating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// Stop once the squared step norm drops below `eps`, or after
    /// `max_iters` iterations. Non-finite iterates stop the run.
    Converge { eps: T, max_iters: usize },
    /// Run exactly `iters` iterations, ignoring convergence and overflow.
    Fixed { iters: usize },
}

/// Shared input of both Jacobi plugins.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiInput<T> {
    pub system: LinearSystem<T>,
    pub stop: StopRule<T>,
    /// Keep every iterate in [`JacobiState::history`].
    pub keep_history: bool,
}

impl<T: Scalar> Wire for JacobiInput<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.system.n() as u64).encode(out);
        encode_slice(self.system.matrix(), out);
        encode_slice(self.system.rhs(), out);
        match self.stop {
            StopRule::Converge { eps, max_iters } => {
                0u64.encode(out);
                eps.to_f64_lossless().encode(out);
                (max_iters as u64).encode(out);
            }
            StopRule::Fixed { iters } => {
                1u64.encode(out);
                0f64.encode(out);
                (iters as u64).encode(out);
            }
        }
        u64::from(self.keep_history).encode(out);
    }

    fn decode(buf: &mut &[u8]) -> Result<Self> {
        let n = read_u64(buf)? as usize;
        let a = Vec::<T>::decode(buf)?;
        let b = Vec::<T>::decode(buf)?;
        let system = LinearSystem::new(n, a, b)?;
        let kind = read_u64(buf)?;
        let eps = read_f64(buf)?;
        let count = read_u64(buf)? as usize;
        let stop = match kind {
            0 => StopRule::Converge {
                eps: T::from_f64_lossy(eps),
                max_iters: count,
            },
            1 => StopRule::Fixed { iters: count },
            k => return Err(Error::Protocol(format!("unknown stop rule {k}"))),
        };
        let keep_history = read_u64(buf)? != 0;
        Ok(Self {
            system,
            stop,
            keep_history,
        })
    }
}

/// Master state of a Jacobi run.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiState<T> {
    /// Current approximation.
    pub x: Vec<T>,
    /// Completed iterations.
    pub iterations: usize,
    pub converged: bool,
    /// Iteration at which a non-finite coordinate first appeared.
    pub diverged_at: Option<usize>,
    /// Iterates `x⁽¹⁾, x⁽²⁾, …` when history is kept.
    pub history: Vec<Vec<T>>,
    stop: StopRule<T>,
    keep_history: bool,
}

impl<T: Scalar> JacobiState<T> {
    pub(crate) fn new(x0: Vec<T>, stop: StopRule<T>, keep_history: bool) -> Self {
        Self {
            x: x0,
            iterations: 0,
            converged: false,
            diverged_at: None,
            history: Vec::new(),
            stop,
            keep_history,
        }
    }

    /// Installs the next iterate and applies the stop rule.
    pub(crate) fn advance(&mut self, next: Vec<T>) -> Result<bool> {
        self.iterations += 1;
        if self.diverged_at.is_none() && next.iter().any(|v| !v.is_finite()) {
            self.diverged_at = Some(self.iterations);
        }
        if self.keep_history {
            self.history.push(next.clone());
        }
        let stop = match self.stop {
            StopRule::Converge { eps, max_iters } => {
                if self.diverged_at.is_some() {
                    true
                } else {
                    self.converged = stop_check(&next, &self.x, eps)?;
                    self.converged || self.iterations >= max_iters
                }
            }
            StopRule::Fixed { iters } => self.iterations >= iters,
        };
        self.x = next;
        Ok(stop)
    }
}

fn check_order<T>(n: usize, x: &[T]) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

/// Row decomposition: worker `w` computes the coordinates of its rows.
#[derive(Debug)]
pub struct JacobiM<T> {
    op: IterationOperator<T>,
    stop: StopRule<T>,
    keep_history: bool,
}

impl<T: Scalar> JacobiM<T> {
    pub fn operator(&self) -> &IterationOperator<T> {
        &self.op
    }
}

impl<T: Scalar> FarmPlugin for JacobiM<T> {
    const NAME: &'static str = "jacobi-m";

    type Input = JacobiInput<T>;
    type Order = Vec<T>;
    type Partial = Vec<T>;
    type State = JacobiState<T>;

    fn init(input: &Self::Input) -> Result<Self> {
        Ok(Self {
            op: build_operator(&input.system)?,
            stop: input.stop,
            keep_history: input.keep_history,
        })
    }

    fn list_len(&self) -> usize {
        self.op.n()
    }

    fn initial_state(&self) -> Self::State {
        JacobiState::new(self.op.d().to_vec(), self.stop, self.keep_history)
    }

    fn make_order(&self, state: &Self::State) -> Vec<T> {
        state.x.clone()
    }

    fn process_order(&self, x: &Vec<T>, range: Range<usize>) -> Result<Vec<T>> {
        check_order(self.op.n(), x)?;
        Ok(range.map(|i| self.op.row_value(i, x)).collect())
    }

    fn evaluate(&self, partials: Vec<Vec<T>>, state: &mut Self::State) -> Result<bool> {
        let next: Vec<T> = partials.into_iter().flatten().collect();
        check_order(self.op.n(), &next)?;
        state.advance(next)
    }
}

/// Column decomposition: worker `w` folds `x_j·C[:, j]` over its columns,
/// the master sums the `K` partial vectors and adds `d`.
#[derive(Debug)]
pub struct JacobiMR<T> {
    n: usize,
    /// `C` column-major.
    columns: Vec<T>,
    d: Vec<T>,
    stop: StopRule<T>,
    keep_history: bool,
}

impl<T: Scalar> FarmPlugin for JacobiMR<T> {
    const NAME: &'static str = "jacobi-mr";

    type Input = JacobiInput<T>;
    type Order = Vec<T>;
    type Partial = Vec<T>;
    type State = JacobiState<T>;

    fn init(input: &Self::Input) -> Result<Self> {
        let op = build_operator(&input.system)?;
        Ok(Self {
            n: op.n(),
            columns: op.columns(),
            d: op.d().to_vec(),
            stop: input.stop,
            keep_history: input.keep_history,
        })
    }

    fn list_len(&self) -> usize {
        self.n
    }

    fn initial_state(&self) -> Self::State {
        JacobiState::new(self.d.clone(), self.stop, self.keep_history)
    }

    fn make_order(&self, state: &Self::State) -> Vec<T> {
        state.x.clone()
    }

    fn process_order(&self, x: &Vec<T>, range: Range<usize>) -> Result<Vec<T>> {
        check_order(self.n, x)?;
        let n = self.n;
        let mut acc = vec![T::zero(); n];
        for j in range {
            let xj = x[j];
            let col = &self.columns[j * n..(j + 1) * n];
            for (a, &c) in acc.iter_mut().zip(col) {
                *a = *a + xj * c;
            }
        }
        Ok(acc)
    }

    fn evaluate(&self, partials: Vec<Vec<T>>, state: &mut Self::State) -> Result<bool> {
        let mut total = vec![T::zero(); self.n];
        for p in &partials {
            check_order(self.n, p)?;
            for (t, &v) in total.iter_mut().zip(p) {
                *t = *t + v;
            }
        }
        for (t, &d) in total.iter_mut().zip(&self.d) {
            *t = *t + d;
        }
        state.advance(total)
    }
}
