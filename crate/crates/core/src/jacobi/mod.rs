//! Jacobi iteration for dense linear systems `Ax = b`.
//!
//! The system is rewritten as `x = Cx + d` with `c_ij = -a_ij / a_ii`
//! (`j != i`), `c_ii = 0` and `d_i = b_i / a_ii`, and iterated from
//! `x⁽⁰⁾ = d` until `‖x⁽ᵏ⁺¹⁾ − x⁽ᵏ⁾‖² < ε`.
//!
//! [`jacobi_step_reference`] is the sequential step every parallel form is
//! checked against. The farm plugins in [`plugins`] implement the
//! row-oriented (Map) and column-oriented (Map/Reduce) decompositions.

use num_traits::{Num, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod plugins;
mod solve;

pub use plugins::{JacobiInput, JacobiM, JacobiMR, JacobiState, StopRule};
pub use solve::{solve, SolveConfig, SolveResult, SolverVariant, DEFAULT_EPS, DEFAULT_MAX_ITERS};

/// Dense system `Ax = b` with `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T> {
    n: usize,
    a: Vec<T>,
    b: Vec<T>,
}

impl<T> LinearSystem<T> {
    pub fn new(n: usize, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: a.len(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        Ok(Self { n, a, b })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `i` of `A`, 0-based.
    pub fn row(&self, i: usize) -> &[T] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn matrix(&self) -> &[T] {
        &self.a
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    pub fn into_parts(self) -> (usize, Vec<T>, Vec<T>) {
        (self.n, self.a, self.b)
    }
}

impl<T: Scalar> LinearSystem<T> {
    pub fn mat_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.n, x.len())?;
        Ok((0..self.n).map(|i| dot(self.row(i), x)).collect())
    }

    /// `‖Ax − b‖₂`.
    pub fn residual_norm(&self, x: &[T]) -> Result<T> {
        let ax = self.mat_vec(x)?;
        Ok(ax
            .iter()
            .zip(&self.b)
            .fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q))
            .sqrt())
    }
}

/// `C` and `d` of the fixed-point form `x = Cx + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOperator<T> {
    n: usize,
    c: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> IterationOperator<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    pub fn c_row(&self, i: usize) -> &[T] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    /// `d_i + Σ_j c_ij·x_j` for a 0-based row; the sum runs over `j` in
    /// ascending order starting from zero and `d_i` is added last.
    #[inline]
    pub(crate) fn row_value(&self, i: usize, x: &[T]) -> T {
        self.d[i] + dot(self.c_row(i), x)
    }

    /// `C` laid out column by column, for the Map/Reduce decomposition.
    pub(crate) fn columns(&self) -> Vec<T> {
        let n = self.n;
        let mut t = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = self.c[i * n + j];
            }
        }
        t
    }
}

#[inline]
fn dot<T: Scalar>(row: &[T], x: &[T]) -> T {
    row.iter().zip(x).fold(T::zero(), |acc, (&c, &v)| acc + c * v)
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub fn build_operator<T: Scalar>(sys: &LinearSystem<T>) -> Result<IterationOperator<T>> {
    let n = sys.n;
    let mut c = vec![T::zero(); n * n];
    let mut d = vec![T::zero(); n];
    for i in 0..n {
        let row = sys.row(i);
        let diag = row[i];
        if diag == T::zero() {
            return Err(Error::ZeroDiagonal { row: i + 1 });
        }
        let out = &mut c[i * n..(i + 1) * n];
        for (j, (o, &a)) in out.iter_mut().zip(row).enumerate() {
            if j != i {
                *o = -a / diag;
            }
        }
        d[i] = sys.b[i] / diag;
    }
    Ok(IterationOperator { n, c, d })
}

/// `Cx + d`, row by row.
pub fn jacobi_step_reference<T: Scalar>(op: &IterationOperator<T>, x: &[T]) -> Result<Vec<T>> {
    check_len(op.n, x.len())?;
    Ok((0..op.n).map(|i| op.row_value(i, x)).collect())
}

/// The `i`-th coordinate (1-based) of the next approximation.
pub fn fx_m<T: Scalar>(op: &IterationOperator<T>, x: &[T], i: usize) -> Result<T> {
    check_len(op.n, x.len())?;
    if i < 1 || i > op.n {
        return Err(Error::IndexOutOfRange { index: i, len: op.n });
    }
    Ok(op.row_value(i - 1, x))
}

/// Column `j` (1-based) of `C` scaled by `x_j`.
pub fn fx_mr<T: Scalar>(op: &IterationOperator<T>, x: &[T], j: usize) -> Result<Vec<T>> {
    check_len(op.n, x.len())?;
    if j < 1 || j > op.n {
        return Err(Error::IndexOutOfRange { index: j, len: op.n });
    }
    let xj = x[j - 1];
    Ok((0..op.n).map(|i| xj * op.c[i * op.n + j - 1]).collect())
}

/// Elementwise sum; the zero vector is its identity.
pub fn vector_oplus<T: Scalar>(u: &[T], v: &[T]) -> Result<Vec<T>> {
    check_len(u.len(), v.len())?;
    Ok(u.iter().zip(v).map(|(&a, &b)| a + b).collect())
}

/// `true` iff `Σ (x_new_i − x_old_i)² < eps`.
pub fn stop_check<T: Scalar>(x_new: &[T], x_old: &[T], eps: T) -> Result<bool> {
    check_len(x_old.len(), x_new.len())?;
    Ok(squared_distance(x_new, x_old) < eps)
}

pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q))
}

/// Row-wise diagonal dominance, `|a_ii| >= Σ_{j≠i} |a_ij|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub rows: Vec<RowDominance>,
    /// Some row satisfies the inequality strictly.
    pub any_strict: bool,
    /// Every row holds and at least one strictly.
    pub dominant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowDominance {
    /// 1-based.
    pub row: usize,
    pub holds: bool,
    pub strict: bool,
}

impl DominanceReport {
    pub fn failing_rows(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| !r.holds).map(|r| r.row).collect()
    }

    pub fn all_strict(&self) -> bool {
        self.rows.iter().all(|r| r.strict)
    }
}

pub fn diag_dominance_check<T: Scalar>(sys: &LinearSystem<T>) -> DominanceReport {
    let rows: Vec<RowDominance> = (0..sys.n)
        .map(|i| {
            let row = sys.row(i);
            let diag = row[i].abs();
            let off = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(T::zero(), |acc, (_, v)| acc + v.abs());
            RowDominance {
                row: i + 1,
                holds: diag >= off,
                strict: diag > off,
            }
        })
        .collect();
    let any_strict = rows.iter().any(|r| r.strict);
    let dominant = any_strict && rows.iter().all(|r| r.holds);
    DominanceReport {
        rows,
        any_strict,
        dominant,
    }
}

/// Row `i` (1-based) of the scalable test matrix: ones everywhere except
/// `a_ii = i`. Works in any numeric type, including exact integers.
pub fn paper_system_row<T: Num + FromPrimitive + Copy>(n: usize, i: usize, out: &mut Vec<T>) {
    out.clear();
    out.resize(n, T::one());
    out[i - 1] = T::from_usize(i).expect("row index representable");
}

/// `b_i = n + i − 1` (1-based).
pub fn paper_system_rhs<T: Num + FromPrimitive + Copy>(n: usize, i: usize) -> T {
    T::from_usize(n + i - 1).expect("rhs representable")
}

/// The scalable test system: `a_ij = 1` for `i != j`, `a_ii = i`,
/// `b_i = n + i − 1`, so that `A·(1,…,1) = b`.
pub fn gen_paper_system<T: Num + FromPrimitive + Copy>(n: usize) -> Result<LinearSystem<T>> {
    if n < 1 {
        return Err(Error::domain("dimension n must be at least 1"));
    }
    let mut a = Vec::with_capacity(n * n);
    let mut row = Vec::with_capacity(n);
    for i in 1..=n {
        paper_system_row(n, i, &mut row);
        a.extend_from_slice(&row);
    }
    let b = (1..=n).map(|i| paper_system_rhs(n, i)).collect();
    LinearSystem::new(n, a, b)
}

/// A random strictly diagonally dominant system and the solution it was
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSystem<T> {
    pub system: LinearSystem<T>,
    pub solution: Vec<T>,
}

/// Off-diagonals uniform in `[-1, 1]`, `a_ii = Σ_{j≠i}|a_ij| + 1`,
/// `b = A·x*` with `x*` uniform in `[-1, 1]`. Deterministic in `seed`.
pub fn gen_dd_system<T: Scalar>(n: usize, seed: u64) -> Result<DominantSystem<T>> {
    if n < 1 {
        return Err(Error::domain("dimension n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![T::zero(); n * n];
    for i in 0..n {
        let mut off = T::zero();
        for j in 0..n {
            if j != i {
                let v = T::from_f64_lossy(rng.gen_range(-1.0..=1.0));
                a[i * n + j] = v;
                off = off + v.abs();
            }
        }
        a[i * n + i] = off + T::one();
    }
    let solution: Vec<T> = (0..n)
        .map(|_| T::from_f64_lossy(rng.gen_range(-1.0..=1.0)))
        .collect();
    let b = (0..n).map(|i| dot(&a[i * n..(i + 1) * n], &solution)).collect();
    Ok(DominantSystem {
        system: LinearSystem::new(n, a, b)?,
        solution,
    })
}
