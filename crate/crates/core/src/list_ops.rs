//! Map and Reduce over lists, plus their partitioned parallel forms.
//!
//! `par_map` splits the list into contiguous sublists and maps each one in
//! its own execution slot, then concatenates. `par_map_reduce` folds every
//! mapped sublist left to right from the identity and then folds the partial
//! results in ascending part order, so for a fixed part count the result is
//! deterministic even for floating-point operations.

use std::convert::Infallible;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use crate::error::{Error, Result};

/// Contiguous split of `[0, total)` into `parts` sublists.
///
/// The first `total % parts` sublists carry one extra element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SublistPartition {
    pub total: usize,
    pub parts: usize,
    /// `(start, length)` per part, in order.
    pub boundaries: Vec<(usize, usize)>,
}

impl SublistPartition {
    pub fn range(&self, part: usize) -> Range<usize> {
        let (start, len) = self.boundaries[part];
        start..start + len
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.iter().map(|&(s, l)| s..s + l)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.boundaries.iter().map(|&(_, l)| l).collect()
    }
}

pub fn partition(total: usize, parts: usize) -> Result<SublistPartition> {
    if parts == 0 {
        return Err(Error::domain("cannot partition into zero parts"));
    }
    let base = total / parts;
    let extra = total % parts;
    let mut start = 0;
    let boundaries = (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let b = (start, len);
            start += len;
            b
        })
        .collect();
    Ok(SublistPartition {
        total,
        parts,
        boundaries,
    })
}

/// Runs a fixed number of independent tasks and returns their results in
/// task order.
pub trait Executor {
    fn execute<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync;
}

/// Runs tasks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialExecutor;

impl Executor for SequentialExecutor {
    fn execute<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        (0..tasks).map(f).collect()
    }
}

/// Runs every task on its own scoped OS thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThreadExecutor;

impl Executor for ThreadExecutor {
    fn execute<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        if tasks <= 1 {
            return (0..tasks).map(&f).collect();
        }
        let f = &f;
        thread::scope(|s| {
            let handles: Vec<_> = (0..tasks).map(|t| s.spawn(move || f(t))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        })
    }
}

/// Failure of the element function (or the fold operation) at `index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementError<E> {
    pub index: usize,
    pub source: E,
}

impl<E: std::fmt::Display> std::fmt::Display for ElementError<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "element {}: {}", self.index, self.source)
    }
}

impl<E: std::fmt::Debug + std::fmt::Display> std::error::Error for ElementError<E> {}

fn never<T>(r: std::result::Result<T, ElementError<Infallible>>) -> T {
    match r {
        Ok(v) => v,
        Err(e) => match e.source {},
    }
}

pub fn map_list<A, B>(f: impl Fn(&A) -> B, xs: &[A]) -> Vec<B> {
    xs.iter().map(f).collect()
}

pub fn try_map_list<A, B, E>(
    f: impl Fn(&A) -> std::result::Result<B, E>,
    xs: &[A],
) -> std::result::Result<Vec<B>, ElementError<E>> {
    xs.iter()
        .enumerate()
        .map(|(index, x)| f(x).map_err(|source| ElementError { index, source }))
        .collect()
}

/// Left-to-right fold; returns `identity` for an empty list.
pub fn reduce_list<T: Clone>(op: impl Fn(T, &T) -> T, identity: T, xs: &[T]) -> T {
    xs.iter().fold(identity, op)
}

pub fn try_reduce_list<T: Clone, E>(
    op: impl Fn(T, &T) -> std::result::Result<T, E>,
    identity: T,
    xs: &[T],
) -> std::result::Result<T, ElementError<E>> {
    xs.iter()
        .enumerate()
        .try_fold(identity, |acc, (index, x)| {
            op(acc, x).map_err(|source| ElementError { index, source })
        })
}

pub fn par_map<A, B, F, X>(f: F, xs: &[A], parts: usize, executor: &X) -> Result<Vec<B>>
where
    A: Sync,
    B: Send,
    F: Fn(&A) -> B + Sync,
    X: Executor,
{
    try_par_map(|a| Ok::<_, Infallible>(f(a)), xs, parts, executor).map(never)
}

/// Parallel Map over `parts` contiguous sublists.
///
/// The outer `Result` reports invalid arguments; the inner one carries the
/// element failure with the smallest index that was observed. A failure
/// stops the remaining sublists at their next element.
pub fn try_par_map<A, B, E, F, X>(
    f: F,
    xs: &[A],
    parts: usize,
    executor: &X,
) -> Result<std::result::Result<Vec<B>, ElementError<E>>>
where
    A: Sync,
    B: Send,
    E: Send,
    F: Fn(&A) -> std::result::Result<B, E> + Sync,
    X: Executor,
{
    let plan = partition(xs.len(), parts)?;
    let cancel = AtomicBool::new(false);
    let chunks = executor.execute(parts, |p| {
        let range = plan.range(p);
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            if cancel.load(Ordering::Relaxed) {
                return Err(None);
            }
            match f(&xs[i]) {
                Ok(b) => out.push(b),
                Err(source) => {
                    cancel.store(true, Ordering::Relaxed);
                    return Err(Some(ElementError { index: i, source }));
                }
            }
        }
        Ok(out)
    });
    Ok(collect_parts(chunks).map(|chunks| chunks.into_iter().flatten().collect()))
}

pub fn par_map_reduce<A, B, F, Op, X>(
    f: F,
    op: Op,
    identity: B,
    xs: &[A],
    parts: usize,
    executor: &X,
) -> Result<B>
where
    A: Sync,
    B: Clone + Send + Sync,
    F: Fn(&A) -> B + Sync,
    Op: Fn(B, &B) -> B + Sync,
    X: Executor,
{
    try_par_map_reduce(
        |a| Ok::<_, Infallible>(f(a)),
        |acc, b| Ok(op(acc, b)),
        identity,
        xs,
        parts,
        executor,
    )
    .map(never)
}

/// Parallel Map/Reduce composition.
///
/// Each part starts from `identity` and folds its mapped elements in list
/// order; the master then folds the partial results in part order, starting
/// again from `identity`. Errors raised while combining partials are
/// reported with the index of the first element of the offending part.
pub fn try_par_map_reduce<A, B, E, F, Op, X>(
    f: F,
    op: Op,
    identity: B,
    xs: &[A],
    parts: usize,
    executor: &X,
) -> Result<std::result::Result<B, ElementError<E>>>
where
    A: Sync,
    B: Clone + Send + Sync,
    E: Send,
    F: Fn(&A) -> std::result::Result<B, E> + Sync,
    Op: Fn(B, &B) -> std::result::Result<B, E> + Sync,
    X: Executor,
{
    let plan = partition(xs.len(), parts)?;
    let cancel = AtomicBool::new(false);
    let partials = executor.execute(parts, |p| {
        let mut acc = identity.clone();
        for i in plan.range(p) {
            if cancel.load(Ordering::Relaxed) {
                return Err(None);
            }
            let step = f(&xs[i]).and_then(|b| op(acc, &b));
            match step {
                Ok(next) => acc = next,
                Err(source) => {
                    cancel.store(true, Ordering::Relaxed);
                    return Err(Some(ElementError { index: i, source }));
                }
            }
        }
        Ok(acc)
    });
    let partials = match collect_parts(partials) {
        Ok(p) => p,
        Err(e) => return Ok(Err(e)),
    };
    let mut total = identity;
    for (p, b) in partials.iter().enumerate() {
        match op(total, b) {
            Ok(next) => total = next,
            Err(source) => {
                return Ok(Err(ElementError {
                    index: plan.boundaries[p].0,
                    source,
                }))
            }
        }
    }
    Ok(Ok(total))
}

type PartOutcome<R, E> = std::result::Result<R, Option<ElementError<E>>>;

fn collect_parts<R, E>(outcomes: Vec<PartOutcome<R, E>>) -> std::result::Result<Vec<R>, ElementError<E>> {
    let mut values = Vec::with_capacity(outcomes.len());
    let mut first: Option<ElementError<E>> = None;
    let mut cancelled = false;
    for o in outcomes {
        match o {
            Ok(v) => values.push(v),
            Err(Some(e)) => {
                if first.as_ref().is_none_or(|f| e.index < f.index) {
                    first = Some(e);
                }
            }
            Err(None) => cancelled = true,
        }
    }
    match first {
        Some(e) => Err(e),
        None => {
            debug_assert!(!cancelled, "cancellation without a recorded failure");
            Ok(values)
        }
    }
}
