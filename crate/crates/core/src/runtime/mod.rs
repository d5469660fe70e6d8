//! Master–worker farm runtime.
//!
//! One master and `K` workers repeat four macro-steps per iteration: the
//! master builds one order and sends the same order to every worker, each
//! worker processes its contiguous slice of the list, the master waits for
//! all `K` partial results (the barrier), then evaluates them and decides
//! whether to stop.
//!
//! Three backends run the same [`FarmPlugin`]:
//!
//! * [`Backend::Sequential`] runs the workers one after another on the
//!   calling thread.
//! * [`Backend::InProcess`] runs `K` threads sharing the read-only plugin.
//! * [`Backend::MultiProcess`] talks to `K` workers over TCP using the frame
//!   protocol in [`wire`].

use std::net::SocketAddr;
use std::ops::Range;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::list_ops::{partition, SublistPartition};

mod multi_process;
pub mod wire;

pub use multi_process::serve_worker;
use wire::Wire;

/// User code plugged into the farm.
///
/// `process_order` must depend only on the order, the assigned range and the
/// data built by `init`; workers never talk to each other.
pub trait FarmPlugin: Sized + Sync {
    /// Name passed to `--plugin` when workers run as separate processes.
    const NAME: &'static str;

    /// Problem data every node starts from.
    type Input: Wire;
    type Order: Wire + Clone + Send;
    type Partial: Wire + Send;
    /// Master-only iteration state.
    type State;

    /// Per-node setup from the shared input.
    fn init(input: &Self::Input) -> Result<Self>;

    /// Length of the list the workers split between themselves.
    fn list_len(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn make_order(&self, state: &Self::State) -> Self::Order;

    fn process_order(&self, order: &Self::Order, range: Range<usize>) -> Result<Self::Partial>;

    /// Consumes the `K` partials in worker order; returns `true` to stop.
    fn evaluate(&self, partials: Vec<Self::Partial>, state: &mut Self::State) -> Result<bool>;
}

/// How multi-process workers get started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerLauncher {
    /// Worker threads in this process, connected through loopback TCP.
    Threads,
    /// Spawn `program args.. --plugin NAME --connect ADDR --index I` per worker.
    Command { program: PathBuf, args: Vec<String> },
    /// Workers are started by someone else and connect to the listen address.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiProcessConfig {
    pub listen: SocketAddr,
    /// Receive timeout for handshakes and partial results.
    pub timeout: Duration,
    pub launcher: WorkerLauncher,
}

impl Default for MultiProcessConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            timeout: Duration::from_secs(30),
            launcher: WorkerLauncher::Threads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Backend {
    Sequential,
    #[default]
    InProcess,
    MultiProcess(MultiProcessConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FarmConfig {
    pub workers: usize,
    pub backend: Backend,
}

impl FarmConfig {
    pub fn new(workers: usize, backend: Backend) -> Self {
        Self { workers, backend }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers < 1 {
            return Err(Error::domain("a farm needs at least one worker"));
        }
        Ok(())
    }
}

/// Wall-clock split of one iteration, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Building the order and handing it to every worker.
    pub t_send: f64,
    /// Processing time of the fastest worker. In-process workers time
    /// themselves; over sockets this is the wait for the first partial, and
    /// the sequential backend reports all processing here.
    pub t_work: f64,
    /// Remainder of the barrier wait after `t_work`, decoding included.
    pub t_receive: f64,
    /// Evaluation and stop check on the master.
    pub t_process: f64,
    /// Whole iteration.
    pub wall: f64,
}

/// Component averages over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationAverages {
    pub t_send: f64,
    pub t_work: f64,
    pub t_receive: f64,
    pub t_process: f64,
    pub wall: f64,
    /// Number of traces averaged.
    pub samples: usize,
}

/// Mean of every trace component, leaving out the first (warm-up)
/// iteration when there is more than one.
pub fn measure_iteration(traces: &[IterationTrace]) -> Result<IterationAverages> {
    let used = match traces {
        [] => return Err(Error::Empty("no iteration traces")),
        [only] => std::slice::from_ref(only),
        [_, rest @ ..] => rest,
    };
    let n = used.len() as f64;
    let mean = |f: fn(&IterationTrace) -> f64| used.iter().map(f).sum::<f64>() / n;
    Ok(IterationAverages {
        t_send: mean(|t| t.t_send),
        t_work: mean(|t| t.t_work),
        t_receive: mean(|t| t.t_receive),
        t_process: mean(|t| t.t_process),
        wall: mean(|t| t.wall),
        samples: used.len(),
    })
}

/// Final master state and one trace per completed iteration.
pub type FarmOutcome<S> = (S, Vec<IterationTrace>);

/// Runs the plugin to completion on the configured backend.
pub fn run_farm<P: FarmPlugin>(input: &P::Input, cfg: &FarmConfig) -> Result<FarmOutcome<P::State>> {
    cfg.validate()?;
    match &cfg.backend {
        Backend::Sequential => {
            let plugin = P::init(input)?;
            let plan = partition(plugin.list_len(), cfg.workers)?;
            master_loop(
                &plugin,
                &mut SequentialRound {
                    plugin: &plugin,
                    plan: &plan,
                },
            )
        }
        Backend::InProcess => {
            let plugin = P::init(input)?;
            run_in_process(&plugin, cfg.workers)
        }
        Backend::MultiProcess(mp) => multi_process::run::<P>(input, cfg.workers, mp),
    }
}

pub(crate) struct RoundTiming {
    send: Duration,
    work: Duration,
    receive: Duration,
}

/// One scatter/gather exchange with the workers.
pub(crate) trait Round<P: FarmPlugin> {
    fn round(&mut self, iteration: usize, order: &P::Order) -> Result<(Vec<P::Partial>, RoundTiming)>;
}

pub(crate) fn master_loop<P: FarmPlugin, R: Round<P>>(
    plugin: &P,
    round: &mut R,
) -> Result<FarmOutcome<P::State>> {
    let mut state = plugin.initial_state();
    let mut traces = Vec::new();
    for iteration in 0.. {
        let start = Instant::now();
        let order = plugin.make_order(&state);
        let make = start.elapsed();
        let (partials, timing) = round.round(iteration, &order)?;
        let eval_start = Instant::now();
        let stop = plugin.evaluate(partials, &mut state)?;
        let t_process = eval_start.elapsed();
        traces.push(IterationTrace {
            iteration,
            t_send: (make + timing.send).as_secs_f64(),
            t_work: timing.work.as_secs_f64(),
            t_receive: timing.receive.as_secs_f64(),
            t_process: t_process.as_secs_f64(),
            wall: start.elapsed().as_secs_f64(),
        });
        if stop {
            break;
        }
    }
    Ok((state, traces))
}

struct SequentialRound<'a, P> {
    plugin: &'a P,
    plan: &'a SublistPartition,
}

impl<P: FarmPlugin> Round<P> for SequentialRound<'_, P> {
    fn round(&mut self, _iteration: usize, order: &P::Order) -> Result<(Vec<P::Partial>, RoundTiming)> {
        let start = Instant::now();
        let partials = self
            .plan
            .ranges()
            .enumerate()
            .map(|(w, range)| process_guarded(self.plugin, w, order, range))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            partials,
            RoundTiming {
                send: Duration::ZERO,
                work: start.elapsed(),
                receive: Duration::ZERO,
            },
        ))
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".to_string())
}

fn process_guarded<P: FarmPlugin>(
    plugin: &P,
    worker: usize,
    order: &P::Order,
    range: Range<usize>,
) -> Result<P::Partial> {
    match panic::catch_unwind(AssertUnwindSafe(|| plugin.process_order(order, range))) {
        Ok(Ok(p)) => Ok(p),
        Ok(Err(e)) => Err(Error::Worker {
            index: worker,
            message: e.to_string(),
        }),
        Err(p) => Err(Error::Worker {
            index: worker,
            message: panic_message(p),
        }),
    }
}

/// Worker index, its result and how long `process_order` took.
type WorkerReply<T> = (usize, Result<T>, Duration);

fn run_in_process<P: FarmPlugin>(plugin: &P, workers: usize) -> Result<FarmOutcome<P::State>> {
    let plan = partition(plugin.list_len(), workers)?;
    thread::scope(|s| {
        let (reply_tx, reply_rx) = mpsc::channel::<WorkerReply<P::Partial>>();
        let mut order_txs = Vec::with_capacity(workers);
        for w in 0..workers {
            let (tx, rx) = mpsc::channel::<P::Order>();
            let reply_tx = reply_tx.clone();
            let range = plan.range(w);
            s.spawn(move || {
                for order in rx {
                    let start = Instant::now();
                    let r = process_guarded(plugin, w, &order, range.clone());
                    if reply_tx.send((w, r, start.elapsed())).is_err() {
                        break;
                    }
                }
            });
            order_txs.push(tx);
        }
        drop(reply_tx);
        let mut round = InProcessRound::<P> {
            order_txs,
            reply_rx,
        };
        master_loop(plugin, &mut round)
        // dropping `round` closes the order channels and lets workers exit
    })
}

struct InProcessRound<P: FarmPlugin> {
    order_txs: Vec<mpsc::Sender<P::Order>>,
    reply_rx: mpsc::Receiver<WorkerReply<P::Partial>>,
}

impl<P: FarmPlugin> Round<P> for InProcessRound<P> {
    fn round(&mut self, _iteration: usize, order: &P::Order) -> Result<(Vec<P::Partial>, RoundTiming)> {
        let k = self.order_txs.len();
        let start = Instant::now();
        for (w, tx) in self.order_txs.iter().enumerate() {
            tx.send(order.clone()).map_err(|_| Error::Worker {
                index: w,
                message: "worker thread exited".into(),
            })?;
        }
        let sent = Instant::now();
        let mut slots: Vec<Option<P::Partial>> = (0..k).map(|_| None).collect();
        let mut fastest = Duration::MAX;
        for _ in 0..k {
            let (w, r, took) = self.reply_rx.recv().map_err(|_| Error::Worker {
                index: 0,
                message: "all worker threads exited".into(),
            })?;
            fastest = fastest.min(took);
            slots[w] = Some(r?);
        }
        let waited = sent.elapsed();
        let work = fastest.min(waited);
        let partials = slots.into_iter().map(|p| p.expect("one reply per worker")).collect();
        Ok((
            partials,
            RoundTiming {
                send: sent - start,
                work,
                receive: waited - work,
            },
        ))
    }
}
