use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{self, Frame, Wire};
use super::{master_loop, FarmOutcome, FarmPlugin, MultiProcessConfig, Round, RoundTiming, WorkerLauncher};
use crate::error::{Error, Result};
use crate::list_ops::partition;

/// Worker side of the protocol: connect, identify, receive INIT, then answer
/// every ORDER with a PARTIAL until STOP arrives.
pub fn serve_worker<P: FarmPlugin>(addr: SocketAddr, index: u32) -> Result<()> {
    let stream = connect_with_retry(addr, Duration::from_secs(10))?;
    stream.set_nodelay(true).ok();
    let mut reader = BufReader::new(
        stream
            .try_clone()
            .map_err(|e| Error::transport("cloning worker socket", e))?,
    );
    let mut writer = BufWriter::new(stream);
    wire::write_handshake(&mut writer, index).map_err(|e| Error::transport("sending handshake", e))?;

    let (workers, input) = match wire::read_frame(&mut reader)? {
        Some(Frame::Init { workers, input }) => (workers, input),
        Some(other) => {
            return Err(Error::Protocol(format!(
                "expected INIT, got tag {:#04x}",
                other.tag()
            )))
        }
        None => return Err(Error::Protocol("master closed before INIT".into())),
    };
    if index >= workers {
        return Err(Error::Protocol(format!(
            "worker index {index} out of range for {workers} workers"
        )));
    }
    let plugin = P::init(&P::Input::from_bytes(&input)?)?;
    drop(input);
    let range = partition(plugin.list_len(), workers as usize)?.range(index as usize);

    loop {
        match wire::read_frame(&mut reader)? {
            Some(Frame::Order { iteration, order }) => {
                let order = P::Order::from_bytes(&order)?;
                let partial = plugin.process_order(&order, range.clone())?;
                let frame = Frame::Partial {
                    iteration,
                    worker: index,
                    partial: partial.to_bytes(),
                };
                wire::write_frame(&mut writer, &frame)
                    .map_err(|e| Error::transport("sending partial", e))?;
            }
            Some(Frame::Stop) => return Ok(()),
            Some(other) => {
                return Err(Error::Protocol(format!(
                    "unexpected tag {:#04x} on worker",
                    other.tag()
                )))
            }
            None => return Err(Error::Protocol("master closed the connection".into())),
        }
    }
}

fn connect_with_retry(addr: SocketAddr, patience: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + patience;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline && e.kind() == ErrorKind::ConnectionRefused => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(Error::transport(format!("connecting to master at {addr}"), e)),
        }
    }
}

/// Workers started for one run; reaped when dropped.
struct Launched {
    threads: Vec<JoinHandle<Result<()>>>,
    children: Vec<Child>,
}

impl Launched {
    fn start<P: FarmPlugin>(launcher: &WorkerLauncher, addr: SocketAddr, workers: usize) -> Result<Self> {
        let mut launched = Launched {
            threads: Vec::new(),
            children: Vec::new(),
        };
        match launcher {
            WorkerLauncher::Threads => {
                for i in 0..workers as u32 {
                    launched
                        .threads
                        .push(thread::spawn(move || serve_worker::<P>(addr, i)));
                }
            }
            WorkerLauncher::Command { program, args } => {
                for i in 0..workers {
                    let child = Command::new(program)
                        .args(args)
                        .arg("--plugin")
                        .arg(P::NAME)
                        .arg("--connect")
                        .arg(addr.to_string())
                        .arg("--index")
                        .arg(i.to_string())
                        .stdin(Stdio::null())
                        .spawn()
                        .map_err(|e| {
                            Error::transport(format!("spawning worker {i} ({})", program.display()), e)
                        })?;
                    launched.children.push(child);
                }
            }
            WorkerLauncher::External => {}
        }
        Ok(launched)
    }

    /// Fails fast when a spawned process died before connecting.
    fn check_alive(&mut self) -> Result<()> {
        for (i, c) in self.children.iter_mut().enumerate() {
            if let Ok(Some(status)) = c.try_wait() {
                return Err(Error::Worker {
                    index: i,
                    message: format!("worker process exited early ({status})"),
                });
            }
        }
        Ok(())
    }

    fn finish(mut self, grace: Duration) -> Result<()> {
        let deadline = Instant::now() + grace;
        for (i, mut c) in std::mem::take(&mut self.children).into_iter().enumerate() {
            loop {
                match c.try_wait() {
                    Ok(Some(status)) if status.success() => break,
                    Ok(Some(status)) => {
                        return Err(Error::Worker {
                            index: i,
                            message: format!("worker process exited with {status}"),
                        })
                    }
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        c.kill().ok();
                        c.wait().ok();
                        break;
                    }
                }
            }
        }
        for (i, t) in std::mem::take(&mut self.threads).into_iter().enumerate() {
            match t.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => {
                    return Err(Error::Worker {
                        index: i,
                        message: e.to_string(),
                    })
                }
                Err(_) => {
                    return Err(Error::Worker {
                        index: i,
                        message: "worker thread panicked".into(),
                    })
                }
            }
        }
        Ok(())
    }
}

impl Drop for Launched {
    fn drop(&mut self) {
        for c in &mut self.children {
            if matches!(c.try_wait(), Ok(None)) {
                c.kill().ok();
            }
            c.wait().ok();
        }
        // Threads exit on their own once the master's sockets are closed.
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

type Incoming = (usize, Result<Option<Frame>>);

struct Connections {
    writers: Vec<BufWriter<TcpStream>>,
    incoming: mpsc::Receiver<Incoming>,
    readers: Vec<JoinHandle<()>>,
    timeout: Duration,
}

impl Connections {
    fn accept(
        listener: &TcpListener,
        workers: usize,
        timeout: Duration,
        launched: &mut Launched,
    ) -> Result<Self> {
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::transport("configuring listener", e))?;
        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..workers).map(|_| None).collect();
        let mut connected = 0;
        while connected < workers {
            match listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false)
                        .and_then(|_| s.set_read_timeout(Some(timeout)))
                        .map_err(|e| Error::transport("configuring worker socket", e))?;
                    s.set_nodelay(true).ok();
                    let idx = wire::read_handshake(&mut s)? as usize;
                    if idx >= workers {
                        return Err(Error::Protocol(format!(
                            "handshake from worker {idx}, only {workers} expected"
                        )));
                    }
                    if streams[idx].is_some() {
                        return Err(Error::Protocol(format!("worker index {idx} connected twice")));
                    }
                    s.set_read_timeout(None)
                        .map_err(|e| Error::transport("configuring worker socket", e))?;
                    streams[idx] = Some(s);
                    connected += 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    launched.check_alive()?;
                    if Instant::now() >= deadline {
                        return Err(Error::Timeout {
                            what: format!("{} of {workers} workers to connect", workers - connected),
                            secs: timeout.as_secs_f64(),
                        });
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(Error::transport("accepting worker connection", e)),
            }
        }

        let (tx, incoming) = mpsc::channel();
        let mut writers = Vec::with_capacity(workers);
        let mut readers = Vec::with_capacity(workers);
        for (idx, s) in streams.into_iter().enumerate() {
            let s = s.expect("all workers connected");
            let read_half = s
                .try_clone()
                .map_err(|e| Error::transport("cloning worker socket", e))?;
            let tx = tx.clone();
            readers.push(thread::spawn(move || {
                let mut r = BufReader::new(read_half);
                loop {
                    let frame = wire::read_frame(&mut r);
                    let end = !matches!(frame, Ok(Some(_)));
                    if tx.send((idx, frame)).is_err() || end {
                        break;
                    }
                }
            }));
            writers.push(BufWriter::new(s));
        }
        Ok(Connections {
            writers,
            incoming,
            readers,
            timeout,
        })
    }

    fn broadcast(&mut self, bytes: &[u8]) -> Result<()> {
        for (i, w) in self.writers.iter_mut().enumerate() {
            w.write_all(bytes)
                .and_then(|_| w.flush())
                .map_err(|e| Error::transport(format!("sending to worker {i}"), e))?;
        }
        Ok(())
    }

    fn recv(&self) -> Result<(usize, Frame)> {
        match self.incoming.recv_timeout(self.timeout) {
            Ok((idx, Ok(Some(frame)))) => Ok((idx, frame)),
            Ok((idx, Ok(None))) => Err(Error::Worker {
                index: idx,
                message: "connection closed".into(),
            }),
            Ok((idx, Err(e))) => Err(Error::Worker {
                index: idx,
                message: e.to_string(),
            }),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(Error::Timeout {
                what: "partial results".into(),
                secs: self.timeout.as_secs_f64(),
            }),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Protocol("all worker connections closed".into()))
            }
        }
    }

    fn close(mut self) {
        for w in &mut self.writers {
            w.flush().ok();
            w.get_ref().shutdown(std::net::Shutdown::Both).ok();
        }
        self.writers.clear();
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
    }
}

struct SocketRound<P: FarmPlugin> {
    conns: Connections,
    _plugin: std::marker::PhantomData<fn() -> P>,
}

impl<P: FarmPlugin> Round<P> for SocketRound<P> {
    fn round(&mut self, iteration: usize, order: &P::Order) -> Result<(Vec<P::Partial>, RoundTiming)> {
        let k = self.conns.writers.len();
        let start = Instant::now();
        let frame = Frame::Order {
            iteration: iteration as u64,
            order: order.to_bytes(),
        }
        .to_bytes()?;
        self.conns.broadcast(&frame)?;
        let sent = Instant::now();

        let mut raw: Vec<Option<Vec<u8>>> = (0..k).map(|_| None).collect();
        let mut first = None;
        for _ in 0..k {
            let (idx, frame) = self.conns.recv()?;
            first.get_or_insert_with(Instant::now);
            match frame {
                Frame::Partial {
                    iteration: it,
                    worker,
                    partial,
                } => {
                    if it != iteration as u64 {
                        return Err(Error::Protocol(format!(
                            "worker {idx} answered iteration {it} during iteration {iteration}"
                        )));
                    }
                    if worker as usize != idx {
                        return Err(Error::Protocol(format!(
                            "connection {idx} sent a partial labelled worker {worker}"
                        )));
                    }
                    if raw[idx].replace(partial).is_some() {
                        return Err(Error::Protocol(format!("duplicate partial from worker {idx}")));
                    }
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "unexpected tag {:#04x} from worker {idx}",
                        other.tag()
                    )))
                }
            }
        }
        let partials = raw
            .into_iter()
            .map(|b| P::Partial::from_bytes(&b.expect("one partial per worker")))
            .collect::<Result<Vec<_>>>()?;
        let done = Instant::now();
        let first = first.unwrap_or(sent);
        Ok((
            partials,
            RoundTiming {
                send: sent - start,
                work: first - sent,
                receive: done - first,
            },
        ))
    }
}

pub(super) fn run<P: FarmPlugin>(
    input: &P::Input,
    workers: usize,
    cfg: &MultiProcessConfig,
) -> Result<FarmOutcome<P::State>> {
    let listener =
        TcpListener::bind(cfg.listen).map_err(|e| Error::transport(format!("binding {}", cfg.listen), e))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::transport("reading listen address", e))?;
    let mut launched = Launched::start::<P>(&cfg.launcher, addr, workers)?;
    let mut conns = Connections::accept(&listener, workers, cfg.timeout, &mut launched)?;
    drop(listener);

    let init = Frame::Init {
        workers: workers as u32,
        input: input.to_bytes(),
    }
    .to_bytes()?;
    conns.broadcast(&init)?;
    drop(init);

    let plugin = P::init(input)?;
    let mut round = SocketRound::<P> {
        conns,
        _plugin: std::marker::PhantomData,
    };
    let outcome = master_loop(&plugin, &mut round);
    let mut conns = round.conns;
    if outcome.is_ok() {
        conns.broadcast(&Frame::Stop.to_bytes()?)?;
    }
    conns.close();
    let outcome = outcome?;
    launched.finish(cfg.timeout)?;
    Ok(outcome)
}
