//! Acceptance suite. Runs every criterion and prints one result line each.
//! Exits non-zero on any failure other than a documented known deviation.

use std::io::{Read, Write as _};
use std::net::{TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use bsf_cli::formats;
use bsf_core::cost_model::{
    efficiency_m, efficiency_mr, jacobi_m_scalability_bound, jacobi_mr_scalability_bound, optimal_workers,
    predict_curve, scalability_bound_m, scalability_bound_mr, speedup_m, speedup_mr, BsfMCosts, BsfMRCosts,
    MachineConstants,
};
use bsf_core::jacobi::{
    build_operator, diag_dominance_check, gen_dd_system, gen_paper_system, jacobi_step_reference, paper_system_rhs,
    paper_system_row, solve, vector_oplus, JacobiInput, JacobiM, JacobiMR, SolveConfig, SolverVariant, StopRule,
};
use bsf_core::list_ops::{map_list, par_map, par_map_reduce, reduce_list, ThreadExecutor};
use bsf_core::runtime::wire::{read_frame, read_handshake, write_frame, write_handshake, Frame, Wire};
use bsf_core::runtime::{run_farm, Backend, FarmConfig, FarmPlugin, MultiProcessConfig, WorkerLauncher};
use bsf_core::LinearSystem;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

enum Outcome {
    Pass(String),
    NotApplicable(String),
    /// The stated tolerance is missed for a documented numerical reason,
    /// and a stricter diagnostic bound still holds.
    KnownDeviation(String),
}

type Check = std::result::Result<Outcome, String>;

/// Number, name, time budget in seconds, check.
type Criterion = (u32, &'static str, u64, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn sample<S: Strategy>(s: &S, r: &mut TestRunner) -> S::Value {
    s.new_tree(r).unwrap().current()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Log-uniform time in `[1e-9, 1e-1]` seconds.
fn time() -> impl Strategy<Value = f64> {
    (-9.0f64..-1.0).prop_map(|e| 10f64.powf(e))
}

fn m_costs() -> impl Strategy<Value = BsfMCosts<f64>> {
    (1usize..2000, time(), time(), time(), time(), time()).prop_map(|(workers, latency, send, work, receive, process)| {
        BsfMCosts {
            workers,
            latency,
            send,
            work,
            receive,
            process,
        }
    })
}

fn mr_costs() -> impl Strategy<Value = BsfMRCosts<f64>> {
    (1usize..2000, time(), time(), time(), time(), time(), time(), 1usize..20_000).prop_map(
        |(workers, latency, send, work, process, result_send, compose, reduce_len)| BsfMRCosts {
            workers,
            latency,
            send,
            work,
            process,
            result_send,
            compose,
            reduce_len,
        },
    )
}

fn criterion_1() -> Check {
    let cases = 1000;
    let mut r = runner(cases);
    let (ms, mrs) = (m_costs(), mr_costs());
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c = sample(&ms, &mut r);
        let one = c.with_workers(1);
        ensure!(speedup_m(&one).unwrap() == 1.0, "BSF-M a(1) != 1 for {one:?}");
        ensure!(efficiency_m(&one).unwrap() == 1.0, "BSF-M e(1) != 1 for {one:?}");
        let d = rel(efficiency_m(&c).unwrap(), speedup_m(&c).unwrap() / c.workers as f64);
        ensure!(d <= 1e-12, "BSF-M e != a/K by {d:e} for {c:?}");
        worst = worst.max(d);

        let c = sample(&mrs, &mut r);
        let one = c.with_workers(1);
        ensure!(speedup_mr(&one).unwrap() == 1.0, "BSF-MR a(1) != 1 for {one:?}");
        ensure!(efficiency_mr(&one).unwrap() == 1.0, "BSF-MR e(1) != 1 for {one:?}");
        let d = rel(efficiency_mr(&c).unwrap(), speedup_mr(&c).unwrap() / c.workers as f64);
        ensure!(d <= 1e-12, "BSF-MR e != a/K by {d:e} for {c:?}");
        worst = worst.max(d);
    }
    Ok(Outcome::Pass(format!(
        "{cases} BSF-M + {cases} BSF-MR sets, a(1) = 1 exactly, worst |e - a/K| rel {worst:.1e}"
    )))
}

/// Integer `K` maximizing `speedup` over `1..=k_max`; ties go low.
fn integer_argmax(k_max: usize, speedup: impl Fn(usize) -> f64) -> usize {
    let mut best = (1, f64::MIN);
    for k in 1..=k_max {
        let s = speedup(k);
        if s > best.1 {
            best = (k, s);
        }
    }
    best.0
}

fn criterion_2() -> Check {
    let wanted = 150;
    let mut r = runner(wanted);
    let (ms, mrs) = (m_costs(), mr_costs());
    let (mut m_done, mut mr_done, mut drawn) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while m_done < wanted || mr_done < wanted {
        drawn += 1;
        if m_done < wanted {
            let c = sample(&ms, &mut r);
            let p = scalability_bound_m(&c).unwrap();
            if p >= 2.0 {
                let k = integer_argmax((4.0 * p).ceil() as usize, |k| speedup_m(&c.with_workers(k)).unwrap());
                let d = (k as f64 - p).abs();
                ensure!(d <= 1.0, "BSF-M argmax {k} vs bound {p} for {c:?}");
                worst = worst.max(d);
                m_done += 1;
            }
        }
        if mr_done < wanted {
            let c = sample(&mrs, &mut r);
            let p = scalability_bound_mr(&c).unwrap();
            if p >= 2.0 {
                let k = integer_argmax((4.0 * p).ceil() as usize, |k| speedup_mr(&c.with_workers(k)).unwrap());
                let d = (k as f64 - p).abs();
                ensure!(d <= 1.0, "BSF-MR argmax {k} vs bound {p} for {c:?}");
                worst = worst.max(d);
                mr_done += 1;
            }
        }
    }
    Ok(Outcome::Pass(format!(
        "{wanted} BSF-M + {wanted} BSF-MR sets with bound >= 2 ({drawn} draws), worst |argmax - bound| {worst:.3}"
    )))
}

/// Jacobi-M scalability bounds under the preset constants, recomputed
/// independently and frozen.
const ORACLE_BOUND_M_1500: f64 = 20.354;
const ORACLE_BOUND_M_10000: f64 = 54.8195;

fn sqrt_spread(bound: impl Fn(usize) -> f64) -> f64 {
    let ratios: Vec<f64> = [1500usize, 5000, 10000, 16000]
        .iter()
        .map(|&n| bound(n) / (n as f64).sqrt())
        .collect();
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    hi / lo - 1.0
}

fn criterion_3() -> Check {
    let mc = MachineConstants::paper_tornado();
    ensure!(
        (mc.latency, mc.tau_op, mc.tau_tr) == (1.5e-5, 2.9e-8, 1.9e-7),
        "preset constants are {mc:?}"
    );
    let b1500 = jacobi_m_scalability_bound(1500, &mc).unwrap();
    let b10000 = jacobi_m_scalability_bound(10000, &mc).unwrap();
    ensure!(rel(b1500, ORACLE_BOUND_M_1500) < 0.01, "bound(1500) = {b1500}");
    ensure!(rel(b10000, ORACLE_BOUND_M_10000) < 0.01, "bound(10000) = {b10000}");
    let best = optimal_workers(&predict_curve(bsf_core::cost_model::Variant::M, 1500, 64, &mc).unwrap()).unwrap();
    ensure!(best == 20 || best == 21, "integer optimum at n=1500 is {best}");
    let m_spread = sqrt_spread(|n| jacobi_m_scalability_bound(n, &mc).unwrap());
    let mr_spread = sqrt_spread(|n| jacobi_mr_scalability_bound(n, &mc).unwrap());
    ensure!(m_spread < 0.25, "Jacobi-M bound/sqrt(n) varies by {m_spread:.3}");
    ensure!(mr_spread < 0.25, "Jacobi-MR bound/sqrt(n) varies by {mr_spread:.3}");
    Ok(Outcome::Pass(format!(
        "bound(1500) = {b1500:.4}, bound(10000) = {b10000:.4}, optimum K = {best}, \
         bound/sqrt(n) spread M {:.2}% MR {:.2}%",
        100.0 * m_spread,
        100.0 * mr_spread
    )))
}

fn criterion_4() -> Check {
    let cases = 150;
    let mut r = runner(cases);
    let parts_s = 1usize..=8;
    let reals = prop::collection::vec(-1e6f64..1e6, 0..=1000);
    let ints = prop::collection::vec(-1_000_000i64..1_000_000, 0..=1000);
    let exec = ThreadExecutor;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let parts = sample(&parts_s, &mut r);
        let xs = sample(&reals, &mut r);
        let f = |x: &f64| x.sin() * 3.0 + x / 7.0;
        let got = par_map(f, &xs, parts, &exec).unwrap();
        ensure!(bits(&got) == bits(&map_list(f, &xs)), "par_map differs (len {}, parts {parts})", xs.len());

        let ys = sample(&ints, &mut r);
        let g = |x: &i64| x * 3 - 1;
        let op = |acc: i64, b: &i64| acc + b;
        let expect = reduce_list(op, 0, &map_list(g, &ys));
        let got = par_map_reduce(g, op, 0, &ys, parts, &exec).unwrap();
        ensure!(got == expect, "integer par_map_reduce {got} != {expect}");

        // Positive entries keep every coordinate sum away from cancellation.
        let dim = sample(&(1usize..=64), &mut r);
        let vecs = sample(&prop::collection::vec(prop::collection::vec(0.5f64..2.0, dim), 0..=1000), &mut r);
        let h = |v: &Vec<f64>| v.iter().map(|x| x * 1.5 + 0.25).collect::<Vec<f64>>();
        let vop = |acc: Vec<f64>, b: &Vec<f64>| vector_oplus(&acc, b).unwrap();
        let expect = reduce_list(vop, vec![0.0; dim], &map_list(h, &vecs));
        let got = par_map_reduce(h, vop, vec![0.0; dim], &vecs, parts, &exec).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            let d = rel(*a, *b);
            ensure!(d <= 1e-12, "vector par_map_reduce off by {d:e} (dim {dim}, parts {parts})");
            worst = worst.max(d);
        }
    }
    Ok(Outcome::Pass(format!(
        "{cases} cases per law, par_map bit-exact, integer reduce exact, vector reduce worst rel {worst:.1e}"
    )))
}

/// Rounding bound for two differently ordered sums of the same `n + 1`
/// terms, relative to the sum of their magnitudes.
fn reorder_bound(n: usize) -> f64 {
    2.0 * (n as f64 + 1.0) * f64::EPSILON
}

fn criterion_5() -> Check {
    let iters = 20;
    let (mut checked, mut misses) = (0usize, 0usize);
    let (mut worst, mut worst_scaled, mut worst_miss_x) = (0f64, 0f64, 0f64);
    for seed in 0..50u64 {
        let n = 8 + (seed as usize * 53) % 193;
        let sys = gen_dd_system::<f64>(n, seed).unwrap().system;
        let report = diag_dominance_check(&sys);
        ensure!(report.dominant && report.all_strict(), "seed {seed}: system is not strictly dominant");
        let op = build_operator(&sys).unwrap();
        let mut x = op.d().to_vec();
        let mut reference = Vec::with_capacity(iters);
        let mut scales = Vec::with_capacity(iters);
        for _ in 0..iters {
            scales.push(
                (0..n)
                    .map(|i| op.d()[i].abs() + op.c_row(i).iter().zip(&x).map(|(c, v)| (c * v).abs()).sum::<f64>())
                    .collect::<Vec<f64>>(),
            );
            x = jacobi_step_reference(&op, &x).unwrap();
            reference.push(x.clone());
        }
        let input = JacobiInput {
            system: sys,
            stop: StopRule::Fixed { iters },
            keep_history: true,
        };
        for k in [1, 2, 4, 8] {
            let cfg = FarmConfig::new(k, Backend::InProcess);
            let m = run_farm::<JacobiM<f64>>(&input, &cfg).map_err(|e| e.to_string())?.0;
            let mr = run_farm::<JacobiMR<f64>>(&input, &cfg).map_err(|e| e.to_string())?.0;
            ensure!(m.history.len() == iters && mr.history.len() == iters, "seed {seed} K={k}: missing iterates");
            for (it, want) in reference.iter().enumerate() {
                ensure!(bits(&m.history[it]) == bits(want), "Jacobi-M seed {seed} n={n} K={k} iterate {it} differs");
                for (i, (a, b)) in mr.history[it].iter().zip(want).enumerate() {
                    let d = rel(*a, *b);
                    let scaled = (a - b).abs() / scales[it][i];
                    ensure!(
                        scaled <= reorder_bound(n),
                        "Jacobi-MR seed {seed} n={n} K={k} iterate {it}: difference {scaled:e} of the term magnitudes"
                    );
                    if d > 1e-12 {
                        misses += 1;
                        worst_miss_x = worst_miss_x.max(b.abs());
                    }
                    worst = worst.max(d);
                    worst_scaled = worst_scaled.max(scaled);
                    checked += 1;
                }
            }
        }
    }
    let summary = format!(
        "50 systems x K in {{1,2,4,8}} x {iters} iterates, Jacobi-M bit-exact; \
         Jacobi-MR worst rel {worst:.1e} over {checked} coordinates, worst difference {worst_scaled:.1e} of term magnitudes"
    );
    if misses == 0 {
        return Ok(Outcome::Pass(summary));
    }
    Ok(Outcome::KnownDeviation(format!(
        "{misses} Jacobi-MR coordinates exceed 1e-12 relative, all with |x_i| <= {worst_miss_x:.1e} \
         (cancellation) and within the reordering bound; {summary}"
    )))
}

fn criterion_6() -> Check {
    let demo = LinearSystem::new(2, vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 4.0]).unwrap();
    let mut demo_iters = 0;
    for (variant, workers) in [
        (SolverVariant::Sequential, 1),
        (SolverVariant::JacobiM, 1),
        (SolverVariant::JacobiMR, 1),
        (SolverVariant::JacobiM, 2),
    ] {
        let cfg = SolveConfig {
            eps: 1e-12,
            variant,
            workers,
            ..SolveConfig::default()
        };
        let r = solve(&demo, &cfg, &Backend::InProcess).map_err(|e| e.to_string())?;
        ensure!(r.converged && r.iterations <= 80, "{variant} K={workers}: {} iterations", r.iterations);
        for v in &r.x {
            ensure!((v - 1.0).abs() <= 1e-6, "{variant} K={workers}: x = {:?}", r.x);
        }
        demo_iters = demo_iters.max(r.iterations);
    }
    let mut worst: f64 = 0.0;
    for (n, seed) in [(1usize, 1u64), (10, 2), (50, 3), (120, 4), (250, 5), (400, 6), (500, 7)] {
        let sys = gen_dd_system::<f64>(n, seed).unwrap().system;
        let b_norm = sys.rhs().iter().map(|v| v * v).sum::<f64>().sqrt();
        for (variant, workers) in [(SolverVariant::JacobiM, 4), (SolverVariant::JacobiMR, 3)] {
            let cfg = SolveConfig {
                eps: 1e-20,
                variant,
                workers: workers.min(n),
                ..SolveConfig::default()
            };
            let r = solve(&sys, &cfg, &Backend::InProcess).map_err(|e| e.to_string())?;
            let ratio = r.residual_norm / b_norm;
            ensure!(r.converged, "{variant} n={n}: not converged after {}", r.iterations);
            ensure!(ratio <= 1e-6, "{variant} n={n}: residual ratio {ratio:e}");
            worst = worst.max(ratio);
        }
    }
    Ok(Outcome::Pass(format!(
        "demo reaches (1,1) in <= {demo_iters} iterations, random systems n <= 500 worst ||Ax-b||/||b|| {worst:.1e}"
    )))
}

fn criterion_7() -> Check {
    for n in [3usize, 1500] {
        let sys = gen_paper_system::<i64>(n).unwrap();
        for i in 0..n {
            let sum: i64 = sys.row(i).iter().sum();
            ensure!(sum == sys.rhs()[i], "n={n} row {}: A*1 = {sum}, b = {}", i + 1, sys.rhs()[i]);
        }
    }
    let n = 16000;
    let mut row = Vec::with_capacity(n);
    for i in 1..=n {
        paper_system_row::<i64>(n, i, &mut row);
        let sum: i64 = row.iter().sum();
        let b = paper_system_rhs::<i64>(n, i);
        ensure!(sum == b, "n={n} row {i}: A*1 = {sum}, b = {b}");
    }
    let sizes = [4usize, 5, 6, 9, 64, 1500];
    for n in sizes {
        let report = diag_dominance_check(&gen_paper_system::<f64>(n).unwrap());
        let failing = report.failing_rows();
        ensure!(failing == (1..=n - 2).collect::<Vec<_>>(), "n={n}: non-dominant rows {failing:?}");
    }
    Ok(Outcome::Pass(format!(
        "A*1 = b exactly for n in {{3, 1500, 16000}}, rows 1..n-2 non-dominant for n in {sizes:?}"
    )))
}

fn bsf_binary() -> WorkerLauncher {
    WorkerLauncher::Command {
        program: env!("CARGO_BIN_EXE_bsf").into(),
        args: vec!["worker".into()],
    }
}

fn multi_process(launcher: WorkerLauncher) -> Backend {
    Backend::MultiProcess(MultiProcessConfig {
        timeout: Duration::from_secs(20),
        launcher,
        ..MultiProcessConfig::default()
    })
}

fn backend_runs<P>(input: &P::Input, k: usize) -> std::result::Result<Vec<(String, P::State)>, String>
where
    P: FarmPlugin,
{
    let backends = [
        ("sequential", Backend::Sequential),
        ("in-process", Backend::InProcess),
        ("socket threads", multi_process(WorkerLauncher::Threads)),
        ("worker processes", multi_process(bsf_binary())),
    ];
    backends
        .into_iter()
        .map(|(name, b)| {
            run_farm::<P>(input, &FarmConfig::new(k, b))
                .map(|(state, _)| (name.to_string(), state))
                .map_err(|e| format!("{name}: {e}"))
        })
        .collect()
}

fn expected_bytes(frame: &Frame) -> Vec<u8> {
    let (tag, payload) = match frame {
        Frame::Init { workers, input } => (1u8, [&workers.to_le_bytes()[..], input].concat()),
        Frame::Order { iteration, order } => (2, [&iteration.to_le_bytes()[..], order].concat()),
        Frame::Partial { iteration, worker, partial } => {
            (3, [&iteration.to_le_bytes()[..], &worker.to_le_bytes(), partial].concat())
        }
        Frame::Stop => (4, Vec::new()),
    };
    [&(payload.len() as u32).to_le_bytes()[..], &[tag], &payload].concat()
}

fn criterion_8() -> Check {
    let k = 4;
    let fixed = JacobiInput {
        system: gen_dd_system::<f64>(120, 21).unwrap().system,
        stop: StopRule::Fixed { iters: 15 },
        keep_history: false,
    };
    let converging = JacobiInput {
        stop: StopRule::Converge {
            eps: 1e-18,
            max_iters: 500,
        },
        ..fixed.clone()
    };
    let mut runs = 0;
    for input in [&fixed, &converging] {
        let m = backend_runs::<JacobiM<f64>>(input, k)?;
        let mr = backend_runs::<JacobiMR<f64>>(input, k)?;
        for (variant, states) in [
            ("Jacobi-M", m.iter().map(|(n, s)| (n, &s.x, s.iterations)).collect::<Vec<_>>()),
            ("Jacobi-MR", mr.iter().map(|(n, s)| (n, &s.x, s.iterations)).collect::<Vec<_>>()),
        ] {
            let (_, x0, it0) = states[0];
            for (name, x, it) in &states[1..] {
                ensure!(bits(x) == bits(x0) && *it == it0, "{variant}: {name} differs from sequential");
                runs += 1;
            }
        }
    }

    let frames = vec![
        Frame::Init {
            workers: 3,
            input: fixed.to_bytes(),
        },
        Frame::Order {
            iteration: 7,
            order: vec![0.5f64, -0.0, 1e300].to_bytes(),
        },
        Frame::Partial {
            iteration: 7,
            worker: 2,
            partial: vec![f64::MIN_POSITIVE, 3.0].to_bytes(),
        },
        Frame::Stop,
    ];
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let sent = frames.clone();
    let writer = thread::spawn(move || -> std::io::Result<()> {
        let mut s = TcpStream::connect(addr)?;
        write_handshake(&mut s, 2)?;
        for f in &sent {
            write_frame(&mut s, f)?;
        }
        s.flush()
    });
    let (mut conn, _) = listener.accept().map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    conn.read_to_end(&mut raw).map_err(|e| e.to_string())?;
    writer.join().unwrap().map_err(|e| e.to_string())?;

    let mut want = 2u32.to_le_bytes().to_vec();
    for f in &frames {
        want.extend(expected_bytes(f));
    }
    ensure!(raw == want, "wire bytes differ from the length-prefixed layout");
    let mut cursor = raw.as_slice();
    ensure!(read_handshake(&mut cursor).map_err(|e| e.to_string())? == 2, "handshake index");
    for f in &frames {
        let back = read_frame(&mut cursor).map_err(|e| e.to_string())?;
        ensure!(back.as_ref() == Some(f), "tag {} did not round-trip", f.tag());
    }
    ensure!(read_frame(&mut cursor).map_err(|e| e.to_string())?.is_none(), "trailing bytes after STOP");
    Ok(Outcome::Pass(format!(
        "{runs} backend runs bit-identical to sequential at K={k}, {} frame tags round-trip over loopback ({} bytes)",
        frames.len(),
        raw.len()
    )))
}

fn bsf(args: &[&str]) -> std::result::Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = bsf_cli::run(std::iter::once("bsf").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        return Err(format!("bsf {} exited {code}: {}", args.join(" "), String::from_utf8_lossy(&err)));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn criterion_9() -> Check {
    let threads = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let cal = dir.path().join("calibration.toml");
    let obs = dir.path().join("observations.csv");
    let report = dir.path().join("report.csv");
    bsf(&["calibrate", "--output", path_str(&cal)])?;
    let summary = bsf(&[
        "compare", "--variant", "m", "--n", "5000", "--workers", "1,2,4", "--iters", "50",
        "--backend", "in-process", "--calibration", path_str(&cal),
        "--output", path_str(&report), "--observations-output", path_str(&obs),
    ])?;
    let joined = formats::parse_report(&std::fs::read_to_string(&report).map_err(|e| e.to_string())?, "report")
        .map_err(|e| e.to_string())?;
    ensure!(joined.rows.len() == 3, "report has {} rows", joined.rows.len());
    let records = formats::read_observations(&obs).map_err(|e| e.to_string())?;
    let speedups: Vec<f64> = records.iter().map(|r| r.speedup).collect();
    let shown = speedups.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ");
    let detail = format!(
        "observed speedup at K = 1, 2, 4: {shown}; report joined ({})",
        summary.trim().trim_start_matches("# ")
    );
    if threads < 4 {
        return Ok(Outcome::NotApplicable(format!("{threads} hardware thread(s), needs 4; {detail}")));
    }
    ensure!(
        speedups.windows(2).all(|w| w[1] > w[0]),
        "observed speedup not strictly increasing: {detail}"
    );
    Ok(Outcome::Pass(detail))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "cost-model identities", 1, criterion_1),
        (2, "argmax vs closed-form bound", 5, criterion_2),
        (3, "preset-constant predictions", 1, criterion_3),
        (4, "list-operation equivalence", 10, criterion_4),
        (5, "Jacobi farm equivalence", 60, criterion_5),
        (6, "convergence", 30, criterion_6),
        (7, "test-system identity", 5, criterion_7),
        (8, "backend equivalence and wire protocol", 30, criterion_8),
        (9, "desk-scale sweep shape", 300, criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let (mut failed, mut known) = (0, 0);
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match result {
            Ok(_) if secs >= limit as f64 => {
                failed += 1;
                ("FAIL", format!("took {secs:.2}s, over the {limit}s budget"))
            }
            Ok(Outcome::Pass(d)) => ("PASS", d),
            Ok(Outcome::NotApplicable(d)) => ("N/A ", d),
            Ok(Outcome::KnownDeviation(d)) => {
                known += 1;
                ("FAIL", format!("known deviation: {d}"))
            }
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} {status} {name} [{secs:.2}s / {limit}s]: {detail}");
    }
    if known > 0 {
        println!("{known} criterion(s) failed with a documented known deviation");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("no unexpected failures");
        ExitCode::SUCCESS
    }
}
