use bsf_core::cost_model::{
    efficiency_m, efficiency_mr, jacobi_m_costs, jacobi_mr_costs, predict_curve, scalability_bound_m,
    scalability_bound_mr, speedup_m, speedup_mr, BsfMCosts, BsfMRCosts, MachineConstants, Variant,
};
use bsf_core::jacobi::{
    build_operator, diag_dominance_check, fx_m, fx_mr, gen_dd_system, jacobi_step_reference, stop_check, vector_oplus,
};
use bsf_core::list_ops::{
    map_list, par_map, par_map_reduce, partition, reduce_list, try_par_map, SequentialExecutor, ThreadExecutor,
};
use bsf_core::runtime::wire::{read_frame, write_frame, Frame, Wire};
use proptest::prelude::*;

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

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Integer `K` maximizing `speedup` over `1..=k_max`; ties go low.
fn integer_argmax(k_max: usize, speedup: impl Fn(usize) -> f64) -> usize {
    (1..=k_max).fold((1, f64::MIN), |(bk, bs), k| {
        let s = speedup(k);
        if s > bs {
            (k, s)
        } else {
            (bk, bs)
        }
    })
    .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn m_identities(c in m_costs()) {
        prop_assert_eq!(speedup_m(&c.with_workers(1)).unwrap(), 1.0);
        prop_assert_eq!(efficiency_m(&c.with_workers(1)).unwrap(), 1.0);
        let a = speedup_m(&c).unwrap();
        let e = efficiency_m(&c).unwrap();
        prop_assert!(rel(e, a / c.workers as f64) <= 1e-12);
        prop_assert!(a > 0.0 && a <= c.workers as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn mr_identities(c in mr_costs()) {
        prop_assert_eq!(speedup_mr(&c.with_workers(1)).unwrap(), 1.0);
        prop_assert_eq!(efficiency_mr(&c.with_workers(1)).unwrap(), 1.0);
        let a = speedup_mr(&c).unwrap();
        let e = efficiency_mr(&c).unwrap();
        prop_assert!(rel(e, a / c.workers as f64) <= 1e-12);
    }

    #[test]
    fn single_precision_unit_speedup(c in m_costs()) {
        let c32 = BsfMCosts {
            workers: 1,
            latency: c.latency as f32,
            send: c.send as f32,
            work: c.work as f32,
            receive: c.receive as f32,
            process: c.process as f32,
        };
        prop_assert_eq!(speedup_m(&c32).unwrap(), 1.0f32);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn m_argmax_near_bound(c in m_costs(), bound in 2.0f64..150.0) {
        let c = BsfMCosts { work: bound * bound * (2.0 * c.latency + c.send), ..c };
        let p = scalability_bound_m(&c).unwrap();
        let k = integer_argmax((4.0 * p).ceil() as usize, |k| speedup_m(&c.with_workers(k)).unwrap());
        prop_assert!((k as f64 - p).abs() <= 1.0, "argmax {} bound {}", k, p);
    }

    #[test]
    fn mr_argmax_near_bound(c in mr_costs(), bound in 2.0f64..150.0) {
        let den = 2.0 * c.latency + c.send + c.result_send + c.compose;
        let extra = c.reduce_len as f64 * c.compose;
        let work = bound * bound * den - extra;
        prop_assume!(work > 0.0);
        let c = BsfMRCosts { work, ..c };
        let p = scalability_bound_mr(&c).unwrap();
        let k = integer_argmax((4.0 * p).ceil() as usize, |k| speedup_mr(&c.with_workers(k)).unwrap());
        prop_assert!((k as f64 - p).abs() <= 1.0, "argmax {} bound {}", k, p);
    }

    #[test]
    fn jacobi_curves_peak_near_bound(n in 200usize..20_000, lat in -6.0f64..-3.0) {
        let mc = MachineConstants::new(10f64.powf(lat), 2.9e-8, 1.9e-7).unwrap();
        for variant in [Variant::M, Variant::MR] {
            let probe = predict_curve(variant, n, 1, &mc).unwrap();
            let p = probe.scalability_bound;
            prop_assume!(p >= 2.0);
            let k_max = ((4.0 * p).ceil() as usize).min(n);
            let curve = predict_curve(variant, n, k_max, &mc).unwrap();
            let k = bsf_core::cost_model::optimal_workers(&curve).unwrap();
            prop_assert!((k as f64 - p).abs() <= 1.0, "{} n={}: argmax {} bound {}", variant, n, k, p);
        }
    }

    #[test]
    fn jacobi_costs_valid(n in 1usize..5000, k in 1usize..64) {
        let mc = MachineConstants::<f64>::paper_tornado();
        prop_assert!(jacobi_m_costs(n, k, &mc).unwrap().validate().is_ok());
        if k <= n {
            prop_assert!(jacobi_mr_costs(n, k, &mc).unwrap().validate().is_ok());
        } else {
            prop_assert!(jacobi_mr_costs(n, k, &mc).is_err());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn partition_laws(total in 0usize..5000, parts in 1usize..64) {
        let plan = partition(total, parts).unwrap();
        let lens = plan.lengths();
        prop_assert_eq!(lens.len(), parts);
        prop_assert_eq!(lens.iter().sum::<usize>(), total);
        let (lo, hi) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert!(lens.windows(2).all(|w| w[0] >= w[1]));
        let mut next = 0;
        for r in plan.ranges() {
            prop_assert_eq!(r.start, next);
            next = r.end;
        }
        prop_assert_eq!(next, total);
    }

    #[test]
    fn par_map_matches_map(xs in prop::collection::vec(-1e6f64..1e6, 0..1000), parts in 1usize..9) {
        let f = |x: &f64| x.sin() * 3.0 + x / 7.0;
        let expect: Vec<u64> = map_list(f, &xs).iter().map(|v| v.to_bits()).collect();
        let seq: Vec<u64> = par_map(f, &xs, parts, &SequentialExecutor).unwrap().iter().map(|v| v.to_bits()).collect();
        let thr: Vec<u64> = par_map(f, &xs, parts, &ThreadExecutor).unwrap().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(&seq, &expect);
        prop_assert_eq!(&thr, &expect);
    }

    #[test]
    fn integer_map_reduce_exact(xs in prop::collection::vec(-1_000_000i64..1_000_000, 0..1000), parts in 1usize..9) {
        let f = |x: &i64| x * 3 - 1;
        let op = |acc: i64, b: &i64| acc + b;
        let expect = reduce_list(op, 0, &map_list(f, &xs));
        prop_assert_eq!(par_map_reduce(f, op, 0, &xs, parts, &ThreadExecutor).unwrap(), expect);
        prop_assert_eq!(par_map_reduce(f, op, 0, &xs, parts, &SequentialExecutor).unwrap(), expect);
    }

    #[test]
    fn vector_map_reduce_close(
        dim in 1usize..=64,
        len in 0usize..1000,
        seed in any::<u64>(),
        parts in 1usize..9,
    ) {
        // Positive entries, so relative error is bounded by the summation length.
        let xs: Vec<Vec<f64>> = (0..len)
            .map(|i| (0..dim).map(|j| 0.5 + ((seed ^ (i * 131 + j) as u64) % 1000) as f64 / 700.0).collect())
            .collect();
        let f = |v: &Vec<f64>| v.iter().map(|x| x * 1.5 + 0.25).collect::<Vec<f64>>();
        let op = |acc: Vec<f64>, b: &Vec<f64>| vector_oplus(&acc, b).unwrap();
        let zero = vec![0.0; dim];
        let expect = reduce_list(op, zero.clone(), &map_list(f, &xs));
        let got = par_map_reduce(f, op, zero, &xs, parts, &ThreadExecutor).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn first_failure_is_reported(len in 1usize..400, bad in 0usize..400, parts in 1usize..9) {
        let bad = bad % len;
        let xs: Vec<usize> = (0..len).collect();
        let r = try_par_map(|&x| if x >= bad { Err(x) } else { Ok(x) }, &xs, parts, &SequentialExecutor).unwrap();
        prop_assert_eq!(r.unwrap_err().index, bad);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn jacobi_kernels_agree(n in 1usize..40, seed in any::<u64>()) {
        let sys = gen_dd_system::<f64>(n, seed).unwrap().system;
        let report = diag_dominance_check(&sys);
        prop_assert!(report.dominant && report.all_strict());
        let op = build_operator(&sys).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let step = jacobi_step_reference(&op, &x).unwrap();
        for i in 1..=n {
            prop_assert_eq!(fx_m(&op, &x, i).unwrap(), step[i - 1]);
        }
        let mut acc = vec![0.0; n];
        for j in 1..=n {
            acc = vector_oplus(&acc, &fx_mr(&op, &x, j).unwrap()).unwrap();
        }
        let composed = vector_oplus(&acc, op.d()).unwrap();
        for (a, b) in composed.iter().zip(&step) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        }
        prop_assert!(stop_check(&x, &x, 1e-300).unwrap());
    }

    #[test]
    fn frames_round_trip(
        iteration in any::<u64>(),
        worker in any::<u32>(),
        xs in prop::collection::vec(any::<f64>(), 0..200),
        workers in any::<u32>(),
    ) {
        let vec_bytes = xs.to_bytes();
        for frame in [
            Frame::Init { workers, input: vec_bytes.clone() },
            Frame::Order { iteration, order: vec_bytes.clone() },
            Frame::Partial { iteration, worker, partial: vec_bytes.clone() },
            Frame::Stop,
        ] {
            let mut buf = Vec::new();
            write_frame(&mut buf, &frame).unwrap();
            let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
            prop_assert_eq!(len + 5, buf.len());
            prop_assert_eq!(buf[4], frame.tag());
            let back = read_frame(&mut buf.as_slice()).unwrap().unwrap();
            prop_assert_eq!(back, frame);
        }
        let back = Vec::<f64>::from_bytes(&vec_bytes).unwrap();
        prop_assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
