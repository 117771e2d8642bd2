use acs_core::engine::EventKind;
use acs_core::policies::{calibrate_dag_build_cost, construction_cost, run_acs_hw};
use acs_core::workloads::{critical_path_ns, cta_area_bound_ns, CtaDistribution};
use acs_core::*;
use proptest::prelude::*;

fn kernel(id: usize, ctas: u32, dur: Nanos, reads: Vec<(u64, u64)>, writes: Vec<(u64, u64)>) -> KernelSpec {
    let segs = |v: Vec<(u64, u64)>| v.into_iter().map(|(s, z)| MemSegment::new(s, z).unwrap()).collect::<SegmentList>();
    KernelSpec {
        id,
        name: format!("k{id}"),
        num_ctas: ctas,
        warps_per_cta: 1,
        cta_duration_ns: dur,
        reads: segs(reads),
        writes: segs(writes),
    }
}

fn trace(kernels: Vec<KernelSpec>) -> WorkloadTrace {
    WorkloadTrace::new(kernels, Default::default()).unwrap()
}

fn chain(n: usize, dur: Nanos) -> WorkloadTrace {
    trace(
        (0..n)
            .map(|i| {
                let reads = if i == 0 { vec![] } else { vec![((i as u64 - 1) * 100, 100)] };
                kernel(i, 1, dur, reads, vec![(i as u64 * 100, 100)])
            })
            .collect(),
    )
}

fn independent(n: usize, dur: Nanos) -> WorkloadTrace {
    trace((0..n).map(|i| kernel(i, 1, dur, vec![], vec![(i as u64 * 100, 100)])).collect())
}

fn run(kind: &PolicyKind, t: &WorkloadTrace) -> SimReport {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let r = run_policy(&PolicyRun::new(kind, t, &gpu, &o)).unwrap();
    assert!(r.legality.ok(), "{kind}: {:?}", r.legality);
    r
}

#[test]
fn serial_closed_form() {
    let t = chain(3, 1000);
    let r = run(&PolicyKind::SerialSingleStream, &t);
    assert_eq!(r.makespan_ns, 33_000);
    assert_eq!(r.dispatch_order(), vec![0, 1, 2]);
}

#[test]
fn serial_empty_trace() {
    let t = trace(vec![]);
    assert_eq!(run(&PolicyKind::SerialSingleStream, &t).makespan_ns, 0);
}

#[test]
fn dag_independent_pair() {
    let t = trace(vec![kernel(0, 1, 1000, vec![], vec![(0, 10)]), kernel(1, 1, 3000, vec![], vec![(100, 10)])]);
    let r = run(&PolicyKind::DagAheadOfTime, &t);
    let c = construction_cost(&t, &OverheadConfig::default(), DependencyMode::Full);
    assert_eq!(r.construction_ns, c);
    assert_eq!(r.dispatch(0), Some(c));
    assert_eq!(r.dispatch(1), Some(c));
    assert_eq!(r.makespan_ns, c + 3000);
}

#[test]
fn dag_chain_has_no_host_costs_between_kernels() {
    let t = chain(4, 2000);
    let r = run(&PolicyKind::DagAheadOfTime, &t);
    assert_eq!(r.makespan_ns, r.construction_ns + 4 * 2000);
}

#[test]
fn construction_cost_counts_pairwise_checks() {
    // writes are checked against every earlier segment, reads (full mode
    // only) against earlier writes: k1 = 1 + 1, k2 = 3 + 2
    let t = chain(3, 10);
    let o = OverheadConfig { dag_build_ns_per_edge_check: 10.0, cpu_dispatch_ns: 100, ..Default::default() };
    assert_eq!(policies::construction_checks(&t, DependencyMode::Full), 7);
    assert_eq!(construction_cost(&t, &o, DependencyMode::Full), 70 + 300);
    assert_eq!(policies::construction_checks(&t, DependencyMode::PaperFaithful), 1 + 3);
}

#[test]
fn graph_reuse_divides_construction() {
    let t = chain(5, 1000);
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let full = construction_cost(&t, &o, DependencyMode::Full);
    let r = run_policy(&PolicyRun::new(&PolicyKind::DagAheadOfTime, &t, &gpu, &o).with_graph_reuse(20)).unwrap();
    assert_eq!(r.construction_ns, full.div_ceil(20));
}

#[test]
fn multistream_chain_stays_on_one_stream() {
    let t = chain(3, 1000);
    let o = OverheadConfig::default();
    let r = run(&PolicyKind::MultiStreamStatic { streams: 2 }, &t);
    let syncs = r.events.iter().filter(|e| e.event_kind == EventKind::HostSync).count();
    // only the final synchronize; no cross-stream edges
    assert_eq!(syncs, 1);
    // launches overlap execution: the host is the bottleneck for 1000 ns kernels
    assert_eq!(r.makespan_ns, r.construction_ns + 3 * o.launch_ns + 1000 + o.sync_ns);
    let serial = run(&PolicyKind::SerialSingleStream, &t);
    assert!(r.makespan_ns - r.construction_ns <= serial.makespan_ns - 2 * o.sync_ns);
}

#[test]
fn multistream_independent_pair_overlaps() {
    let t = independent(2, 20_000);
    let o = OverheadConfig::default();
    let r = run(&PolicyKind::MultiStreamStatic { streams: 2 }, &t);
    let launches = r.events.iter().filter(|e| e.event_kind == EventKind::HostLaunch).count();
    assert_eq!(launches, 2);
    let c = r.construction_ns;
    assert_eq!(r.dispatch(0), Some(c + o.launch_ns));
    assert_eq!(r.dispatch(1), Some(c + 2 * o.launch_ns));
    assert_eq!(r.makespan_ns, c + 2 * o.launch_ns + 20_000 + o.sync_ns);
}

#[test]
fn sw_independent_pair_overlaps() {
    let t = independent(2, 1000);
    let o = OverheadConfig::default();
    let serial = run(&PolicyKind::SerialSingleStream, &t);
    let sw = run(&PolicyKind::AcsSw { scheduler_threads: 2, window_n: 4 }, &t);
    // launches serialize on the host, so the second kernel only saves its
    // duration and sync
    assert_eq!(sw.makespan_ns, serial.makespan_ns - (1000 + o.sync_ns));
    assert_eq!(sw.finish(0), Some(o.launch_ns + 1000));
    assert_eq!(sw.dispatch(1), Some(2 * o.launch_ns));
}

#[test]
fn sw_single_thread_degenerates_to_serial() {
    let max_check = OverheadConfig::default_depcheck_table().iter().map(|p| p.ns).max().unwrap();
    for seed in 0..10 {
        let t = generate(&GeneratorParams::irregular(60, seed)).unwrap();
        let serial = run(&PolicyKind::SerialSingleStream, &t);
        let sw = run(&PolicyKind::AcsSw { scheduler_threads: 1, window_n: 8 }, &t);
        assert_eq!(sw.dispatch_order(), (0..t.len()).collect::<Vec<_>>());
        assert!(sw.makespan_ns.abs_diff(serial.makespan_ns) <= max_check, "seed {seed}");
    }
}

#[test]
fn hw_independent_pair_has_no_syncs() {
    let t = independent(2, 50_000);
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let r = run(&PolicyKind::acs_hw(32), &t);
    assert!(r.events.iter().all(|e| e.event_kind != EventKind::HostSync && e.event_kind != EventKind::HostLaunch));
    let gap = r.dispatch(1).unwrap() - r.dispatch(0).unwrap();
    let (insert, _) = policies::hw_latencies(&gpu, &o, 32);
    let check = estimate_depcheck_cost(1, 1, &o);
    assert!(gap <= check + o.cpu_dispatch_ns + insert, "gap {gap}");
    // both run concurrently
    assert!(r.dispatch(1).unwrap() < r.finish(0).unwrap());
}

#[test]
fn hw_insertion_latency_at_64_slots() {
    let gpu = GpuConfig::rtx3060();
    let (insert, update) = policies::hw_latencies(&gpu, &OverheadConfig::default(), 64);
    assert_eq!(insert, 50);
    // 63 cycles at 1.3 GHz
    assert_eq!(update, (63f64 / 1.3).ceil() as u64);
}

#[test]
fn hw_respects_window_and_list_bounds() {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    for seed in 0..5 {
        let t = generate(&GeneratorParams::sim_engine(400, seed)).unwrap();
        for (n, m) in [(4, 4), (8, 16), (16, 64)] {
            let kind = PolicyKind::AcsHw { window_n: n, scheduled_list_m: Some(m) };
            let run = PolicyRun::new(&kind, &t, &gpu, &o);
            let r = run_acs_hw(&run, n, m).unwrap();
            assert!(r.stats.max_window_occupancy <= n);
            assert!(r.stats.max_scheduled_span <= m);
            let checked = run_policy(&run).unwrap();
            assert!(checked.legality.ok());
        }
    }
}

#[test]
fn sw_window_never_overflows() {
    for seed in 0..5 {
        let t = generate(&GeneratorParams::irregular(150, seed)).unwrap();
        let r = run(&PolicyKind::acs_sw(8), &t);
        assert!(r.stats.max_window_occupancy <= 8);
    }
}

/// Random 20-kernel DAGs of single-CTA kernels never contend for the GPU,
/// so the ahead-of-time DAG schedule is as-soon-as-possible.
#[test]
fn multistream_never_beats_dag() {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    for seed in 0..120 {
        let mut p = GeneratorParams::irregular(20, seed);
        p.ctas = CtaDistribution::Fixed { ctas: 1 };
        p.warps_per_cta = [1, 1];
        let t = generate(&p).unwrap();
        let dag = run_policy(&PolicyRun::new(&PolicyKind::DagAheadOfTime, &t, &gpu, &o)).unwrap();
        for streams in [1, 2, 4] {
            let ms = run_policy(&PolicyRun::new(&PolicyKind::MultiStreamStatic { streams }, &t, &gpu, &o)).unwrap();
            assert!(ms.legality.ok());
            assert!(ms.makespan_ns >= dag.makespan_ns, "seed {seed} streams {streams}");
        }
    }
}

#[test]
fn hw_beats_sw_on_irregular_workloads() {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let mut wins = 0;
    let seeds = 200;
    for seed in 0..seeds {
        let t = generate(&GeneratorParams::irregular(100, seed)).unwrap();
        let sw = run_policy(&PolicyRun::new(&PolicyKind::acs_sw(32), &t, &gpu, &o).without_event_log()).unwrap();
        let hw = run_policy(&PolicyRun::new(&PolicyKind::acs_hw(32), &t, &gpu, &o).without_event_log()).unwrap();
        if hw.makespan_ns <= sw.makespan_ns {
            wins += 1;
        }
    }
    assert!(wins * 100 >= seeds * 95, "HW won {wins}/{seeds}");
}

#[test]
fn every_kernel_appears_once() {
    let t = generate(&GeneratorParams::fork_join(40, 3, 9)).unwrap();
    for kind in PolicyKind::all_defaults() {
        let r = run(&kind, &t);
        let dispatches = r.events.iter().filter(|e| e.event_kind == EventKind::KernelDispatch).count();
        let finishes = r.events.iter().filter(|e| e.event_kind == EventKind::KernelFinish).count();
        assert_eq!((dispatches, finishes), (t.len(), t.len()), "{kind}");
        assert_eq!(r.legality.missing_kernels, 0);
    }
}

#[test]
fn paper_faithful_runs_flag_read_after_write_pairs() {
    // kernel 1 only reads what kernel 0 writes
    let t = trace(vec![
        kernel(0, 1, 50_000, vec![], vec![(0, 100)]),
        kernel(1, 1, 1000, vec![(0, 100)], vec![(1000, 100)]),
    ]);
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    for kind in [PolicyKind::DagAheadOfTime, PolicyKind::acs_sw(4), PolicyKind::acs_hw(4)] {
        let r = run_policy(&PolicyRun::new(&kind, &t, &gpu, &o).with_mode(DependencyMode::PaperFaithful)).unwrap();
        assert!(r.legality.ok(), "{kind}");
        assert_eq!(r.legality.full_mode_discrepancies, 1, "{kind}");
    }
}

#[test]
fn makespans_respect_lower_bounds() {
    let gpu = GpuConfig::default();
    for seed in 0..20 {
        let t = generate(&GeneratorParams::irregular(80, seed)).unwrap();
        let dag = true_dependencies(&t, DependencyMode::Full);
        let cp = critical_path_ns(&dag, &t, &gpu).unwrap();
        let area = cta_area_bound_ns(&t, &gpu);
        for kind in PolicyKind::all_defaults() {
            let r = run(&kind, &t);
            assert!(r.makespan_ns >= cp && r.makespan_ns >= area, "{kind} seed {seed}");
        }
    }
}

#[test]
fn calibration_hits_target_fraction() {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let traces: Vec<_> = (0..3).map(|s| generate(&GeneratorParams::dynamic_dnn(120, s)).unwrap()).collect();
    let per = calibrate_dag_build_cost(&traces, &gpu, &o, DependencyMode::Full, 0.47).unwrap();
    let tuned = OverheadConfig { dag_build_ns_per_edge_check: per, ..o.clone() };
    let mut serial = 0u64;
    let mut built = 0u64;
    for t in &traces {
        serial += run(&PolicyKind::SerialSingleStream, t).makespan_ns;
        built += construction_cost(t, &tuned, DependencyMode::Full);
    }
    let frac = built as f64 / serial as f64;
    assert!((frac - 0.47).abs() < 0.001, "{frac}");
}

fn scaled_trace(t: &WorkloadTrace, f: u64) -> WorkloadTrace {
    let mut s = t.clone();
    for k in &mut s.kernels {
        k.cta_duration_ns *= f;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Speedups survive scaling every duration, overhead and cycle time.
    /// The cost table here has integer slopes so interpolation stays exact.
    #[test]
    fn speedups_are_scale_invariant(seed in 0u64..1000, f in prop_oneof![Just(2u64), Just(4), Just(8)]) {
        let t = generate(&GeneratorParams::irregular(40, seed)).unwrap();
        let gpu = GpuConfig { clock_ghz: 1.0, ..GpuConfig::default() };
        let mut o = OverheadConfig { dag_build_ns_per_edge_check: 3.0, ..Default::default() };
        for p in &mut o.depcheck_table {
            p.ns = match (p.window, p.segments) {
                (16, 6) => 400,
                (16, 10) => 720,
                (32, 6) => 520,
                _ => 1640,
            };
        }
        let st = scaled_trace(&t, f);
        let sg = GpuConfig { clock_ghz: 1.0 / f as f64, ..gpu.clone() };
        let so = o.scaled(f);
        let base = run_policy(&PolicyRun::new(&PolicyKind::SerialSingleStream, &t, &gpu, &o)).unwrap().makespan_ns;
        let sbase = run_policy(&PolicyRun::new(&PolicyKind::SerialSingleStream, &st, &sg, &so)).unwrap().makespan_ns;
        for kind in PolicyKind::all_defaults() {
            let a = run_policy(&PolicyRun::new(&kind, &t, &gpu, &o)).unwrap().makespan_ns;
            let b = run_policy(&PolicyRun::new(&kind, &st, &sg, &so)).unwrap().makespan_ns;
            prop_assert_eq!(b, a * f, "{}", kind);
            prop_assert!((base as f64 / a as f64 - sbase as f64 / b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn all_policies_legal_on_random_dags(seed in 0u64..10_000, n in 1usize..60) {
        let t = generate(&GeneratorParams::irregular(n, seed)).unwrap();
        for kind in PolicyKind::all_defaults().into_iter().chain([PolicyKind::acs_hw(2), PolicyKind::acs_sw(2)]) {
            let r = run(&kind, &t);
            prop_assert!(r.legality.ok());
        }
    }
}
