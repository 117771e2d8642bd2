use acs_core::engine::Notification;
use acs_core::*;
use proptest::prelude::*;

fn kernel(id: usize, ctas: u32, warps: u32, dur: Nanos) -> KernelSpec {
    KernelSpec {
        id,
        name: format!("k{id}"),
        num_ctas: ctas,
        warps_per_cta: warps,
        cta_duration_ns: dur,
        reads: SegmentList::new(),
        writes: SegmentList::new(),
    }
}

/// Dispatches every kernel at its arrival time and steps the engine,
/// checking capacity and work conservation after each notification.
fn drive(gpu: &GpuConfig, kernels: &[KernelSpec], arrivals: &[Nanos]) -> SimReport {
    let mut e = Engine::new(gpu, kernels).unwrap();
    for (k, &at) in arrivals.iter().enumerate() {
        e.dispatch_kernel(k, at).unwrap();
    }
    let mut finished = 0;
    while let Some(n) = e.next_notification() {
        e.check_capacity().unwrap();
        e.check_work_conserving().unwrap();
        if let Notification::KernelFinished { .. } = n {
            finished += 1;
        }
    }
    assert_eq!(finished, kernels.len());
    let end = e.last_finish();
    e.into_report(end, 0, 0)
}

fn arb_workload() -> impl Strategy<Value = (Vec<KernelSpec>, Vec<Nanos>)> {
    prop::collection::vec((1u32..80, 1u32..=16, 100u64..5000, 0u64..20_000), 1..25).prop_map(|v| {
        let kernels = v.iter().enumerate().map(|(i, &(c, w, d, _))| kernel(i, c, w, d)).collect();
        let arrivals = v.iter().map(|x| x.3).collect();
        (kernels, arrivals)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capacity_and_work_conservation_hold((kernels, arrivals) in arb_workload()) {
        let gpu = GpuConfig { sm_count: 4, max_ctas_per_sm: 4, max_warps_per_sm: 32, clock_ghz: 1.0 };
        let r = drive(&gpu, &kernels, &arrivals);
        for (k, t) in r.kernels.iter().enumerate() {
            let (d, f) = (t.dispatch_ns.unwrap(), t.finish_ns.unwrap());
            prop_assert!(d >= arrivals[k]);
            prop_assert!(f >= d + kernels[k].cta_duration_ns);
        }
        let integral: u64 = kernels.iter().map(|k| k.num_ctas as u64 * k.warps_per_cta as u64 * k.cta_duration_ns).sum();
        prop_assert_eq!(r.active_warp_integral, integral);
    }

    #[test]
    fn identical_inputs_give_identical_logs((kernels, arrivals) in arb_workload()) {
        let gpu = GpuConfig { sm_count: 3, max_ctas_per_sm: 8, max_warps_per_sm: 32, clock_ghz: 1.0 };
        let a = drive(&gpu, &kernels, &arrivals);
        let b = drive(&gpu, &kernels, &arrivals);
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        a.write_event_log(&mut la).unwrap();
        b.write_event_log(&mut lb).unwrap();
        prop_assert_eq!(la, lb);
    }
}

#[test]
fn policy_runs_are_deterministic() {
    let t = generate(&GeneratorParams::sim_engine(300, 4)).unwrap();
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    for kind in PolicyKind::all_defaults() {
        let a = run_policy(&PolicyRun::new(&kind, &t, &gpu, &o)).unwrap();
        let b = run_policy(&PolicyRun::new(&kind, &t, &gpu, &o)).unwrap();
        assert_eq!(a.events, b.events, "{kind}");
        assert_eq!(a.makespan_ns, b.makespan_ns);
    }
}

#[test]
fn serial_occupancy_below_hardware_window() {
    let gpu = GpuConfig::default();
    let o = OverheadConfig::default();
    let t = generate(&GeneratorParams::sim_engine(500, 1)).unwrap();
    let serial = run_policy(&PolicyRun::new(&PolicyKind::SerialSingleStream, &t, &gpu, &o)).unwrap();
    let hw = run_policy(&PolicyRun::new(&PolicyKind::acs_hw(32), &t, &gpu, &o)).unwrap();
    let (s, h) = (achieved_occupancy(&serial, &gpu).unwrap(), achieved_occupancy(&hw, &gpu).unwrap());
    assert!(s < 0.45, "{s}");
    assert!(h > s);
}
