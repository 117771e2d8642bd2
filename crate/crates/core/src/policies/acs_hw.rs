use std::collections::VecDeque;

use super::PolicyRun;
use crate::depcheck::{compute_upstream_of, estimate_depcheck_cost};
use crate::engine::{EventKind, Notification, PolicyStats, SimReport};
use crate::error::SimError;
use crate::model::{GpuConfig, KernelId, Nanos, OverheadConfig};
use crate::window::{KernelState, SchedulingWindow};

const PORT_DONE: u64 = 1;
const ARRIVAL: u64 = 2;

/// Device-side window latencies in ns: (insertion, completion update).
pub fn hw_latencies(gpu: &GpuConfig, overheads: &OverheadConfig, window_n: usize) -> (Nanos, Nanos) {
    let n = window_n as u64;
    (
        gpu.cycles_to_ns(n * overheads.hw_insert_cycles_per_slot),
        gpu.cycles_to_ns(n.saturating_sub(1) * overheads.hw_update_cycles_per_slot),
    )
}

enum PortOp {
    Insert(KernelId),
    Update(KernelId),
}

/// Hardware scheduler: the host checks each kernel against a possibly stale
/// list of the last `list_m` kernels it sent and pushes a launch packet; a
/// device-side window resolves the rest and dispatches ready kernels
/// directly. All window mutations share one port, with completion updates
/// served before insertions.
pub fn run_acs_hw(run: &PolicyRun, window_n: usize, list_m: usize) -> Result<SimReport, SimError> {
    let o = run.overheads;
    let kernels = &run.trace.kernels;
    let n = kernels.len();
    let (insert_ns, update_ns) = hw_latencies(run.gpu, o, window_n);
    let mut engine = run.engine()?;

    // The host never waits on the device, so packet arrival times are fixed.
    let mut arrival = Vec::with_capacity(n);
    let mut host: Nanos = 0;
    for (k, spec) in kernels.iter().enumerate() {
        let check = estimate_depcheck_cost(k.min(list_m), spec.segment_count(), o);
        engine.log(host, EventKind::HostDepcheck, Some(k), check);
        host += check;
        engine.log(host, EventKind::HostDispatch, Some(k), o.cpu_dispatch_ns);
        host += o.cpu_dispatch_ns;
        arrival.push(host);
    }
    let host_end = host;

    let mut window = SchedulingWindow::new(window_n);
    let mut stats = PolicyStats::default();
    let mut updates: VecDeque<KernelId> = VecDeque::new();
    let mut port: Option<PortOp> = None;
    let mut next_insert: KernelId = 0;
    let mut arrival_timer = false;
    let mut blocked_on: Option<KernelId> = None;
    let mut now: Nanos = 0;
    loop {
        if port.is_none() {
            if let Some(k) = updates.pop_front() {
                port = Some(PortOp::Update(k));
                engine.schedule_timer(now + update_ns, PORT_DONE);
            } else if next_insert < n && arrival[next_insert] <= now {
                let k = next_insert;
                let span_ok = window.oldest().is_none_or(|oldest| k - oldest <= list_m);
                if window.is_full() || !span_ok {
                    if blocked_on != Some(k) {
                        blocked_on = Some(k);
                        stats.blocked_insertions += 1;
                    }
                } else {
                    port = Some(PortOp::Insert(k));
                    engine.schedule_timer(now + insert_ns, PORT_DONE);
                }
            } else if next_insert < n && !arrival_timer {
                arrival_timer = true;
                engine.schedule_timer(arrival[next_insert], ARRIVAL);
            }
        }

        let Some(note) = engine.next_notification() else { break };
        match note {
            Notification::KernelFinished { kernel, at } => {
                now = at;
                updates.push_back(kernel);
            }
            Notification::Timer { token: ARRIVAL, at } => {
                now = at;
                arrival_timer = false;
            }
            Notification::Timer { at, .. } => {
                now = at;
                match port.take().expect("port timer without an operation") {
                    PortOp::Update(k) => {
                        let released = window.complete(k)?;
                        engine.log(at, EventKind::WindowUpdate, Some(k), released.len() as u64);
                        for r in released {
                            window.mark_executing(r)?;
                            engine.dispatch_kernel(r, at)?;
                        }
                    }
                    PortOp::Insert(k) => {
                        let stale_list = &kernels[k.saturating_sub(list_m)..k];
                        let proposed = compute_upstream_of(&kernels[k], stale_list, run.mode)?;
                        let state = window.insert(k, &proposed)?;
                        let depth = window.slot(k).map_or(0, |s| s.upstream.len());
                        engine.log(at, EventKind::WindowInsert, Some(k), depth as u64);
                        stats.max_window_occupancy = stats.max_window_occupancy.max(window.len());
                        stats.max_scheduled_span = stats.max_scheduled_span.max(k - window.oldest().unwrap_or(k));
                        next_insert += 1;
                        if state == KernelState::Ready {
                            window.mark_executing(k)?;
                            engine.dispatch_kernel(k, at)?;
                        }
                    }
                }
            }
        }
    }
    if next_insert < n || !window.is_empty() {
        return Err(SimError::Stalled(n - next_insert + window.len()));
    }
    let busy = host_end;
    let mut report = engine.into_report(host_end, busy, 0);
    report.stats = stats;
    Ok(report)
}
