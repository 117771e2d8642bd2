use std::collections::BTreeSet;

use super::PolicyRun;
use crate::depcheck::{compute_upstream_of, estimate_depcheck_cost};
use crate::engine::{EventKind, Notification, PolicyStats, SimReport};
use crate::error::SimError;
use crate::model::{KernelId, Nanos};
use crate::window::{KernelState, SchedulingWindow};

const INSERT_DONE: u64 = 1 << 56;
const SYNC_DONE: u64 = 2 << 56;
const ID_MASK: u64 = (1 << 56) - 1;

/// Software scheduler: one window thread moves kernels from the input FIFO
/// into an N-slot window, and `threads` stream threads each launch one
/// ready kernel at a time and synchronize on its completion.
pub fn run_acs_sw(run: &PolicyRun, threads: usize, window_n: usize) -> Result<SimReport, SimError> {
    let o = run.overheads;
    let kernels = &run.trace.kernels;
    let n = kernels.len();
    let mut engine = run.engine()?;
    let mut window = SchedulingWindow::new(window_n);
    let mut stats = PolicyStats::default();

    let mut next_input: KernelId = 0;
    // kernel being inserted and its proposed upstream set
    let mut inserting: Option<(KernelId, BTreeSet<KernelId>)> = None;
    let mut blocked_on: Option<KernelId> = None;
    let mut idle_threads = threads;
    let mut launch_free: Nanos = 0;
    let mut host_end: Nanos = 0;
    let mut busy: Nanos = 0;
    let mut retired = 0usize;

    let mut now: Nanos = 0;
    loop {
        // Window thread: start the next insertion if it can.
        if inserting.is_none() && next_input < n {
            if window.is_full() {
                if blocked_on != Some(next_input) {
                    blocked_on = Some(next_input);
                    stats.blocked_insertions += 1;
                }
            } else {
                let k = next_input;
                next_input += 1;
                let occupants = window.ids().map(|id| &kernels[id]);
                let upstream = compute_upstream_of(&kernels[k], occupants, run.mode)?;
                let cost = estimate_depcheck_cost(window.len(), kernels[k].segment_count(), o);
                engine.log(now, EventKind::HostDepcheck, Some(k), cost);
                busy += cost;
                inserting = Some((k, upstream));
                engine.schedule_timer(now + cost, INSERT_DONE | k as u64);
            }
        }
        // Stream threads: claim the lowest-id ready kernels.
        while idle_threads > 0 {
            let Some(k) = window.first_ready() else { break };
            window.mark_executing(k)?;
            idle_threads -= 1;
            let start = now.max(launch_free);
            launch_free = start + o.launch_ns;
            busy += o.launch_ns;
            engine.log(start, EventKind::HostLaunch, Some(k), o.launch_ns);
            engine.dispatch_kernel(k, launch_free)?;
        }

        let Some(note) = engine.next_notification() else { break };
        match note {
            Notification::KernelFinished { kernel, at } => {
                engine.log(at, EventKind::HostSync, Some(kernel), o.sync_ns);
                busy += o.sync_ns;
                engine.schedule_timer(at + o.sync_ns, SYNC_DONE | kernel as u64);
                now = at;
            }
            Notification::Timer { token, at } => {
                now = at;
                let k = (token & ID_MASK) as KernelId;
                if token & !ID_MASK == SYNC_DONE {
                    let released = window.complete(k)?;
                    engine.log(at, EventKind::WindowUpdate, Some(k), released.len() as u64);
                    idle_threads += 1;
                    retired += 1;
                    host_end = host_end.max(at);
                } else {
                    let (id, upstream) = inserting.take().expect("insert timer without insertion");
                    debug_assert_eq!(id, k);
                    let state = window.insert(id, &upstream)?;
                    let depth = window.slot(id).map_or(0, |s| s.upstream.len());
                    engine.log(at, EventKind::WindowInsert, Some(id), depth as u64);
                    stats.max_window_occupancy = stats.max_window_occupancy.max(window.len());
                    let span = id - window.oldest().unwrap_or(id);
                    stats.max_scheduled_span = stats.max_scheduled_span.max(span);
                    debug_assert!(state == KernelState::Ready || state == KernelState::Pending);
                }
            }
        }
    }
    if retired < n {
        return Err(SimError::Stalled(n - retired));
    }
    let mut report = engine.into_report(host_end, busy, 0);
    report.stats = stats;
    Ok(report)
}
