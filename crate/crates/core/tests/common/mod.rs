//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use acs_core::window::SchedulingWindow;
use acs_core::{DependencyMode, GpuConfig, KernelId, MemSegment, Nanos, SegmentList, WorkloadTrace};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Every byte touched by a segment list.
pub fn bytes(list: &SegmentList) -> HashSet<u64> {
    list.iter().flat_map(|s| s.start..s.start + s.size).collect()
}

/// Dependency rule evaluated on materialized byte sets.
pub fn oracle_dependent(
    earlier_reads: &SegmentList,
    earlier_writes: &SegmentList,
    later_reads: &SegmentList,
    later_writes: &SegmentList,
    mode: DependencyMode,
) -> bool {
    let ew = bytes(earlier_writes);
    let er = bytes(earlier_reads);
    let lw = bytes(later_writes);
    if lw.iter().any(|b| ew.contains(b) || er.contains(b)) {
        return true;
    }
    mode == DependencyMode::Full && bytes(later_reads).iter().any(|b| ew.contains(b))
}

/// Up to `max_segs` segments of size 0..=256 inside `[0, 2^16)`. Zero-size
/// segments are built directly since the checked constructor rejects them.
pub fn random_list(rng: &mut StdRng, max_segs: usize) -> SegmentList {
    let n = rng.random_range(0..=max_segs);
    (0..n)
        .map(|_| {
            let size = rng.random_range(0..=256u64);
            let start = rng.random_range(0..(1u64 << 16) - size);
            MemSegment { start, size }
        })
        .collect()
}

/// Random DAG over `n` nodes with edges only from lower to higher ids.
pub fn random_dag(rng: &mut StdRng, n: usize, p: f64) -> Vec<Vec<KernelId>> {
    (0..n).map(|j| (0..j).filter(|_| rng.random_bool(p)).collect()).collect()
}

/// Reference window: a kernel is ready when none of its predecessors is
/// still held and it has not started.
pub struct RefWindow {
    preds: Vec<Vec<KernelId>>,
    held: BTreeSet<KernelId>,
    running: BTreeSet<KernelId>,
}

impl RefWindow {
    pub fn new(preds: Vec<Vec<KernelId>>) -> Self {
        RefWindow { preds, held: BTreeSet::new(), running: BTreeSet::new() }
    }

    pub fn ready(&self) -> Vec<KernelId> {
        self.held
            .iter()
            .copied()
            .filter(|k| !self.running.contains(k) && self.preds[*k].iter().all(|p| !self.held.contains(p)))
            .collect()
    }

    pub fn insert(&mut self, k: KernelId) {
        self.held.insert(k);
    }

    pub fn start(&mut self, k: KernelId) {
        self.running.insert(k);
    }

    pub fn finish(&mut self, k: KernelId) {
        self.running.remove(&k);
        self.held.remove(&k);
    }
}

#[derive(Debug, Default)]
pub struct StressOutcome {
    pub retired: Vec<usize>,
    pub mismatches: usize,
    pub invariant_failures: usize,
    pub deadlocks: usize,
    pub premature: usize,
}

/// Streams a random DAG through a window under a random interleaving of
/// insert, mark_executing and complete, comparing every ready set with the
/// reference.
pub fn stress_window(seed: u64, n: usize, capacity: usize) -> StressOutcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let preds = random_dag(&mut rng, n, 0.3);
    let mut w = SchedulingWindow::new(capacity);
    let mut reference = RefWindow::new(preds.clone());
    let mut out = StressOutcome { retired: vec![0; n], ..Default::default() };
    let mut next = 0;
    let mut executing: Vec<KernelId> = Vec::new();
    let mut steps = 0;
    while out.retired.contains(&0) && steps < 100 * n {
        steps += 1;
        let ready = w.ready_set();
        let can_insert = next < n && !w.is_full();
        match rng.random_range(0..3) {
            0 if can_insert => {
                let proposed: BTreeSet<KernelId> = preds[next].iter().copied().collect();
                w.insert(next, &proposed).unwrap();
                reference.insert(next);
                next += 1;
            }
            1 if !ready.is_empty() => {
                let k = ready[rng.random_range(0..ready.len())];
                w.mark_executing(k).unwrap();
                reference.start(k);
                executing.push(k);
            }
            2 if !executing.is_empty() => {
                let k = executing.swap_remove(rng.random_range(0..executing.len()));
                let released = w.complete(k).unwrap();
                reference.finish(k);
                out.retired[k] += 1;
                if released.windows(2).any(|p| p[0] >= p[1]) {
                    out.mismatches += 1;
                }
            }
            _ => continue,
        }
        if w.ready_set() != reference.ready() {
            out.mismatches += 1;
        }
        if w.check_invariants().is_err() {
            out.invariant_failures += 1;
        }
        for k in w.ready_set() {
            if preds[k].iter().any(|&p| w.contains(p)) {
                out.premature += 1;
            }
        }
        if !w.is_empty() && w.executing_count() == 0 && w.ready_set().is_empty() {
            out.deadlocks += 1;
        }
    }
    out
}

/// Longest path by enumerating every path from every node.
pub fn brute_force_critical_path(preds: &[Vec<KernelId>], weight: &[Nanos]) -> Nanos {
    fn longest_ending_at(k: usize, preds: &[Vec<KernelId>], weight: &[Nanos]) -> Nanos {
        weight[k] + preds[k].iter().map(|&p| longest_ending_at(p, preds, weight)).max().unwrap_or(0)
    }
    (0..weight.len()).map(|k| longest_ending_at(k, preds, weight)).max().unwrap_or(0)
}

/// Makespan lower bound from total CTA work, computed from scratch.
pub fn area_bound(trace: &WorkloadTrace, gpu: &GpuConfig) -> Nanos {
    let work: u128 = trace.kernels.iter().map(|k| k.num_ctas as u128 * k.cta_duration_ns as u128).sum();
    let slots = (gpu.sm_count as u128) * (gpu.max_ctas_per_sm as u128);
    work.div_ceil(slots) as Nanos
}
