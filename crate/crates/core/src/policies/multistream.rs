use std::collections::{BinaryHeap, VecDeque};

use super::{charged_construction, PolicyRun};
use crate::engine::{Engine, EventKind, Notification, SimReport};
use crate::error::SimError;
use crate::model::{KernelId, Nanos};
use crate::workloads::{true_dependencies, Dag};

/// Stream assignment from greedy list scheduling by bottom level: the
/// highest-priority ready kernel goes to the stream where it can start
/// earliest. Returns the launch order and each kernel's stream.
pub fn partition_streams(dag: &Dag, weights: &[Nanos], streams: usize) -> (Vec<KernelId>, Vec<usize>) {
    let n = dag.node_count();
    let preds = dag.predecessors();
    let succs = dag.successors();
    let mut bottom = vec![0 as Nanos; n];
    // edges point from lower to higher ids, so descending id order is reverse-topological
    for v in (0..n).rev() {
        bottom[v] = weights[v] + succs[v].iter().map(|&s| bottom[s]).max().unwrap_or(0);
    }
    let mut waiting: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<(Nanos, std::cmp::Reverse<KernelId>)> =
        (0..n).filter(|&v| waiting[v] == 0).map(|v| (bottom[v], std::cmp::Reverse(v))).collect();
    let mut finish = vec![0 as Nanos; n];
    let mut free = vec![0 as Nanos; streams];
    let mut stream_of = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    while let Some((_, std::cmp::Reverse(v))) = ready.pop() {
        let data_ready = preds[v].iter().map(|&p| finish[p]).max().unwrap_or(0);
        let (s, start) = (0..streams)
            .map(|s| (s, free[s].max(data_ready)))
            .min_by_key(|&(s, t)| (t, s))
            .expect("at least one stream");
        finish[v] = start + weights[v];
        free[s] = finish[v];
        stream_of[v] = s;
        order.push(v);
        for &x in &succs[v] {
            waiting[x] -= 1;
            if waiting[x] == 0 {
                ready.push((bottom[x], std::cmp::Reverse(x)));
            }
        }
    }
    (order, stream_of)
}

struct Streams {
    running: Vec<Option<KernelId>>,
    // launched kernels with the host time their launch completed
    queued: Vec<VecDeque<(KernelId, Nanos)>>,
    finished: Vec<Option<Nanos>>,
}

impl Streams {
    fn submit(&mut self, engine: &mut Engine, s: usize, k: KernelId, at: Nanos) -> Result<(), SimError> {
        if self.running[s].is_none() {
            self.running[s] = Some(k);
            engine.dispatch_kernel(k, at.max(engine.now()))?;
        } else {
            self.queued[s].push_back((k, at));
        }
        Ok(())
    }

    /// Handles one device notification. False once the device is idle.
    fn pump(&mut self, engine: &mut Engine, stream_of: &[usize]) -> Result<bool, SimError> {
        match engine.next_notification() {
            Some(Notification::KernelFinished { kernel, at }) => {
                self.finished[kernel] = Some(at);
                let s = stream_of[kernel];
                self.running[s] = None;
                if let Some((next, launched)) = self.queued[s].pop_front() {
                    self.running[s] = Some(next);
                    engine.dispatch_kernel(next, at.max(launched))?;
                }
                Ok(true)
            }
            Some(Notification::Timer { .. }) => Ok(true),
            None => Ok(false),
        }
    }
}

/// Static partition into in-order streams; cross-stream edges cost a host
/// synchronization each.
pub fn run_multi_stream_static(run: &PolicyRun, streams: usize) -> Result<SimReport, SimError> {
    let o = run.overheads;
    let n = run.trace.len();
    if n == 0 {
        return Ok(run.engine()?.into_report(0, 0, 0));
    }
    let construction = charged_construction(run);
    let dag = true_dependencies(run.trace, run.mode);
    let preds = dag.predecessors();
    let weights: Vec<Nanos> = run.trace.kernels.iter().map(|k| run.gpu.standalone_duration(k)).collect();
    let (order, stream_of) = partition_streams(&dag, &weights, streams);

    let mut engine = run.engine()?;
    engine.log(construction, EventKind::DagBuild, None, construction);
    let mut st =
        Streams { running: vec![None; streams], queued: vec![VecDeque::new(); streams], finished: vec![None; n] };
    let mut host = construction;
    let mut syncs = 0u64;
    for &v in &order {
        for &p in &preds[v] {
            if stream_of[p] == stream_of[v] {
                continue;
            }
            while st.finished[p].is_none() {
                if !st.pump(&mut engine, &stream_of)? {
                    return Err(SimError::Stalled(engine.unfinished()));
                }
            }
            host = host.max(st.finished[p].unwrap_or(0));
            engine.log(host, EventKind::HostSync, Some(p), o.sync_ns);
            host += o.sync_ns;
            syncs += 1;
        }
        engine.log(host, EventKind::HostLaunch, Some(v), o.launch_ns);
        host += o.launch_ns;
        st.submit(&mut engine, stream_of[v], v, host)?;
    }
    while st.pump(&mut engine, &stream_of)? {}
    host = host.max(engine.last_finish());
    engine.log(host, EventKind::HostSync, None, o.sync_ns);
    host += o.sync_ns;
    syncs += 1;
    let busy = construction + n as u64 * o.launch_ns + syncs * o.sync_ns;
    Ok(engine.into_report(host, busy, construction))
}
