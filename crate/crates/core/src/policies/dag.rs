use super::{charged_construction, PolicyRun};
use crate::engine::{EventKind, Notification, SimReport};
use crate::error::SimError;
use crate::workloads::true_dependencies;

/// Builds the whole graph on the host first, then lets the device release
/// each kernel the moment its last upstream kernel finishes.
pub fn run_dag_ahead_of_time(run: &PolicyRun) -> Result<SimReport, SimError> {
    let construction = charged_construction(run);
    let dag = true_dependencies(run.trace, run.mode);
    let succs = dag.successors();
    let mut waiting: Vec<usize> = dag.predecessors().iter().map(Vec::len).collect();

    let mut engine = run.engine()?;
    if !run.trace.is_empty() {
        engine.log(construction, EventKind::DagBuild, None, construction);
    }
    for (k, &w) in waiting.iter().enumerate() {
        if w == 0 {
            engine.dispatch_kernel(k, construction)?;
        }
    }
    while let Some(n) = engine.next_notification() {
        if let Notification::KernelFinished { kernel, at } = n {
            for &s in &succs[kernel] {
                waiting[s] -= 1;
                if waiting[s] == 0 {
                    engine.dispatch_kernel(s, at)?;
                }
            }
        }
    }
    if engine.unfinished() > 0 {
        return Err(SimError::Stalled(engine.unfinished()));
    }
    let host_end = if run.trace.is_empty() { 0 } else { construction };
    Ok(engine.into_report(host_end, host_end, host_end))
}
