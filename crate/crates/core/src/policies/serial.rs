use super::PolicyRun;
use crate::engine::{EventKind, Notification, SimReport};
use crate::error::SimError;

/// One stream, one kernel at a time: launch, wait for completion, sync.
pub fn run_serial(run: &PolicyRun) -> Result<SimReport, SimError> {
    let o = run.overheads;
    let mut engine = run.engine()?;
    let mut host = 0;
    for k in 0..run.trace.len() {
        engine.log(host, EventKind::HostLaunch, Some(k), o.launch_ns);
        host += o.launch_ns;
        engine.dispatch_kernel(k, host)?;
        let done = loop {
            match engine.next_notification() {
                Some(Notification::KernelFinished { kernel, at }) if kernel == k => break at,
                Some(_) => {}
                None => return Err(SimError::Stalled(engine.unfinished())),
            }
        };
        engine.log(done, EventKind::HostSync, Some(k), o.sync_ns);
        host = done + o.sync_ns;
    }
    let busy = run.trace.len() as u64 * (o.launch_ns + o.sync_ns);
    Ok(engine.into_report(host, busy, 0))
}
