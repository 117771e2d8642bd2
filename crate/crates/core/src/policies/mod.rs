//! Scheduling policies. Each one drives an [`Engine`] with its own host and
//! device-side overhead structure and returns a [`SimReport`].

mod acs_hw;
mod acs_sw;
mod dag;
mod multistream;
mod serial;

use serde::{Deserialize, Serialize};

use crate::depcheck::DependencyMode;
use crate::engine::{Engine, Legality, SimReport};
use crate::error::SimError;
use crate::model::{GpuConfig, Nanos, OverheadConfig, WorkloadTrace};
use crate::workloads::true_dependencies;

pub use acs_hw::{hw_latencies, run_acs_hw};
pub use acs_sw::run_acs_sw;
pub use dag::run_dag_ahead_of_time;
pub use multistream::run_multi_stream_static;
pub use serial::run_serial;

pub const DEFAULT_SCHEDULER_THREADS: usize = 8;
pub const DEFAULT_WINDOW: usize = 32;
const MIN_SCHEDULED_LIST: usize = 64;

fn default_threads() -> usize {
    DEFAULT_SCHEDULER_THREADS
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_streams() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicyKind {
    #[serde(rename = "serial", alias = "serial-single-stream")]
    SerialSingleStream,
    #[serde(rename = "multi-stream", alias = "multi-stream-static")]
    MultiStreamStatic {
        #[serde(default = "default_streams")]
        streams: usize,
    },
    #[serde(rename = "dag-aot", alias = "dag-ahead-of-time")]
    DagAheadOfTime,
    #[serde(rename = "acs-sw")]
    AcsSw {
        #[serde(default = "default_threads")]
        scheduler_threads: usize,
        #[serde(default = "default_window")]
        window_n: usize,
    },
    #[serde(rename = "acs-hw")]
    AcsHw {
        #[serde(default = "default_window")]
        window_n: usize,
        /// Defaults to `max(64, window_n)`.
        #[serde(default)]
        scheduled_list_m: Option<usize>,
    },
}

impl PolicyKind {
    pub fn acs_sw(window_n: usize) -> Self {
        PolicyKind::AcsSw { scheduler_threads: DEFAULT_SCHEDULER_THREADS, window_n }
    }

    pub fn acs_hw(window_n: usize) -> Self {
        PolicyKind::AcsHw { window_n, scheduled_list_m: None }
    }

    /// The five policies with default parameters.
    pub fn all_defaults() -> Vec<PolicyKind> {
        vec![
            PolicyKind::SerialSingleStream,
            PolicyKind::MultiStreamStatic { streams: default_streams() },
            PolicyKind::DagAheadOfTime,
            PolicyKind::acs_sw(DEFAULT_WINDOW),
            PolicyKind::acs_hw(DEFAULT_WINDOW),
        ]
    }

    pub fn scheduled_list_len(window_n: usize, scheduled_list_m: Option<usize>) -> usize {
        scheduled_list_m.unwrap_or(window_n.max(MIN_SCHEDULED_LIST))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidPolicy(m));
        match *self {
            PolicyKind::MultiStreamStatic { streams: 0 } => bad("streams must be at least 1".into()),
            PolicyKind::AcsSw { scheduler_threads: 0, .. } => bad("scheduler_threads must be at least 1".into()),
            PolicyKind::AcsSw { window_n, .. } | PolicyKind::AcsHw { window_n, .. } if window_n < 2 => {
                bad(format!("window size {window_n} is below 2"))
            }
            PolicyKind::AcsHw { window_n, scheduled_list_m } => {
                let m = Self::scheduled_list_len(window_n, scheduled_list_m);
                if m < window_n {
                    bad(format!("scheduled list {m} is shorter than the window {window_n}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Short label used in reports, e.g. `acs-hw-n32-m64`.
    pub fn label(&self) -> String {
        match *self {
            PolicyKind::SerialSingleStream => "serial".into(),
            PolicyKind::MultiStreamStatic { streams } => format!("multi-stream-{streams}"),
            PolicyKind::DagAheadOfTime => "dag-aot".into(),
            PolicyKind::AcsSw { scheduler_threads, window_n } => format!("acs-sw-t{scheduler_threads}-n{window_n}"),
            PolicyKind::AcsHw { window_n, scheduled_list_m } => {
                format!("acs-hw-n{window_n}-m{}", Self::scheduled_list_len(window_n, scheduled_list_m))
            }
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Everything one simulation needs.
#[derive(Clone, Copy, Debug)]
pub struct PolicyRun<'a> {
    pub kind: &'a PolicyKind,
    pub trace: &'a WorkloadTrace,
    pub gpu: &'a GpuConfig,
    pub overheads: &'a OverheadConfig,
    pub mode: DependencyMode,
    /// Recorded for reproduction; the policies themselves are deterministic.
    pub seed: u64,
    /// Inputs that share one ahead-of-time graph. Construction is charged
    /// `ceil(cost / graph_reuse)` per run.
    pub graph_reuse: u32,
    pub event_log: bool,
}

impl<'a> PolicyRun<'a> {
    pub fn new(
        kind: &'a PolicyKind,
        trace: &'a WorkloadTrace,
        gpu: &'a GpuConfig,
        overheads: &'a OverheadConfig,
    ) -> Self {
        PolicyRun {
            kind,
            trace,
            gpu,
            overheads,
            mode: DependencyMode::Full,
            seed: trace.metadata.seed.unwrap_or(0),
            graph_reuse: 1,
            event_log: true,
        }
    }

    pub fn with_mode(mut self, mode: DependencyMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_graph_reuse(mut self, reuse: u32) -> Self {
        self.graph_reuse = reuse.max(1);
        self
    }

    pub fn without_event_log(mut self) -> Self {
        self.event_log = false;
        self
    }

    pub(crate) fn engine(&self) -> Result<Engine<'a>, SimError> {
        let e = Engine::new(self.gpu, &self.trace.kernels)?;
        Ok(if self.event_log { e } else { e.without_event_log() })
    }
}

/// Runs the policy named by `run.kind`, then stamps the trace hash and the
/// post-hoc legality verdict onto the report.
pub fn run_policy(run: &PolicyRun) -> Result<SimReport, SimError> {
    run.kind.validate()?;
    run.gpu.validate()?;
    run.overheads.validate()?;
    run.trace.validate()?;
    let mut report = match *run.kind {
        PolicyKind::SerialSingleStream => run_serial(run)?,
        PolicyKind::MultiStreamStatic { streams } => run_multi_stream_static(run, streams)?,
        PolicyKind::DagAheadOfTime => run_dag_ahead_of_time(run)?,
        PolicyKind::AcsSw { scheduler_threads, window_n } => run_acs_sw(run, scheduler_threads, window_n)?,
        PolicyKind::AcsHw { window_n, scheduled_list_m } => {
            run_acs_hw(run, window_n, PolicyKind::scheduled_list_len(window_n, scheduled_list_m))?
        }
    };
    report.trace_hash = run.trace.content_hash();
    report.legality = check_legality(&report, run.trace, run.mode);
    Ok(report)
}

/// Checks every edge of `mode`'s dependency graph against the timeline. For
/// weaker modes the Full-mode violations are counted separately.
pub fn check_legality(report: &SimReport, trace: &WorkloadTrace, mode: DependencyMode) -> Legality {
    let violated = |m: DependencyMode| {
        true_dependencies(trace, m)
            .edges()
            .iter()
            .filter(|&&(i, j)| match (report.finish(i), report.dispatch(j)) {
                (Some(f), Some(d)) => d < f,
                _ => true,
            })
            .count()
    };
    let violations = violated(mode);
    let full_mode_discrepancies = if mode == DependencyMode::Full { 0 } else { violated(DependencyMode::Full) };
    let missing_kernels =
        (0..trace.len()).filter(|&i| report.dispatch(i).is_none() || report.finish(i).is_none()).count();
    Legality { mode, violations, full_mode_discrepancies, missing_kernels }
}

/// Total pairwise segment comparisons for building the whole graph ahead of
/// time: every kernel against all earlier ones.
pub fn construction_checks(trace: &WorkloadTrace, mode: DependencyMode) -> u128 {
    let mut checks = 0u128;
    let mut prior_segments = 0u128;
    let mut prior_writes = 0u128;
    for k in &trace.kernels {
        checks += k.writes.len() as u128 * prior_segments;
        if mode == DependencyMode::Full {
            checks += k.reads.len() as u128 * prior_writes;
        }
        prior_segments += (k.reads.len() + k.writes.len()) as u128;
        prior_writes += k.writes.len() as u128;
    }
    checks
}

/// Full ahead-of-time construction cost for one input.
pub fn construction_cost(trace: &WorkloadTrace, overheads: &OverheadConfig, mode: DependencyMode) -> Nanos {
    let checks = (construction_checks(trace, mode) as f64 * overheads.dag_build_ns_per_edge_check).ceil() as Nanos;
    checks + trace.len() as Nanos * overheads.cpu_dispatch_ns
}

/// Per-check cost that makes ahead-of-time construction take `fraction` of
/// the serial makespan, averaged over `traces`. Clamped at zero when the
/// per-node dispatch cost alone already exceeds the target.
pub fn calibrate_dag_build_cost(
    traces: &[WorkloadTrace],
    gpu: &GpuConfig,
    overheads: &OverheadConfig,
    mode: DependencyMode,
    fraction: f64,
) -> Result<f64, SimError> {
    let mut serial = 0.0;
    let mut checks = 0.0;
    let mut dispatch = 0.0;
    for t in traces {
        let run = PolicyRun::new(&PolicyKind::SerialSingleStream, t, gpu, overheads).without_event_log();
        serial += run_serial(&run)?.makespan_ns as f64;
        checks += construction_checks(t, mode) as f64;
        dispatch += t.len() as f64 * overheads.cpu_dispatch_ns as f64;
    }
    if checks == 0.0 {
        return Ok(0.0);
    }
    Ok(((fraction * serial - dispatch) / checks).max(0.0))
}

pub(crate) fn charged_construction(run: &PolicyRun) -> Nanos {
    construction_cost(run.trace, run.overheads, run.mode).div_ceil(run.graph_reuse.max(1) as Nanos)
}
