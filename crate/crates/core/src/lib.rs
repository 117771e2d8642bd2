//! Discrete-event simulator for out-of-order GPU kernel scheduling.
//!
//! Kernels declare the memory segments they read and write. Policies decide
//! when each kernel may run, from a single serial stream up to a
//! hardware-managed scheduling window that discovers dependencies at run
//! time, and a shared GPU model turns those decisions into a timeline.

pub mod depcheck;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod policies;
pub mod window;
pub mod workloads;

pub use depcheck::{compute_upstream, estimate_depcheck_cost, is_dependent, DependencyMode};
pub use engine::{achieved_occupancy, Engine, EventKind, EventRecord, Legality, SimReport};
pub use error::{
    DepcheckError, ExperimentError, ModelError, ReportError, SimError, TraceError, WindowError, WorkloadError,
};
pub use experiment::{run_experiment, ExperimentConfig};
pub use metrics::{compare, emit, ComparisonReport, OutputFormat};
pub use model::{
    load_trace, save_trace, GpuConfig, KernelId, KernelSpec, MemSegment, Nanos, OverheadConfig, SegmentList,
    WorkloadTrace,
};
pub use policies::{run_policy, PolicyKind, PolicyRun};
pub use window::{KernelState, SchedulingWindow};
pub use workloads::{critical_path_ns, generate, true_dependencies, Dag, GeneratorParams, WorkloadKind};
