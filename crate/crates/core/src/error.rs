use thiserror::Error;

use crate::model::KernelId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("segment at {start:#x} has zero size")]
    EmptySegment { start: u64 },
    #[error("segment {start:#x}+{size:#x} overflows the address space")]
    SegmentOverflow { start: u64, size: u64 },
    #[error("kernel {id}: {field} must be at least 1")]
    ZeroField { id: KernelId, field: &'static str },
    #[error("kernel ids must be dense: expected {expected}, found {found}")]
    IdDensity { expected: KernelId, found: KernelId },
    #[error("invalid GPU configuration: {0}")]
    InvalidGpu(String),
    #[error("invalid overhead configuration: {0}")]
    InvalidOverheads(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected kernel id {expected}, found {found}")]
    IdDensity { line: usize, expected: KernelId, found: KernelId },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: ModelError },
    #[error("trace has no metadata line")]
    MissingMetadata,
    #[error("unsupported trace format version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepcheckError {
    #[error("kernel {other} is not earlier than candidate {candidate}")]
    NotEarlier { candidate: KernelId, other: KernelId },
    #[error("dependency graph has a cycle through kernel {0}")]
    Cycle(KernelId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("scheduling window is full ({0} slots)")]
    Full(usize),
    #[error("kernel {0} is already in the window")]
    DuplicateId(KernelId),
    #[error("kernel {0} is not in the window")]
    UnknownId(KernelId),
    #[error("kernel {0} is not ready")]
    NotReady(KernelId),
    #[error("kernel {0} is not executing")]
    NotExecuting(KernelId),
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Depcheck(#[from] DepcheckError),
    #[error("kernel {0} dispatched twice")]
    DuplicateDispatch(KernelId),
    #[error("kernel {0} is not part of the trace")]
    UnknownKernel(KernelId),
    #[error("dispatch of kernel {kernel} at {at} ns is before the current time {now} ns")]
    DispatchInPast { kernel: KernelId, at: u64, now: u64 },
    #[error("kernel {kernel} needs {warps} warps per CTA but an SM holds at most {limit}")]
    CtaTooWide { kernel: KernelId, warps: u32, limit: u32 },
    #[error("report has zero makespan")]
    ZeroMakespan,
    #[error("invalid policy parameters: {0}")]
    InvalidPolicy(String),
    #[error("simulation stalled with {0} kernels unfinished")]
    Stalled(usize),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("baseline policy {0} is not among the runs")]
    MissingBaseline(String),
    #[error("runs were produced from different traces ({0} vs {1})")]
    TraceMismatch(String, String),
    #[error("no runs to compare")]
    Empty,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("address space of {0} bytes exhausted")]
    AddressSpaceExhausted(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
