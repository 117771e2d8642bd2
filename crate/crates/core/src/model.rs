//! Domain types shared by every module and the line-delimited trace format.
//!
//! A trace file holds one metadata object on its first line followed by one
//! kernel record per line:
//!
//! ```text
//! {"format_version":1,"generator":"chain","seed":7,"params":{...}}
//! {"id":0,"name":"k0","num_ctas":4,"warps_per_cta":2,"cta_duration_ns":1000,"reads":[],"writes":[{"start":0,"size":64}]}
//! {"id":1,"name":"k1","num_ctas":1,"warps_per_cta":1,"cta_duration_ns":500,"reads":[],"writes":"whole_memory"}
//! ```
//!
//! A record that omits `reads` or `writes` has an unknown footprint and is
//! given a whole-memory write, so it conflicts with every other kernel.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Deref, DerefMut};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, TraceError};

/// Simulated time in integer nanoseconds.
pub type Nanos = u64;

/// Program-order index of a kernel within a trace.
pub type KernelId = usize;

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// Half-open byte interval `[start, start + size)` in a 64-bit address space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemSegment {
    pub start: u64,
    pub size: u64,
}

impl MemSegment {
    /// Conservative footprint for kernels whose accesses cannot be resolved.
    pub const WHOLE_MEMORY: MemSegment = MemSegment { start: 0, size: u64::MAX };

    pub fn new(start: u64, size: u64) -> Result<Self, ModelError> {
        if size == 0 {
            return Err(ModelError::EmptySegment { start });
        }
        if start.checked_add(size).is_none() {
            return Err(ModelError::SegmentOverflow { start, size });
        }
        Ok(MemSegment { start, size })
    }

    /// One past the last byte. Saturates for malformed segments built by hand.
    pub fn end(&self) -> u64 {
        self.start.saturating_add(self.size)
    }

    pub fn is_whole_memory(&self) -> bool {
        *self == Self::WHOLE_MEMORY
    }
}

/// Ordered list of segments. Members may overlap and the list may be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SegmentList(pub Vec<MemSegment>);

impl SegmentList {
    pub fn new() -> Self {
        SegmentList(Vec::new())
    }

    pub fn whole_memory() -> Self {
        SegmentList(vec![MemSegment::WHOLE_MEMORY])
    }

    /// True when the list is exactly the whole-memory fallback.
    pub fn is_whole_memory(&self) -> bool {
        self.0.len() == 1 && self.0[0].is_whole_memory()
    }
}

impl Deref for SegmentList {
    type Target = Vec<MemSegment>;
    fn deref(&self) -> &Vec<MemSegment> {
        &self.0
    }
}

impl DerefMut for SegmentList {
    fn deref_mut(&mut self) -> &mut Vec<MemSegment> {
        &mut self.0
    }
}

impl From<Vec<MemSegment>> for SegmentList {
    fn from(v: Vec<MemSegment>) -> Self {
        SegmentList(v)
    }
}

impl FromIterator<MemSegment> for SegmentList {
    fn from_iter<I: IntoIterator<Item = MemSegment>>(iter: I) -> Self {
        SegmentList(iter.into_iter().collect())
    }
}

const WHOLE_MEMORY_MARKER: &str = "whole_memory";

#[derive(Deserialize)]
#[serde(untagged)]
enum SegmentListRepr {
    Marker(String),
    List(Vec<MemSegment>),
}

impl Serialize for SegmentList {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_whole_memory() {
            serializer.serialize_str(WHOLE_MEMORY_MARKER)
        } else {
            self.0.serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for SegmentList {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match SegmentListRepr::deserialize(deserializer)? {
            SegmentListRepr::List(v) => Ok(SegmentList(v)),
            SegmentListRepr::Marker(m) if m == WHOLE_MEMORY_MARKER => Ok(SegmentList::whole_memory()),
            SegmentListRepr::Marker(m) => Err(serde::de::Error::custom(format!(
                "unknown segment marker {m:?}, expected \"{WHOLE_MEMORY_MARKER}\""
            ))),
        }
    }
}

/// One kernel invocation: launch shape plus its declared memory footprint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub id: KernelId,
    pub name: String,
    pub num_ctas: u32,
    pub warps_per_cta: u32,
    pub cta_duration_ns: Nanos,
    pub reads: SegmentList,
    pub writes: SegmentList,
}

impl KernelSpec {
    /// Number of read plus write segments, the size measure used by the
    /// dependency-check cost model.
    pub fn segment_count(&self) -> usize {
        self.reads.len() + self.writes.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let zero = |field: &'static str| ModelError::ZeroField { id: self.id, field };
        if self.num_ctas == 0 {
            return Err(zero("num_ctas"));
        }
        if self.warps_per_cta == 0 {
            return Err(zero("warps_per_cta"));
        }
        if self.cta_duration_ns == 0 {
            return Err(zero("cta_duration_ns"));
        }
        for seg in self.reads.iter().chain(self.writes.iter()) {
            MemSegment::new(seg.start, seg.size)?;
        }
        Ok(())
    }
}

/// Free-form provenance carried on the first line of a trace file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(default)]
    pub generator: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

/// Kernels in program order. `kernels[i].id == i` always holds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkloadTrace {
    pub kernels: Vec<KernelSpec>,
    pub metadata: TraceMetadata,
}

impl WorkloadTrace {
    pub fn new(kernels: Vec<KernelSpec>, metadata: TraceMetadata) -> Result<Self, ModelError> {
        let trace = WorkloadTrace { kernels, metadata };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (pos, k) in self.kernels.iter().enumerate() {
            if k.id != pos {
                return Err(ModelError::IdDensity { expected: pos, found: k.id });
            }
            k.validate()?;
        }
        Ok(())
    }

    /// Stable content hash (hex SHA-256 prefix) of the serialized kernels.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for k in &self.kernels {
            let line = serde_json::to_vec(k).expect("kernel records always serialize");
            hasher.update(&line);
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize)]
struct MetadataLineOut<'a> {
    format_version: u32,
    generator: &'a str,
    seed: Option<u64>,
    params: &'a BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct MetadataLineIn {
    format_version: u32,
    #[serde(flatten)]
    rest: TraceMetadata,
}

#[derive(Deserialize)]
struct KernelRecordIn {
    id: KernelId,
    #[serde(default)]
    name: String,
    num_ctas: u32,
    warps_per_cta: u32,
    cta_duration_ns: Nanos,
    reads: Option<SegmentList>,
    writes: Option<SegmentList>,
}

/// Reads a trace file written by [`save_trace`] (or by hand).
pub fn load_trace(path: impl AsRef<Path>) -> Result<WorkloadTrace, TraceError> {
    let file = File::open(path.as_ref())?;
    read_trace(BufReader::new(file))
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<WorkloadTrace, TraceError> {
    let mut metadata = None;
    let mut kernels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if metadata.is_none() {
            let meta: MetadataLineIn =
                serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: line_no, message: e.to_string() })?;
            if meta.format_version != TRACE_FORMAT_VERSION {
                return Err(TraceError::UnsupportedVersion(meta.format_version));
            }
            metadata = Some(meta.rest);
            continue;
        }
        let rec: KernelRecordIn =
            serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: line_no, message: e.to_string() })?;
        let expected = kernels.len();
        if rec.id != expected {
            return Err(TraceError::IdDensity { line: line_no, expected, found: rec.id });
        }
        let (reads, writes) = match (rec.reads, rec.writes) {
            (Some(r), Some(w)) => (r, w),
            (r, _) => (r.unwrap_or_default(), SegmentList::whole_memory()),
        };
        let kernel = KernelSpec {
            id: rec.id,
            name: rec.name,
            num_ctas: rec.num_ctas,
            warps_per_cta: rec.warps_per_cta,
            cta_duration_ns: rec.cta_duration_ns,
            reads,
            writes,
        };
        kernel.validate().map_err(|source| TraceError::Invalid { line: line_no, source })?;
        kernels.push(kernel);
    }
    let metadata = metadata.ok_or(TraceError::MissingMetadata)?;
    Ok(WorkloadTrace { kernels, metadata })
}

pub fn save_trace(trace: &WorkloadTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_trace(trace, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(trace: &WorkloadTrace, mut out: W) -> Result<(), TraceError> {
    let meta = MetadataLineOut {
        format_version: TRACE_FORMAT_VERSION,
        generator: &trace.metadata.generator,
        seed: trace.metadata.seed,
        params: &trace.metadata.params,
    };
    serde_json::to_writer(&mut out, &meta).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for k in &trace.kernels {
        serde_json::to_writer(&mut out, k).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Machine capacity. CTA and warp limits stand in for the full set of
/// per-SM occupancy limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpuConfig {
    pub sm_count: u32,
    pub max_ctas_per_sm: u32,
    pub max_warps_per_sm: u32,
    pub clock_ghz: f64,
}

impl GpuConfig {
    /// Ampere-class part used for the hardware-scheduler experiments:
    /// 46 SMs at 1.4 GHz.
    pub fn rtx3070() -> Self {
        GpuConfig { sm_count: 46, max_ctas_per_sm: 16, max_warps_per_sm: 48, clock_ghz: 1.4 }
    }

    /// 28 SMs at 1.3 GHz.
    pub fn rtx3060() -> Self {
        GpuConfig { sm_count: 28, max_ctas_per_sm: 16, max_warps_per_sm: 48, clock_ghz: 1.3 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "rtx3070" => Some(Self::rtx3070()),
            "rtx3060" => Some(Self::rtx3060()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sm_count == 0 || self.max_ctas_per_sm == 0 || self.max_warps_per_sm == 0 {
            return Err(ModelError::InvalidGpu("SM, CTA and warp limits must be positive".into()));
        }
        if !(self.clock_ghz.is_finite() && self.clock_mhz() > 0) {
            return Err(ModelError::InvalidGpu(format!("bad clock {} GHz", self.clock_ghz)));
        }
        Ok(())
    }

    pub fn total_cta_slots(&self) -> u64 {
        self.sm_count as u64 * self.max_ctas_per_sm as u64
    }

    pub fn total_warp_slots(&self) -> u64 {
        self.sm_count as u64 * self.max_warps_per_sm as u64
    }

    /// Clock rounded to whole MHz so cycle conversions stay in integers.
    pub fn clock_mhz(&self) -> u64 {
        (self.clock_ghz * 1000.0).round().max(0.0) as u64
    }

    /// `ceil(cycles / clock_ghz)` nanoseconds.
    pub fn cycles_to_ns(&self, cycles: u64) -> Nanos {
        (cycles * 1000).div_ceil(self.clock_mhz())
    }

    /// CTAs of this width that fit on one SM at once.
    pub fn ctas_per_sm_for(&self, warps_per_cta: u32) -> u32 {
        self.max_ctas_per_sm.min(self.max_warps_per_sm / warps_per_cta.max(1))
    }

    /// Runtime of `kernel` alone on an idle GPU: full waves of CTAs.
    pub fn standalone_duration(&self, kernel: &KernelSpec) -> Nanos {
        let per_wave = self.ctas_per_sm_for(kernel.warps_per_cta) as u64 * self.sm_count as u64;
        if per_wave == 0 {
            return Nanos::MAX;
        }
        (kernel.num_ctas as u64).div_ceil(per_wave) * kernel.cta_duration_ns
    }
}

impl Default for GpuConfig {
    fn default() -> Self {
        Self::rtx3070()
    }
}

/// One measured point of host dependency-check cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepcheckPoint {
    pub window: usize,
    pub segments: usize,
    pub ns: Nanos,
}

/// Cost model for host- and device-side scheduling work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverheadConfig {
    /// Host time to launch one kernel into a stream.
    pub launch_ns: Nanos,
    /// Host time to wake up from a stream synchronize.
    pub sync_ns: Nanos,
    /// Measured dependency-check cost by window size and segment count.
    pub depcheck_table: Vec<DepcheckPoint>,
    pub hw_insert_cycles_per_slot: u64,
    pub hw_update_cycles_per_slot: u64,
    /// Cost of one pairwise segment comparison when building a full DAG ahead of time.
    pub dag_build_ns_per_edge_check: f64,
    /// Host time to resolve a kernel's segments and push its launch packet.
    pub cpu_dispatch_ns: Nanos,
}

impl OverheadConfig {
    pub fn default_depcheck_table() -> Vec<DepcheckPoint> {
        vec![
            DepcheckPoint { window: 16, segments: 6, ns: 410 },
            DepcheckPoint { window: 16, segments: 10, ns: 700 },
            DepcheckPoint { window: 32, segments: 6, ns: 510 },
            DepcheckPoint { window: 32, segments: 10, ns: 1640 },
        ]
    }

    /// Every duration multiplied by `factor`. Cycle counts are left alone.
    pub fn scaled(&self, factor: u64) -> Self {
        OverheadConfig {
            launch_ns: self.launch_ns * factor,
            sync_ns: self.sync_ns * factor,
            depcheck_table: self.depcheck_table.iter().map(|p| DepcheckPoint { ns: p.ns * factor, ..*p }).collect(),
            hw_insert_cycles_per_slot: self.hw_insert_cycles_per_slot,
            hw_update_cycles_per_slot: self.hw_update_cycles_per_slot,
            dag_build_ns_per_edge_check: self.dag_build_ns_per_edge_check * factor as f64,
            cpu_dispatch_ns: self.cpu_dispatch_ns * factor,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depcheck_table.is_empty() {
            return Err(ModelError::InvalidOverheads("dependency-check table is empty".into()));
        }
        if !(self.dag_build_ns_per_edge_check.is_finite() && self.dag_build_ns_per_edge_check >= 0.0) {
            return Err(ModelError::InvalidOverheads(
                "dag_build_ns_per_edge_check must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            launch_ns: 5_000,
            sync_ns: 5_000,
            depcheck_table: Self::default_depcheck_table(),
            hw_insert_cycles_per_slot: 1,
            hw_update_cycles_per_slot: 1,
            dag_build_ns_per_edge_check: 4.9,
            cpu_dispatch_ns: 5_000,
        }
    }
}
