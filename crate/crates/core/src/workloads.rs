//! Synthetic workload generators and the ground-truth dependency graph.
//!
//! Every generator first samples a DAG in program order and then lays out
//! memory so that the segment overlaps reproduce exactly that DAG: each
//! kernel writes fresh, disjoint buffers and reads sub-ranges of its chosen
//! predecessors' outputs plus shared read-only parameter buffers. Reads of
//! the same buffer by different kernels never create edges.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::depcheck::DependencyMode;
use crate::error::{DepcheckError, WorkloadError};
use crate::model::{GpuConfig, KernelId, KernelSpec, MemSegment, Nanos, SegmentList, TraceMetadata, WorkloadTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    Chain,
    ForkJoin,
    #[serde(alias = "irregular")]
    IrregularDag,
    #[serde(alias = "sim-engine")]
    SimEngineLike,
    #[serde(alias = "dynamic-dnn")]
    DynamicDnnLike,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Chain => "chain",
            WorkloadKind::ForkJoin => "fork-join",
            WorkloadKind::IrregularDag => "irregular",
            WorkloadKind::SimEngineLike => "sim-engine",
            WorkloadKind::DynamicDnnLike => "dynamic-dnn",
        }
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chain" => Ok(WorkloadKind::Chain),
            "fork-join" => Ok(WorkloadKind::ForkJoin),
            "irregular" | "irregular-dag" => Ok(WorkloadKind::IrregularDag),
            "sim-engine" | "sim-engine-like" => Ok(WorkloadKind::SimEngineLike),
            "dynamic-dnn" | "dynamic-dnn-like" => Ok(WorkloadKind::DynamicDnnLike),
            other => {
                Err(format!("unknown workload kind {other:?} (chain, fork-join, irregular, sim-engine, dynamic-dnn)"))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CtaDistribution {
    /// `1 + Geometric(p)` with `p` chosen so the median is `median`.
    Geometric {
        median: u32,
    },
    Uniform {
        min: u32,
        max: u32,
    },
    Fixed {
        ctas: u32,
    },
}

/// Generator settings. When deserialized, fields left out take the values
/// of the preset for `kind` (irregular if `kind` is absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(remote = "Self", deny_unknown_fields)]
pub struct GeneratorParams {
    pub kind: WorkloadKind,
    pub n_kernels: usize,
    pub ctas: CtaDistribution,
    pub max_ctas: u32,
    /// Inclusive range.
    pub warps_per_cta: [u32; 2],
    /// Inclusive range.
    pub cta_duration_ns: [Nanos; 2],
    /// Irregular: probability of each edge within the lookback.
    /// Sim-engine: probability that a kernel also joins other lanes.
    pub edge_density: f64,
    pub max_fan_in: usize,
    /// Irregular: how far back predecessors may be.
    pub lookback: usize,
    /// Fork-join branch count, sim-engine lane count, or DNN cells per block.
    pub width: usize,
    /// Sim-engine: mean number of consecutive kernels issued from one lane.
    pub mean_burst: f64,
    /// Inclusive range of read plus write segments per kernel.
    pub segments_per_kernel: [usize; 2],
    pub address_space_bytes: u64,
    pub seed: u64,
    /// Dynamic DNN: selects the execution path through a fixed architecture.
    /// Defaults to `seed`.
    pub input_seed: Option<u64>,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            kind: WorkloadKind::IrregularDag,
            n_kernels: 100,
            ctas: CtaDistribution::Geometric { median: 40 },
            max_ctas: 4096,
            warps_per_cta: [1, 8],
            cta_duration_ns: [2_000, 10_000],
            edge_density: 0.3,
            max_fan_in: 3,
            lookback: 8,
            width: 4,
            mean_burst: 4.0,
            segments_per_kernel: [2, 8],
            address_space_bytes: 1 << 40,
            seed: 0,
            input_seed: None,
        }
    }
}

impl Serialize for GeneratorParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GeneratorParams::serialize(self, serializer)
    }
}

impl<'de> Deserialize<'de> for GeneratorParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        use serde_json::{Map, Value};
        let given = Map::<String, Value>::deserialize(deserializer)?;
        let kind = match given.get("kind") {
            Some(v) => WorkloadKind::deserialize(v).map_err(D::Error::custom)?,
            None => WorkloadKind::IrregularDag,
        };
        let base = GeneratorParams::preset(kind, GeneratorParams::default().n_kernels, 0);
        let Value::Object(mut merged) = serde_json::to_value(&base).map_err(D::Error::custom)? else {
            return Err(D::Error::custom("generator params must serialize to a map"));
        };
        merged.extend(given);
        GeneratorParams::deserialize(Value::Object(merged)).map_err(D::Error::custom)
    }
}

impl GeneratorParams {
    /// Preset for `kind`.
    pub fn preset(kind: WorkloadKind, n: usize, seed: u64) -> Self {
        match kind {
            WorkloadKind::Chain => Self::chain(n, seed),
            WorkloadKind::ForkJoin => Self::fork_join(n, GeneratorParams::default().width, seed),
            WorkloadKind::IrregularDag => Self::irregular(n, seed),
            WorkloadKind::SimEngineLike => Self::sim_engine(n, seed),
            WorkloadKind::DynamicDnnLike => Self::dynamic_dnn(n, seed),
        }
    }

    pub fn chain(n: usize, seed: u64) -> Self {
        GeneratorParams { kind: WorkloadKind::Chain, n_kernels: n, seed, ..Default::default() }
    }

    pub fn fork_join(n: usize, width: usize, seed: u64) -> Self {
        GeneratorParams {
            kind: WorkloadKind::ForkJoin,
            n_kernels: n,
            width,
            max_fan_in: width,
            seed,
            ..Default::default()
        }
    }

    pub fn irregular(n: usize, seed: u64) -> Self {
        GeneratorParams { kind: WorkloadKind::IrregularDag, n_kernels: n, seed, ..Default::default() }
    }

    /// Physics-simulation-like stream: thousands of small kernels
    /// (geometric CTA counts, median 40) of 896 to 1024 threads, issued in
    /// bursts from seven interleaved lanes.
    pub fn sim_engine(n: usize, seed: u64) -> Self {
        GeneratorParams {
            kind: WorkloadKind::SimEngineLike,
            n_kernels: n,
            warps_per_cta: [28, 32],
            edge_density: 0.1,
            width: 7,
            mean_burst: 28.0,
            seed,
            ..Default::default()
        }
    }

    /// Input-dependent network: blocks of up to three alternative cells
    /// whose activation is chosen per input.
    pub fn dynamic_dnn(n: usize, seed: u64) -> Self {
        GeneratorParams {
            kind: WorkloadKind::DynamicDnnLike,
            n_kernels: n,
            ctas: CtaDistribution::Geometric { median: 64 },
            warps_per_cta: [2, 8],
            cta_duration_ns: [8_000, 30_000],
            width: 3,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParams(m.to_string()));
        if self.n_kernels == 0 {
            return bad("n_kernels must be positive");
        }
        if self.warps_per_cta[0] == 0 || self.warps_per_cta[0] > self.warps_per_cta[1] {
            return bad("warps_per_cta must be a positive, ordered range");
        }
        if self.cta_duration_ns[0] == 0 || self.cta_duration_ns[0] > self.cta_duration_ns[1] {
            return bad("cta_duration_ns must be a positive, ordered range");
        }
        if self.max_ctas == 0 {
            return bad("max_ctas must be positive");
        }
        match self.ctas {
            CtaDistribution::Geometric { median: 0 } => return bad("median CTAs must be positive"),
            CtaDistribution::Uniform { min, max } if min == 0 || min > max => {
                return bad("CTA range must be positive and ordered")
            }
            CtaDistribution::Fixed { ctas: 0 } => return bad("fixed CTA count must be positive"),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad("edge_density must lie in [0, 1]");
        }
        if self.max_fan_in == 0 || self.lookback == 0 || self.width == 0 {
            return bad("max_fan_in, lookback and width must be positive");
        }
        if self.mean_burst.is_nan() || self.mean_burst < 1.0 {
            return bad("mean_burst must be at least 1");
        }
        if self.segments_per_kernel[0] == 0 || self.segments_per_kernel[0] > self.segments_per_kernel[1] {
            return bad("segments_per_kernel must be a positive, ordered range");
        }
        Ok(())
    }
}

/// Dependency graph over trace ids. Edges always point from a smaller id
/// to a larger one when built from a trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dag {
    n: usize,
    edges: BTreeSet<(KernelId, KernelId)>,
}

impl Dag {
    pub fn new(n: usize) -> Self {
        Dag { n, edges: BTreeSet::new() }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (KernelId, KernelId)>) -> Self {
        Dag { n, edges: edges.into_iter().collect() }
    }

    pub fn add_edge(&mut self, from: KernelId, to: KernelId) {
        self.edges.insert((from, to));
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<(KernelId, KernelId)> {
        &self.edges
    }

    pub fn predecessors(&self) -> Vec<Vec<KernelId>> {
        let mut preds = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            preds[b].push(a);
        }
        preds
    }

    pub fn successors(&self) -> Vec<Vec<KernelId>> {
        let mut succs = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            succs[a].push(b);
        }
        succs
    }

    /// Kahn topological order, or the first node found on a cycle.
    pub fn topological_order(&self) -> Result<Vec<KernelId>, DepcheckError> {
        let succs = self.successors();
        let mut indeg = vec![0usize; self.n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<KernelId>> =
            (0..self.n).filter(|&i| indeg[i] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &s in &succs[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(std::cmp::Reverse(s));
                }
            }
        }
        if order.len() < self.n {
            let stuck = (0..self.n).find(|&i| indeg[i] > 0).unwrap_or(0);
            return Err(DepcheckError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Size of the largest as-soon-as-possible level.
    pub fn max_level_width(&self) -> Result<usize, DepcheckError> {
        let order = self.topological_order()?;
        let preds = self.predecessors();
        let mut level = vec![0usize; self.n];
        for &v in &order {
            level[v] = preds[v].iter().map(|&p| level[p] + 1).max().unwrap_or(0);
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for l in level {
            *counts.entry(l).or_default() += 1;
        }
        Ok(counts.values().copied().max().unwrap_or(0))
    }
}

/// All pairs `(i, j)` with `i < j` where kernel `j` depends on kernel `i`.
///
/// Sweeps segment start points so only overlapping segment pairs are
/// examined.
pub fn true_dependencies(trace: &WorkloadTrace, mode: DependencyMode) -> Dag {
    #[derive(Clone, Copy)]
    struct Item {
        start: u64,
        end: u64,
        kernel: KernelId,
        write: bool,
    }
    let mut items: Vec<Item> = Vec::new();
    for k in &trace.kernels {
        for (list, write) in [(&k.reads, false), (&k.writes, true)] {
            for s in list.iter().filter(|s| s.size > 0) {
                items.push(Item { start: s.start, end: s.end(), kernel: k.id, write });
            }
        }
    }
    items.sort_by_key(|it| (it.start, it.kernel));
    let mut dag = Dag::new(trace.len());
    let mut active: Vec<Item> = Vec::new();
    for it in items {
        active.retain(|a| a.end > it.start);
        for a in &active {
            if a.kernel == it.kernel {
                continue;
            }
            let (earlier, later) = if a.kernel < it.kernel { (a, &it) } else { (&it, a) };
            let dependent = later.write || (mode == DependencyMode::Full && earlier.write);
            if dependent {
                dag.add_edge(earlier.kernel, later.kernel);
            }
        }
        active.push(it);
    }
    dag
}

/// Longest path through `dag`, weighting each kernel by its standalone
/// runtime on `gpu`.
pub fn critical_path_ns(dag: &Dag, trace: &WorkloadTrace, gpu: &GpuConfig) -> Result<Nanos, DepcheckError> {
    let order = dag.topological_order()?;
    let preds = dag.predecessors();
    let mut finish = vec![0 as Nanos; dag.node_count()];
    for &v in &order {
        let start = preds[v].iter().map(|&p| finish[p]).max().unwrap_or(0);
        finish[v] = start + gpu.standalone_duration(&trace.kernels[v]);
    }
    Ok(finish.into_iter().max().unwrap_or(0))
}

/// `ceil(sum of CTA·ns / CTA slots)`: no schedule can beat this.
pub fn cta_area_bound_ns(trace: &WorkloadTrace, gpu: &GpuConfig) -> Nanos {
    let area: u128 = trace.kernels.iter().map(|k| k.num_ctas as u128 * k.cta_duration_ns as u128).sum();
    area.div_ceil(gpu.total_cta_slots() as u128) as Nanos
}

pub fn generate(params: &GeneratorParams) -> Result<WorkloadTrace, WorkloadError> {
    generate_with_dag(params).map(|(t, _)| t)
}

/// Generates a trace together with the DAG it was built to realize.
pub fn generate_with_dag(params: &GeneratorParams) -> Result<(WorkloadTrace, Dag), WorkloadError> {
    params.validate()?;
    let mut b = Builder::new(params)?;
    match params.kind {
        WorkloadKind::Chain => {
            for i in 0..params.n_kernels {
                let preds: Vec<KernelId> = i.checked_sub(1).into_iter().collect();
                b.add_kernel(&preds, "chain")?;
            }
        }
        WorkloadKind::ForkJoin => build_fork_join(&mut b)?,
        WorkloadKind::IrregularDag => build_irregular(&mut b)?,
        WorkloadKind::SimEngineLike => build_sim_engine(&mut b)?,
        WorkloadKind::DynamicDnnLike => build_dynamic_dnn(&mut b)?,
    }
    let dag = Dag::from_edges(b.kernels.len(), b.edges.iter().copied());
    let mut metadata =
        TraceMetadata { generator: params.kind.name().to_string(), seed: Some(params.seed), params: BTreeMap::new() };
    if let serde_json::Value::Object(map) = serde_json::to_value(params).expect("params serialize") {
        metadata.params = map.into_iter().collect();
    }
    let trace = WorkloadTrace::new(b.kernels, metadata)?;
    Ok((trace, dag))
}

const PARAM_BUFFERS: usize = 16;
const ALIGN: u64 = 256;

struct Builder<'p> {
    params: &'p GeneratorParams,
    rng: ChaCha8Rng,
    kernels: Vec<KernelSpec>,
    edges: Vec<(KernelId, KernelId)>,
    next_addr: u64,
    param_buffers: Vec<MemSegment>,
    geometric: Option<Geometric>,
}

impl<'p> Builder<'p> {
    fn new(params: &'p GeneratorParams) -> Result<Self, WorkloadError> {
        let geometric = match params.ctas {
            CtaDistribution::Geometric { median } if median > 1 => {
                let p = 1.0 - 0.5f64.powf(1.0 / (median as f64 - 1.0));
                Some(Geometric::new(p).map_err(|e| WorkloadError::InvalidParams(e.to_string()))?)
            }
            _ => None,
        };
        let mut b = Builder {
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            kernels: Vec::with_capacity(params.n_kernels),
            edges: Vec::new(),
            next_addr: 0,
            param_buffers: Vec::new(),
            geometric,
        };
        for _ in 0..PARAM_BUFFERS {
            let size = b.rng.random_range(4..=256) * ALIGN;
            let seg = b.alloc(size)?;
            b.param_buffers.push(seg);
        }
        Ok(b)
    }

    fn full(&self) -> bool {
        self.kernels.len() >= self.params.n_kernels
    }

    fn alloc(&mut self, size: u64) -> Result<MemSegment, WorkloadError> {
        let limit = self.params.address_space_bytes;
        let start = self.next_addr;
        let end = start.checked_add(size).filter(|&e| e <= limit).ok_or(WorkloadError::AddressSpaceExhausted(limit))?;
        self.next_addr = end.next_multiple_of(ALIGN);
        Ok(MemSegment::new(start, size)?)
    }

    fn sample_ctas(&mut self) -> u32 {
        let raw = match self.params.ctas {
            CtaDistribution::Geometric { .. } => match &self.geometric {
                Some(g) => 1 + g.sample(&mut self.rng).min(u32::MAX as u64 - 1) as u32,
                None => 1,
            },
            CtaDistribution::Uniform { min, max } => self.rng.random_range(min..=max),
            CtaDistribution::Fixed { ctas } => ctas,
        };
        raw.min(self.params.max_ctas)
    }

    fn sample_shape(&mut self) -> (u32, u32, Nanos) {
        let ctas = self.sample_ctas();
        let [wlo, whi] = self.params.warps_per_cta;
        let [dlo, dhi] = self.params.cta_duration_ns;
        (ctas, self.rng.random_range(wlo..=whi), self.rng.random_range(dlo..=dhi))
    }

    fn add_kernel(&mut self, preds: &[KernelId], label: &str) -> Result<KernelId, WorkloadError> {
        let shape = self.sample_shape();
        self.add_kernel_shaped(preds, label, shape)
    }

    fn add_kernel_shaped(
        &mut self,
        preds: &[KernelId],
        label: &str,
        (num_ctas, warps_per_cta, cta_duration_ns): (u32, u32, Nanos),
    ) -> Result<KernelId, WorkloadError> {
        let id = self.kernels.len();
        let preds: BTreeSet<KernelId> = preds.iter().copied().filter(|&p| p < id).collect();
        let [smin, smax] = self.params.segments_per_kernel;
        let target = self.rng.random_range(smin..=smax).max(preds.len() + 1);

        let mut reads = SegmentList::new();
        for &p in &preds {
            let src = *self.kernels[p].writes.choose(&mut self.rng).expect("generated kernels write");
            let len = self.rng.random_range(1..=src.size);
            let off = self.rng.random_range(0..=src.size - len);
            reads.push(MemSegment::new(src.start + off, len)?);
            self.edges.push((p, id));
        }
        let n_writes = if target - reads.len() >= 2 && self.rng.random_bool(0.3) { 2 } else { 1 };
        while reads.len() + n_writes < target {
            let buf = *self.param_buffers.choose(&mut self.rng).expect("pool is non-empty");
            reads.push(buf);
        }
        let mut writes = SegmentList::new();
        for _ in 0..n_writes {
            let size = self.rng.random_range(4..=256) * ALIGN;
            writes.push(self.alloc(size)?);
        }
        self.kernels.push(KernelSpec {
            id,
            name: format!("{label}_{id}"),
            num_ctas,
            warps_per_cta,
            cta_duration_ns,
            reads,
            writes,
        });
        Ok(id)
    }
}

fn build_fork_join(b: &mut Builder) -> Result<(), WorkloadError> {
    let width = b.params.width;
    let mut source = b.add_kernel(&[], "fork")?;
    while !b.full() {
        let mut branches = Vec::with_capacity(width);
        for _ in 0..width {
            if b.full() {
                break;
            }
            branches.push(b.add_kernel(&[source], "branch")?);
        }
        if b.full() {
            break;
        }
        source = b.add_kernel(&branches, "join")?;
    }
    Ok(())
}

fn build_irregular(b: &mut Builder) -> Result<(), WorkloadError> {
    let p = b.params;
    for i in 0..p.n_kernels {
        let lo = i.saturating_sub(p.lookback);
        let mut preds: Vec<KernelId> = (lo..i).filter(|_| b.rng.random_bool(p.edge_density)).collect();
        if preds.len() > p.max_fan_in {
            preds.shuffle(&mut b.rng);
            preds.truncate(p.max_fan_in);
        }
        b.add_kernel(&preds, "node")?;
    }
    Ok(())
}

/// Interleaved lanes: each kernel continues the lane it was issued from,
/// sometimes also joining the latest kernels of other lanes. Lanes are
/// issued in bursts, so exposing cross-lane parallelism needs lookahead.
fn build_sim_engine(b: &mut Builder) -> Result<(), WorkloadError> {
    let p = b.params;
    let lanes = p.width;
    let mut last: Vec<Option<KernelId>> = vec![None; lanes];
    let mut lane = 0usize;
    let switch_p = 1.0 / p.mean_burst;
    for _ in 0..p.n_kernels {
        if lanes > 1 && b.rng.random_bool(switch_p) {
            let next = b.rng.random_range(0..lanes - 1);
            lane = if next >= lane { next + 1 } else { next };
        }
        let mut preds: Vec<KernelId> = last[lane].into_iter().collect();
        if b.rng.random_bool(p.edge_density) {
            let mut others: Vec<KernelId> = (0..lanes).filter(|&l| l != lane).filter_map(|l| last[l]).collect();
            others.shuffle(&mut b.rng);
            let room = p.max_fan_in.saturating_sub(preds.len());
            let take = b.rng.random_range(1..=room.max(1)).min(others.len()).min(room);
            preds.extend(others.into_iter().take(take));
        }
        let id = b.add_kernel(&preds, "sim")?;
        last[lane] = Some(id);
    }
    Ok(())
}

/// Blocks of alternative cells. Cell shapes come from `seed`; which cells run
/// comes from `input_seed`, so each input yields a different graph.
fn build_dynamic_dnn(b: &mut Builder) -> Result<(), WorkloadError> {
    let p = b.params;
    let cells_per_block = p.width.min(p.max_fan_in).max(1);
    // Architecture: enough blocks that any path selection reaches n kernels.
    let blocks = p.n_kernels;
    let mut arch_rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_a7c4);
    let mut input_rng =
        ChaCha8Rng::seed_from_u64(p.input_seed.unwrap_or(p.seed).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1);
    let mut prev: Option<KernelId> = None;
    for _ in 0..blocks {
        if b.full() {
            break;
        }
        let cells: Vec<Vec<(u32, u32, Nanos)>> = (0..cells_per_block)
            .map(|_| {
                let depth = arch_rng.random_range(1..=3);
                (0..depth)
                    .map(|_| {
                        std::mem::swap(&mut b.rng, &mut arch_rng);
                        let s = b.sample_shape();
                        std::mem::swap(&mut b.rng, &mut arch_rng);
                        s
                    })
                    .collect()
            })
            .collect();
        let mut active: Vec<usize> = (0..cells_per_block).filter(|_| input_rng.random_bool(0.5)).collect();
        if active.is_empty() {
            active.push(input_rng.random_range(0..cells_per_block));
        }
        let mut tails = Vec::new();
        for &c in &active {
            let mut last = prev;
            for &shape in &cells[c] {
                if b.full() {
                    return Ok(());
                }
                let preds: Vec<KernelId> = last.into_iter().collect();
                last = Some(b.add_kernel_shaped(&preds, "conv", shape)?);
            }
            tails.extend(last);
        }
        if tails.len() > 1 {
            if b.full() {
                return Ok(());
            }
            let join_shape = (arch_rng.random_range(4..=32), 4, p.cta_duration_ns[0]);
            prev = Some(b.add_kernel_shaped(&tails, "join", join_shape)?);
        } else {
            prev = tails.first().copied().or(prev);
        }
    }
    Ok(())
}
