//! Experiment configs: a workload, a GPU, overheads and a list of policies,
//! repeated over consecutive seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depcheck::DependencyMode;
use crate::engine::SimReport;
use crate::error::ExperimentError;
use crate::metrics::{compare, ComparisonReport, OutputFormat, RunContext};
use crate::model::{load_trace, GpuConfig, OverheadConfig, WorkloadTrace};
use crate::policies::{run_policy, PolicyKind, PolicyRun};
use crate::workloads::{generate, GeneratorParams};

/// Environment variable capping how many simulations run at once.
pub const THREADS_ENV: &str = "ACS_SIM_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadSource {
    Trace { trace: PathBuf },
    Generate(GeneratorParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GpuSpec {
    Preset(String),
    Custom(GpuConfig),
}

impl GpuSpec {
    pub fn resolve(&self) -> Result<GpuConfig, ExperimentError> {
        let gpu = match self {
            GpuSpec::Preset(name) => GpuConfig::by_name(name)
                .ok_or_else(|| ExperimentError::Invalid(format!("unknown GPU preset {name:?}")))?,
            GpuSpec::Custom(g) => g.clone(),
        };
        gpu.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        Ok(gpu)
    }
}

impl Default for GpuSpec {
    fn default() -> Self {
        GpuSpec::Preset("rtx3070".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub workload: WorkloadSource,
    #[serde(default)]
    pub gpu: GpuSpec,
    #[serde(default)]
    pub overheads: OverheadConfig,
    pub policies: Vec<PolicyKind>,
    /// Defaults to the serial policy.
    #[serde(default)]
    pub baseline: Option<PolicyKind>,
    #[serde(default)]
    pub mode: DependencyMode,
    #[serde(default = "one")]
    pub repetitions: u32,
    /// First seed; repetition `r` uses `seed + r`. Defaults to the
    /// workload's own seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Inputs sharing one ahead-of-time graph.
    #[serde(default = "one")]
    pub graph_reuse: u32,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative trace paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let WorkloadSource::Trace { trace } = &mut cfg.workload {
            if trace.is_relative() {
                if let Some(dir) = path.parent() {
                    *trace = dir.join(&*trace);
                }
            }
        }
        Ok(cfg)
    }

    pub fn baseline(&self) -> PolicyKind {
        self.baseline.clone().unwrap_or(PolicyKind::SerialSingleStream)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.policies.is_empty() {
            return Err(ExperimentError::Invalid("at least one policy is required".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::Invalid("repetitions must be at least 1".into()));
        }
        if self.graph_reuse == 0 {
            return Err(ExperimentError::Invalid("graph_reuse must be at least 1".into()));
        }
        self.overheads.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        self.gpu.resolve()?;
        if let WorkloadSource::Generate(p) = &self.workload {
            p.validate()?;
        }
        Ok(())
    }

    /// Replaces every windowed policy with one copy per window size.
    pub fn sweep_windows(&mut self, sizes: &[usize]) {
        let mut out: Vec<PolicyKind> = Vec::new();
        for p in &self.policies {
            let expanded: Vec<PolicyKind> = match *p {
                PolicyKind::AcsSw { scheduler_threads, .. } => {
                    sizes.iter().map(|&window_n| PolicyKind::AcsSw { scheduler_threads, window_n }).collect()
                }
                PolicyKind::AcsHw { scheduled_list_m, .. } => sizes
                    .iter()
                    .map(|&window_n| PolicyKind::AcsHw {
                        window_n,
                        scheduled_list_m: scheduled_list_m.filter(|&m| m >= window_n),
                    })
                    .collect(),
                _ => vec![p.clone()],
            };
            for e in expanded {
                if !out.contains(&e) {
                    out.push(e);
                }
            }
        }
        self.policies = out;
    }

    fn first_seed(&self) -> u64 {
        match (&self.seed, &self.workload) {
            (Some(s), _) => *s,
            (None, WorkloadSource::Generate(p)) => p.seed,
            (None, WorkloadSource::Trace { .. }) => 0,
        }
    }

    fn workload_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.workload {
            WorkloadSource::Generate(p) => p.kind.name().to_string(),
            WorkloadSource::Trace { trace } => {
                trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            }
        }
    }
}

/// Worker count: `ACS_SIM_THREADS` if set and positive, else all cores.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every policy on every repetition and returns one report per
/// repetition, in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ComparisonReport>, ExperimentError> {
    cfg.validate()?;
    let gpu = cfg.gpu.resolve()?;
    let baseline = cfg.baseline();
    let mut policies = cfg.policies.clone();
    if !policies.contains(&baseline) {
        policies.insert(0, baseline.clone());
    }
    let first_seed = cfg.first_seed();
    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|r| first_seed.wrapping_add(r)).collect();

    let traces: Vec<WorkloadTrace> = match &cfg.workload {
        WorkloadSource::Trace { trace } => {
            let t = load_trace(trace)?;
            vec![t; seeds.len()]
        }
        WorkloadSource::Generate(p) => {
            seeds.iter().map(|&s| generate(&GeneratorParams { seed: s, ..p.clone() })).collect::<Result<_, _>>()?
        }
    };

    let cells: Vec<(usize, usize)> = (0..seeds.len()).flat_map(|r| (0..policies.len()).map(move |p| (r, p))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let results: Vec<SimReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(r, p)| {
                let run = PolicyRun::new(&policies[p], &traces[r], &gpu, &cfg.overheads)
                    .with_mode(cfg.mode)
                    .with_graph_reuse(cfg.graph_reuse)
                    .without_event_log();
                let run = PolicyRun { seed: seeds[r], ..run };
                run_policy(&run)
            })
            .collect::<Result<_, _>>()
    })?;

    let mut results = results.into_iter();
    let mut reports = Vec::with_capacity(seeds.len());
    for (r, &seed) in seeds.iter().enumerate() {
        let runs: Vec<(PolicyKind, SimReport)> =
            policies.iter().cloned().zip(results.by_ref().take(policies.len())).collect();
        let mut metadata = BTreeMap::new();
        metadata.insert("gpu".to_string(), serde_json::to_value(&gpu).expect("gpu serializes"));
        metadata.insert("overheads".to_string(), serde_json::to_value(&cfg.overheads).expect("overheads serialize"));
        metadata.insert("mode".to_string(), serde_json::Value::from(cfg.mode.name()));
        metadata.insert("graph_reuse".to_string(), serde_json::Value::from(cfg.graph_reuse));
        metadata.insert("generator".to_string(), serde_json::Value::from(traces[r].metadata.generator.clone()));
        metadata.insert(
            "workload_params".to_string(),
            serde_json::to_value(&traces[r].metadata.params).expect("params serialize"),
        );
        let ctx = RunContext { workload: cfg.workload_name(), seed, metadata };
        reports.push(compare(&runs, &baseline, &gpu, &ctx)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
        repetitions = 2
        seed = 5

        [workload]
        kind = "irregular"
        n_kernels = 30

        [[policies]]
        policy = "serial"

        [[policies]]
        policy = "acs-hw"
        window_n = 16
    "#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.gpu.resolve().unwrap(), GpuConfig::rtx3070());
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].seed, 5);
        assert_eq!(reports[1].seed, 6);
        assert_eq!(reports[0].rows.len(), 2);
        assert!(reports.iter().all(|r| r.valid));
    }

    #[test]
    fn rejects_empty_policy_list() {
        let text = "policies = []\n[workload]\nkind = \"chain\"\n";
        assert!(matches!(ExperimentConfig::from_toml(text), Err(ExperimentError::Invalid(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = "policies = [{policy = \"serial\"}]\nbogus = 1\n[workload]\nkind = \"chain\"\n";
        assert!(matches!(ExperimentConfig::from_toml(text), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn window_sweep_expands_windowed_policies() {
        let mut cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        cfg.sweep_windows(&[16, 32]);
        let labels: Vec<String> = cfg.policies.iter().map(|p| p.label()).collect();
        assert_eq!(labels, ["serial", "acs-hw-n16-m64", "acs-hw-n32-m64"]);
    }
}
