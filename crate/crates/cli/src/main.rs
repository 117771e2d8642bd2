//! `acs-sim`: generate workload traces, run scheduling experiments and
//! inspect trace dependency graphs.
//!
//! Machine-readable output goes to stdout; progress and errors go to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acs_core::metrics::write_reports;
use acs_core::workloads::generate_with_dag;
use acs_core::*;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "acs-sim", version, about = "Out-of-order GPU kernel scheduling simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Seed; for `run`, the first repetition's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (trace for `generate`, report for `run`).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Report format: csv or json [default: the config's, else csv].
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Dependency rule: `full` also orders reads after earlier writes,
    /// `paper` only checks later writes [default: full].
    #[arg(long, global = true)]
    mode: Option<DependencyMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace and print a JSON summary.
    Generate {
        /// chain, fork-join, irregular, sim-engine or dynamic-dnn.
        #[arg(long)]
        kind: WorkloadKind,
        /// Kernel count.
        #[arg(long)]
        n: usize,
        /// Fork-join branches, sim-engine lanes or cells per DNN block
        /// [default: the preset's].
        #[arg(long)]
        width: Option<usize>,
        /// DNN input selecting the active cells [default: --seed].
        #[arg(long)]
        input_seed: Option<u64>,
    },
    /// Run an experiment config and emit one row per policy and repetition.
    ///
    /// Exits with status 2 if any run breaks a dependency. Worker count is
    /// capped by the ACS_SIM_THREADS environment variable.
    #[command(after_long_help = CONFIG_HELP)]
    Run {
        config: PathBuf,
        /// Replace every windowed policy with one copy per window size,
        /// e.g. `--window 16,32`.
        #[arg(long, value_delimiter = ',')]
        window: Vec<usize>,
        /// Override the config's repetition count.
        #[arg(long)]
        repetitions: Option<u32>,
    },
    /// Print dependency-graph statistics for a trace as JSON.
    Validate {
        trace: PathBuf,
        /// GPU preset used for the critical path (rtx3070, rtx3060).
        #[arg(long, default_value = "rtx3070")]
        gpu: String,
    },
}

const CONFIG_HELP: &str = r#"Config file (TOML):

  name = "ant"              # workload label in reports [default: workload kind or trace file stem]
  repetitions = 1           # seeds seed, seed+1, ...
  seed = 0                  # first seed [default: the workload's seed]
  mode = "full"             # or "paper"
  graph_reuse = 1           # inputs sharing one ahead-of-time graph
  gpu = "rtx3070"           # or "rtx3060", or a table:
                            # { sm_count, max_ctas_per_sm, max_warps_per_sm, clock_ghz }
  baseline = { policy = "serial" }

  [workload]                # either trace = "path.jsonl" (relative to the config) or generator
  kind = "sim-engine"       # chain | fork-join | irregular | sim-engine | dynamic-dnn
  n_kernels = 2000          # omitted generator keys take the kind's preset values:
                            # ctas, max_ctas, warps_per_cta, cta_duration_ns, edge_density,
                            # max_fan_in, lookback, width, mean_burst, segments_per_kernel,
                            # address_space_bytes, seed, input_seed

  [overheads]               # all optional
  launch_ns = 5000
  sync_ns = 5000
  cpu_dispatch_ns = 5000
  dag_build_ns_per_edge_check = 4.9
  hw_insert_cycles_per_slot = 1
  hw_update_cycles_per_slot = 1
  depcheck_table = [        # host dependency-check cost; interpolated by segment count
    { window = 16, segments = 6, ns = 410 }, { window = 16, segments = 10, ns = 700 },
    { window = 32, segments = 6, ns = 510 }, { window = 32, segments = 10, ns = 1640 },
  ]

  [[policies]]              # one table per policy
  policy = "serial"
  [[policies]]
  policy = "multi-stream"   # streams = 4
  [[policies]]
  policy = "dag-aot"
  [[policies]]
  policy = "acs-sw"         # scheduler_threads = 8, window_n = 32
  [[policies]]
  policy = "acs-hw"         # window_n = 32, scheduled_list_m = max(64, window_n)

  [output]
  path = "out.csv"          # [default: stdout]
  format = "csv"            # or "json"
"#;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { kind, n, width, input_seed } => cmd_generate(&cli.global, kind, n, width, input_seed),
        Command::Run { ref config, ref window, repetitions } => cmd_run(&cli.global, config, window, repetitions),
        Command::Validate { ref trace, ref gpu } => cmd_validate(&cli.global, trace, gpu),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn median(mut v: Vec<u32>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] as f64 } else { (v[m - 1] as f64 + v[m] as f64) / 2.0 })
}

fn cmd_generate(
    g: &GlobalOpts,
    kind: WorkloadKind,
    n: usize,
    width: Option<usize>,
    input_seed: Option<u64>,
) -> Result<ExitCode> {
    let seed = g.seed.unwrap_or(0);
    let mut params = GeneratorParams::preset(kind, n, seed);
    if let Some(w) = width {
        params.width = w;
        if kind == WorkloadKind::ForkJoin {
            params.max_fan_in = w;
        }
    }
    params.input_seed = input_seed;
    let (trace, dag) = generate_with_dag(&params).context("generating trace")?;
    let path = g.output.as_deref().context("--output is required for generate")?;
    save_trace(&trace, path).with_context(|| format!("writing {}", path.display()))?;
    let summary = json!({
        "path": path,
        "kind": kind.name(),
        "seed": seed,
        "kernels": trace.len(),
        "edges": dag.edge_count(),
        "median_ctas": median(trace.kernels.iter().map(|k| k.num_ctas).collect()),
        "trace_hash": trace.content_hash(),
    });
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(g: &GlobalOpts, config: &Path, windows: &[usize], repetitions: Option<u32>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if !windows.is_empty() {
        cfg.sweep_windows(windows);
    }
    if let Some(seed) = g.seed {
        cfg.seed = Some(seed);
    }
    if let Some(mode) = g.mode {
        cfg.mode = mode;
    }
    if let Some(r) = repetitions {
        cfg.repetitions = r;
    }
    if let Some(f) = g.format {
        cfg.output.format = f;
    }
    if let Some(p) = &g.output {
        cfg.output.path = Some(p.clone());
    }
    cfg.validate()?;
    eprintln!(
        "running {} policies x {} repetitions ({} dependency mode)",
        cfg.policies.len(),
        cfg.repetitions,
        cfg.mode.name()
    );
    let reports = run_experiment(&cfg)?;
    match &cfg.output.path {
        Some(p) => {
            emit(&reports, cfg.output.format, p).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            write_reports(&reports, cfg.output.format, &mut out)?;
            out.flush()?;
        }
    }
    let bad: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.rows.iter().filter(|row| !row.legality_ok).map(|row| format!("{} (seed {})", row.policy, row.seed))
        })
        .collect();
    if bad.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("legality check failed for: {}", bad.join(", "));
        Ok(ExitCode::from(2))
    }
}

fn cmd_validate(g: &GlobalOpts, path: &Path, gpu: &str) -> Result<ExitCode> {
    let trace = load_trace(path).with_context(|| format!("loading {}", path.display()))?;
    let Some(gpu) = GpuConfig::by_name(gpu) else { bail!("unknown GPU preset {gpu:?} (rtx3070, rtx3060)") };
    let mode = g.mode.unwrap_or_default();
    let dag = true_dependencies(&trace, mode);
    let full = true_dependencies(&trace, DependencyMode::Full);
    let paper = true_dependencies(&trace, DependencyMode::PaperFaithful);
    let summary = json!({
        "path": path,
        "kernels": trace.len(),
        "mode": mode.name(),
        "edges": dag.edge_count(),
        "critical_path_ns": critical_path_ns(&dag, &trace, &gpu)?,
        "max_width": dag.max_level_width()?,
        "full_edges": full.edge_count(),
        "paper_edges": paper.edge_count(),
        "mode_diff_edges": full.edges().symmetric_difference(paper.edges()).count(),
        "trace_hash": trace.content_hash(),
    });
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}
