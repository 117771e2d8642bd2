//! Cross-policy comparison and CSV/JSON emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{achieved_occupancy, SimReport};
use crate::error::ReportError;
use crate::model::{GpuConfig, Nanos};
use crate::policies::PolicyKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (csv, json)")),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub workload: String,
    pub seed: u64,
    pub policy: String,
    pub makespan_ns: Nanos,
    pub occupancy: f64,
    pub speedup: f64,
    pub construction_ns: Nanos,
    pub host_busy_ns: Nanos,
    pub legality_ok: bool,
}

/// Where a set of runs came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunContext {
    pub workload: String,
    pub seed: u64,
    /// Generator parameters, GPU, overheads and anything else needed to
    /// reproduce the runs.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub workload: String,
    pub seed: u64,
    pub baseline: String,
    pub trace_hash: String,
    /// False when any run broke a dependency.
    pub valid: bool,
    pub rows: Vec<PolicyRow>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ComparisonReport {
    pub fn row(&self, policy: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn speedup(&self, policy: &str) -> Option<f64> {
        self.row(policy).map(|r| r.speedup)
    }
}

/// Speedups are `makespan(baseline) / makespan(policy)`.
pub fn compare(
    runs: &[(PolicyKind, SimReport)],
    baseline: &PolicyKind,
    gpu: &GpuConfig,
    ctx: &RunContext,
) -> Result<ComparisonReport, ReportError> {
    let (_, first) = runs.first().ok_or(ReportError::Empty)?;
    for (_, r) in runs {
        if r.trace_hash != first.trace_hash {
            return Err(ReportError::TraceMismatch(first.trace_hash.clone(), r.trace_hash.clone()));
        }
    }
    let base = runs
        .iter()
        .find(|(k, _)| k == baseline)
        .map(|(_, r)| r.makespan_ns)
        .ok_or_else(|| ReportError::MissingBaseline(baseline.label()))?;
    let mut rows = Vec::with_capacity(runs.len());
    for (kind, r) in runs {
        let occupancy = if r.makespan_ns == 0 { 0.0 } else { achieved_occupancy(r, gpu)? };
        let speedup = if r.makespan_ns == base { 1.0 } else { base as f64 / r.makespan_ns as f64 };
        rows.push(PolicyRow {
            workload: ctx.workload.clone(),
            seed: ctx.seed,
            policy: kind.label(),
            makespan_ns: r.makespan_ns,
            occupancy,
            speedup,
            construction_ns: r.construction_ns,
            host_busy_ns: r.host_busy_ns,
            legality_ok: r.legality.ok(),
        });
    }
    Ok(ComparisonReport {
        workload: ctx.workload.clone(),
        seed: ctx.seed,
        baseline: baseline.label(),
        trace_hash: first.trace_hash.clone(),
        valid: rows.iter().all(|r| r.legality_ok),
        rows,
        metadata: ctx.metadata.clone(),
    })
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    valid: bool,
    reports: &'a [ComparisonReport],
}

/// Writes all reports: one CSV table, or one JSON document.
pub fn write_reports<W: Write>(
    reports: &[ComparisonReport],
    format: OutputFormat,
    mut out: W,
) -> Result<(), ReportError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for report in reports {
                for row in &report.rows {
                    w.serialize(row)?;
                }
            }
            if reports.iter().all(|r| r.rows.is_empty()) {
                w.write_record([
                    "workload",
                    "seed",
                    "policy",
                    "makespan_ns",
                    "occupancy",
                    "speedup",
                    "construction_ns",
                    "host_busy_ns",
                    "legality_ok",
                ])?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let doc = JsonDocument { valid: reports.iter().all(|r| r.valid), reports };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn emit(reports: &[ComparisonReport], format: OutputFormat, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_reports(reports, format, &mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Legality;

    fn report(makespan: Nanos, hash: &str) -> SimReport {
        SimReport { makespan_ns: makespan, trace_hash: hash.into(), ..Default::default() }
    }

    #[test]
    fn speedup_against_baseline() {
        let runs = vec![(PolicyKind::SerialSingleStream, report(44, "h")), (PolicyKind::acs_hw(32), report(24, "h"))];
        let r = compare(&runs, &PolicyKind::SerialSingleStream, &GpuConfig::default(), &RunContext::default()).unwrap();
        assert_eq!(r.speedup("serial"), Some(1.0));
        let s = r.speedup("acs-hw-n32-m64").unwrap();
        assert!((s - 44.0 / 24.0).abs() < 1e-12);
        assert_eq!(format!("{s:.2}"), "1.83");
        assert!(r.valid);
    }

    #[test]
    fn self_comparison_is_one() {
        let runs = vec![(PolicyKind::DagAheadOfTime, report(1234, "h"))];
        let r = compare(&runs, &PolicyKind::DagAheadOfTime, &GpuConfig::default(), &RunContext::default()).unwrap();
        assert_eq!(r.rows[0].speedup, 1.0);
    }

    #[test]
    fn errors() {
        let gpu = GpuConfig::default();
        let ctx = RunContext::default();
        let runs = vec![(PolicyKind::DagAheadOfTime, report(10, "a"))];
        assert!(matches!(
            compare(&runs, &PolicyKind::SerialSingleStream, &gpu, &ctx),
            Err(ReportError::MissingBaseline(_))
        ));
        let runs =
            vec![(PolicyKind::SerialSingleStream, report(10, "a")), (PolicyKind::DagAheadOfTime, report(10, "b"))];
        assert!(matches!(
            compare(&runs, &PolicyKind::SerialSingleStream, &gpu, &ctx),
            Err(ReportError::TraceMismatch(..))
        ));
        assert!(matches!(compare(&[], &PolicyKind::SerialSingleStream, &gpu, &ctx), Err(ReportError::Empty)));
    }

    #[test]
    fn illegal_run_invalidates() {
        let mut bad = report(10, "h");
        bad.legality = Legality { violations: 1, ..Default::default() };
        let runs = vec![(PolicyKind::SerialSingleStream, report(20, "h")), (PolicyKind::DagAheadOfTime, bad)];
        let r = compare(&runs, &PolicyKind::SerialSingleStream, &GpuConfig::default(), &RunContext::default()).unwrap();
        assert!(!r.valid);
    }
}
