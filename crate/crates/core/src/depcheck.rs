//! Memory-interval overlap and inter-kernel dependency determination.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::DepcheckError;
use crate::model::{DepcheckPoint, KernelId, KernelSpec, MemSegment, Nanos, OverheadConfig, SegmentList};

/// Which hazards count as dependencies.
///
/// `PaperFaithful` compares only the later kernel's writes against the
/// earlier kernel's reads and writes (WAR and WAW). `Full` also flags the
/// later kernel's reads against the earlier kernel's writes (RAW), which a
/// correct schedule needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DependencyMode {
    #[serde(rename = "paper")]
    PaperFaithful,
    #[default]
    #[serde(rename = "full")]
    Full,
}

impl DependencyMode {
    pub fn name(self) -> &'static str {
        match self {
            DependencyMode::PaperFaithful => "paper",
            DependencyMode::Full => "full",
        }
    }
}

impl std::str::FromStr for DependencyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" | "paper-faithful" => Ok(DependencyMode::PaperFaithful),
            "full" => Ok(DependencyMode::Full),
            other => Err(format!("unknown dependency mode {other:?} (expected paper or full)")),
        }
    }
}

/// Half-open interval intersection. Zero-size segments never overlap.
#[inline]
pub fn segments_overlap(a: &MemSegment, b: &MemSegment) -> bool {
    a.size > 0 && b.size > 0 && a.start < b.end() && a.end() > b.start
}

fn lists_overlap(a: &[MemSegment], b: &[MemSegment]) -> bool {
    a.iter().any(|x| b.iter().any(|y| segments_overlap(x, y)))
}

pub fn is_dependent(
    earlier_reads: &SegmentList,
    earlier_writes: &SegmentList,
    later_reads: &SegmentList,
    later_writes: &SegmentList,
    mode: DependencyMode,
) -> bool {
    if lists_overlap(later_writes, earlier_writes) || lists_overlap(later_writes, earlier_reads) {
        return true;
    }
    mode == DependencyMode::Full && lists_overlap(later_reads, earlier_writes)
}

/// Shorthand for [`is_dependent`] on two kernel specs.
pub fn kernels_dependent(earlier: &KernelSpec, later: &KernelSpec, mode: DependencyMode) -> bool {
    is_dependent(&earlier.reads, &earlier.writes, &later.reads, &later.writes, mode)
}

/// Ids among `others` that `candidate` must wait for.
///
/// Every id in `others` must precede the candidate in program order.
pub fn compute_upstream<'a, I>(
    candidate: &KernelSpec,
    others: I,
    mode: DependencyMode,
) -> Result<BTreeSet<KernelId>, DepcheckError>
where
    I: IntoIterator<Item = (KernelId, &'a SegmentList, &'a SegmentList)>,
{
    let mut upstream = BTreeSet::new();
    for (id, reads, writes) in others {
        if id >= candidate.id {
            return Err(DepcheckError::NotEarlier { candidate: candidate.id, other: id });
        }
        if is_dependent(reads, writes, &candidate.reads, &candidate.writes, mode) {
            upstream.insert(id);
        }
    }
    Ok(upstream)
}

/// [`compute_upstream`] over full kernel specs.
pub fn compute_upstream_of<'a, I>(
    candidate: &KernelSpec,
    others: I,
    mode: DependencyMode,
) -> Result<BTreeSet<KernelId>, DepcheckError>
where
    I: IntoIterator<Item = &'a KernelSpec>,
{
    compute_upstream(candidate, others.into_iter().map(|k| (k.id, &k.reads, &k.writes)), mode)
}

/// Number of pairwise segment comparisons needed to test `later` against
/// `earlier` under `mode`.
pub fn comparison_count(earlier: &KernelSpec, later: &KernelSpec, mode: DependencyMode) -> u64 {
    let mut n = later.writes.len() as u64 * (earlier.reads.len() + earlier.writes.len()) as u64;
    if mode == DependencyMode::Full {
        n += later.reads.len() as u64 * earlier.writes.len() as u64;
    }
    n
}

/// Host cost of checking one incoming kernel against `window_occupancy`
/// scheduled kernels.
///
/// Uses the row of the measured table whose window size is nearest the
/// occupancy (ties go to the larger window), interpolating linearly in the
/// segment count and clamping outside the measured range. An empty window
/// needs no comparisons and costs nothing.
pub fn estimate_depcheck_cost(window_occupancy: usize, total_segments: usize, overheads: &OverheadConfig) -> Nanos {
    if window_occupancy == 0 {
        return 0;
    }
    lookup_depcheck(&overheads.depcheck_table, window_occupancy, total_segments)
}

fn lookup_depcheck(table: &[DepcheckPoint], window: usize, segments: usize) -> Nanos {
    let Some(row_window) = table.iter().map(|p| p.window).min_by_key(|&w| (w.abs_diff(window), std::cmp::Reverse(w)))
    else {
        return 0;
    };
    let mut row: Vec<&DepcheckPoint> = table.iter().filter(|p| p.window == row_window).collect();
    row.sort_by_key(|p| p.segments);
    let first = row[0];
    let last = row[row.len() - 1];
    if segments <= first.segments {
        return first.ns;
    }
    if segments >= last.segments {
        return last.ns;
    }
    let hi = row.iter().position(|p| p.segments >= segments).expect("bounded above");
    let (a, b) = (row[hi - 1], row[hi]);
    if b.segments == segments {
        return b.ns;
    }
    let span = (b.segments - a.segments) as i128;
    let offset = (segments - a.segments) as i128;
    let delta = b.ns as i128 - a.ns as i128;
    // round half away from zero
    let num = delta * offset;
    let step = if num >= 0 { (num + span / 2) / span } else { (num - span / 2) / span };
    (a.ns as i128 + step).max(0) as Nanos
}
