//! Deterministic discrete-event model of the GPU side.
//!
//! Kernels become resident when a policy dispatches them. Resident kernels
//! issue CTAs greedily, oldest dispatch first, each CTA occupying one CTA slot
//! and `warps_per_cta` warp slots on the lowest-index SM that has room. A
//! kernel whose CTAs do not fit anywhere does not block younger kernels.
//! Every CTA runs for exactly `cta_duration_ns`.
//!
//! Policies drive the engine by pulling [`Notification`]s: kernel
//! completions and host timers they scheduled themselves. Events at equal
//! times are processed in insertion order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::depcheck::DependencyMode;
use crate::error::SimError;
use crate::model::{GpuConfig, KernelId, KernelSpec, Nanos};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Kernel became resident on the device.
    KernelDispatch,
    /// `detail` CTAs started on `sm_id`.
    CtaIssue,
    /// `detail` CTAs retired from `sm_id`.
    CtaRetire,
    KernelFinish,
    /// Host launch call started; `detail` is its cost.
    HostLaunch,
    /// Host woke from a synchronize; `detail` is its cost.
    HostSync,
    /// Host dependency check; `detail` is its cost.
    HostDepcheck,
    /// Host pushed a launch packet to the device queue; `detail` is its cost.
    HostDispatch,
    /// Kernel entered the scheduling window; `detail` is the upstream count.
    WindowInsert,
    /// Window processed a completion; `detail` is the number of kernels released.
    WindowUpdate,
    /// Ahead-of-time graph construction finished; `detail` is its cost.
    DagBuild,
}

/// One line of the exported event log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ns: Nanos,
    pub event_kind: EventKind,
    pub kernel_id: Option<KernelId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sm_id: Option<u32>,
    pub detail: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelTiming {
    pub dispatch_ns: Option<Nanos>,
    pub finish_ns: Option<Nanos>,
}

/// Post-hoc schedule legality against the trace's true dependencies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Legality {
    /// Mode whose edges the policy was obliged to respect.
    pub mode: DependencyMode,
    /// Edges of `mode` violated by the schedule.
    pub violations: usize,
    /// Full-mode edges violated. Nonzero only for runs scheduled in a weaker mode.
    pub full_mode_discrepancies: usize,
    /// Kernels missing from the timeline.
    pub missing_kernels: usize,
}

impl Legality {
    pub fn ok(&self) -> bool {
        self.violations == 0 && self.missing_kernels == 0
    }
}

/// Scheduler-structure high-water marks recorded by the window-based policies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub max_window_occupancy: usize,
    /// Largest distance from the oldest windowed kernel to a newly inserted one.
    pub max_scheduled_span: usize,
    pub blocked_insertions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub makespan_ns: Nanos,
    pub kernels: Vec<KernelTiming>,
    /// Integral of active warps over time, in warp·ns.
    pub active_warp_integral: u64,
    pub host_busy_ns: Nanos,
    pub construction_ns: Nanos,
    pub events: Vec<EventRecord>,
    pub trace_hash: String,
    pub legality: Legality,
    pub stats: PolicyStats,
}

impl SimReport {
    pub fn dispatch(&self, id: KernelId) -> Option<Nanos> {
        self.kernels.get(id).and_then(|t| t.dispatch_ns)
    }

    pub fn finish(&self, id: KernelId) -> Option<Nanos> {
        self.kernels.get(id).and_then(|t| t.finish_ns)
    }

    /// Kernel ids ordered by dispatch time (ties by id).
    pub fn dispatch_order(&self) -> Vec<KernelId> {
        let mut ids: Vec<KernelId> = (0..self.kernels.len()).filter(|&i| self.dispatch(i).is_some()).collect();
        ids.sort_by_key(|&i| (self.dispatch(i), i));
        ids
    }

    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Achieved occupancy: mean active warps over the whole makespan divided by
/// the GPU's warp capacity. Host-only intervals count in the denominator.
pub fn achieved_occupancy(report: &SimReport, gpu: &GpuConfig) -> Result<f64, SimError> {
    if report.makespan_ns == 0 {
        return Err(SimError::ZeroMakespan);
    }
    let capacity = report.makespan_ns as f64 * gpu.total_warp_slots() as f64;
    Ok(report.active_warp_integral as f64 / capacity)
}

/// Something a policy needs to react to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Notification {
    KernelFinished { kernel: KernelId, at: Nanos },
    Timer { token: u64, at: Nanos },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Arrive(KernelId),
    Retire { kernel: KernelId, sm: u32, ctas: u32 },
    Timer(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    at: Nanos,
    seq: u64,
    what: Pending,
}

#[derive(Clone, Copy, Debug, Default)]
struct SmState {
    ctas: u32,
    warps: u32,
}

#[derive(Clone, Copy, Debug, Default)]
struct ResidentKernel {
    requested: bool,
    dispatch_time: Option<Nanos>,
    finish_time: Option<Nanos>,
    ctas_remaining_to_dispatch: u32,
    ctas_in_flight: u32,
    ctas_retired: u32,
}

pub struct Engine<'t> {
    gpu: GpuConfig,
    kernels: &'t [KernelSpec],
    now: Nanos,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    sms: Vec<SmState>,
    free_cta_slots: u64,
    resident: Vec<ResidentKernel>,
    // resident kernels with CTAs left to issue, oldest dispatch first
    issuing: Vec<KernelId>,
    active_warps: u64,
    warp_integral: u64,
    last_finish: Nanos,
    unfinished: usize,
    log: Option<Vec<EventRecord>>,
}

impl<'t> Engine<'t> {
    pub fn new(gpu: &GpuConfig, kernels: &'t [KernelSpec]) -> Result<Self, SimError> {
        gpu.validate()?;
        Ok(Engine {
            gpu: gpu.clone(),
            kernels,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            sms: vec![SmState::default(); gpu.sm_count as usize],
            free_cta_slots: gpu.total_cta_slots(),
            resident: vec![ResidentKernel::default(); kernels.len()],
            issuing: Vec::new(),
            active_warps: 0,
            warp_integral: 0,
            last_finish: 0,
            unfinished: 0,
            log: Some(Vec::new()),
        })
    }

    /// Disables event recording. Timelines and metrics are unaffected.
    pub fn without_event_log(mut self) -> Self {
        self.log = None;
        self
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn gpu(&self) -> &GpuConfig {
        &self.gpu
    }

    pub fn kernels(&self) -> &'t [KernelSpec] {
        self.kernels
    }

    pub fn finish_time(&self, id: KernelId) -> Option<Nanos> {
        self.resident.get(id).and_then(|r| r.finish_time)
    }

    /// Kernels dispatched but not yet finished.
    pub fn unfinished(&self) -> usize {
        self.unfinished
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn log(&mut self, t_ns: Nanos, event_kind: EventKind, kernel_id: Option<KernelId>, detail: u64) {
        if let Some(log) = &mut self.log {
            log.push(EventRecord { t_ns, event_kind, kernel_id, sm_id: None, detail });
        }
    }

    fn log_sm(&mut self, event_kind: EventKind, kernel: KernelId, sm: u32, detail: u64) {
        let t_ns = self.now;
        if let Some(log) = &mut self.log {
            log.push(EventRecord { t_ns, event_kind, kernel_id: Some(kernel), sm_id: Some(sm), detail });
        }
    }

    fn push(&mut self, at: Nanos, what: Pending) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, what }));
    }

    /// Makes `id` resident at time `at` (now or later).
    pub fn dispatch_kernel(&mut self, id: KernelId, at: Nanos) -> Result<(), SimError> {
        let spec = self.kernels.get(id).ok_or(SimError::UnknownKernel(id))?;
        if at < self.now {
            return Err(SimError::DispatchInPast { kernel: id, at, now: self.now });
        }
        if spec.warps_per_cta > self.gpu.max_warps_per_sm {
            return Err(SimError::CtaTooWide {
                kernel: id,
                warps: spec.warps_per_cta,
                limit: self.gpu.max_warps_per_sm,
            });
        }
        let rec = &mut self.resident[id];
        if rec.requested {
            return Err(SimError::DuplicateDispatch(id));
        }
        rec.requested = true;
        self.unfinished += 1;
        if at == self.now {
            self.make_resident(id);
            self.issue();
        } else {
            self.push(at, Pending::Arrive(id));
        }
        Ok(())
    }

    /// Schedules a host-side timer that comes back as [`Notification::Timer`].
    pub fn schedule_timer(&mut self, at: Nanos, token: u64) {
        debug_assert!(at >= self.now, "timer in the past");
        self.push(at.max(self.now), Pending::Timer(token));
    }

    fn make_resident(&mut self, id: KernelId) {
        let num_ctas = self.kernels[id].num_ctas;
        let now = self.now;
        let rec = &mut self.resident[id];
        rec.dispatch_time = Some(now);
        rec.ctas_remaining_to_dispatch = num_ctas;
        self.issuing.push(id);
        self.log(now, EventKind::KernelDispatch, Some(id), num_ctas as u64);
    }

    fn advance_to(&mut self, t: Nanos) {
        debug_assert!(t >= self.now, "clock moved backwards");
        self.warp_integral += self.active_warps * (t - self.now);
        self.now = t;
    }

    fn issue(&mut self) {
        let max_ctas = self.gpu.max_ctas_per_sm;
        let max_warps = self.gpu.max_warps_per_sm;
        let mut i = 0;
        while i < self.issuing.len() && self.free_cta_slots > 0 {
            let k = self.issuing[i];
            let spec = &self.kernels[k];
            let width = spec.warps_per_cta;
            let retire_at = self.now + spec.cta_duration_ns;
            for sm in 0..self.sms.len() {
                let remaining = self.resident[k].ctas_remaining_to_dispatch;
                if remaining == 0 {
                    break;
                }
                let s = self.sms[sm];
                let fit = (max_ctas - s.ctas).min((max_warps - s.warps) / width).min(remaining);
                if fit == 0 {
                    continue;
                }
                self.sms[sm].ctas += fit;
                self.sms[sm].warps += fit * width;
                self.free_cta_slots -= fit as u64;
                self.active_warps += (fit * width) as u64;
                let rec = &mut self.resident[k];
                rec.ctas_remaining_to_dispatch -= fit;
                rec.ctas_in_flight += fit;
                self.push(retire_at, Pending::Retire { kernel: k, sm: sm as u32, ctas: fit });
                self.log_sm(EventKind::CtaIssue, k, sm as u32, fit as u64);
            }
            if self.resident[k].ctas_remaining_to_dispatch == 0 {
                self.issuing.remove(i);
            } else {
                i += 1;
            }
        }
    }

    /// Returns true when this retirement finished the kernel.
    fn retire(&mut self, kernel: KernelId, sm: u32, ctas: u32) -> bool {
        let width = self.kernels[kernel].warps_per_cta;
        let s = &mut self.sms[sm as usize];
        s.ctas -= ctas;
        s.warps -= ctas * width;
        self.free_cta_slots += ctas as u64;
        self.active_warps -= (ctas * width) as u64;
        let rec = &mut self.resident[kernel];
        rec.ctas_in_flight -= ctas;
        rec.ctas_retired += ctas;
        let done = rec.ctas_retired == self.kernels[kernel].num_ctas;
        self.log_sm(EventKind::CtaRetire, kernel, sm, ctas as u64);
        if done {
            self.resident[kernel].finish_time = Some(self.now);
            self.last_finish = self.last_finish.max(self.now);
            self.unfinished -= 1;
            self.log(self.now, EventKind::KernelFinish, Some(kernel), 0);
        }
        done
    }

    /// Processes events until one the caller must see, or until idle.
    pub fn next_notification(&mut self) -> Option<Notification> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.advance_to(ev.at);
            match ev.what {
                Pending::Arrive(k) => {
                    self.make_resident(k);
                    self.issue();
                }
                Pending::Retire { kernel, sm, ctas } => {
                    let done = self.retire(kernel, sm, ctas);
                    self.issue();
                    if done {
                        return Some(Notification::KernelFinished { kernel, at: self.now });
                    }
                }
                Pending::Timer(token) => return Some(Notification::Timer { token, at: self.now }),
            }
        }
        None
    }

    /// Runs every pending event, ignoring notifications, and reports.
    pub fn run_until_idle(mut self) -> SimReport {
        while self.next_notification().is_some() {}
        let end = self.last_finish;
        self.into_report(end, 0, 0)
    }

    pub fn last_finish(&self) -> Nanos {
        self.last_finish
    }

    /// Final report. The makespan is the later of the last kernel completion
    /// and `host_end`.
    pub fn into_report(self, host_end: Nanos, host_busy_ns: Nanos, construction_ns: Nanos) -> SimReport {
        let kernels = self
            .resident
            .iter()
            .map(|r| KernelTiming { dispatch_ns: r.dispatch_time, finish_ns: r.finish_time })
            .collect();
        let mut events = self.log.unwrap_or_default();
        // host records may be logged ahead of device time
        events.sort_by_key(|e| e.t_ns);
        SimReport {
            makespan_ns: self.last_finish.max(host_end),
            kernels,
            active_warp_integral: self.warp_integral,
            host_busy_ns,
            construction_ns,
            events,
            trace_hash: String::new(),
            legality: Legality::default(),
            stats: PolicyStats::default(),
        }
    }

    /// Capacity check used by tests: per-SM limits hold right now.
    pub fn check_capacity(&self) -> Result<(), String> {
        let mut in_flight = 0u64;
        for (i, s) in self.sms.iter().enumerate() {
            if s.ctas > self.gpu.max_ctas_per_sm || s.warps > self.gpu.max_warps_per_sm {
                return Err(format!("SM {i} over capacity: {s:?}"));
            }
            in_flight += s.ctas as u64;
        }
        if in_flight + self.free_cta_slots != self.gpu.total_cta_slots() {
            return Err("CTA slot accounting drifted".into());
        }
        for (k, r) in self.resident.iter().enumerate() {
            if r.dispatch_time.is_some()
                && r.ctas_remaining_to_dispatch + r.ctas_in_flight + r.ctas_retired != self.kernels[k].num_ctas
            {
                return Err(format!("kernel {k} CTA accounting drifted"));
            }
        }
        Ok(())
    }

    /// Work-conservation check: no issuing kernel could place a CTA now.
    pub fn check_work_conserving(&self) -> Result<(), String> {
        for &k in &self.issuing {
            let w = self.kernels[k].warps_per_cta;
            for (i, s) in self.sms.iter().enumerate() {
                if s.ctas < self.gpu.max_ctas_per_sm && self.gpu.max_warps_per_sm - s.warps >= w {
                    return Err(format!("kernel {k} could issue on SM {i}"));
                }
            }
        }
        Ok(())
    }
}
