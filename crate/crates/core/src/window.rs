//! Fixed-capacity scheduling window with per-slot upstream sets.
//!
//! Each slot tracks one in-flight kernel, its state, and the ids of the
//! upstream kernels it still waits for. A kernel leaves the window as soon
//! as it completes, and completion clears its id from every other slot.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::WindowError;
use crate::model::KernelId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelState {
    Ready,
    Pending,
    Executing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub id: KernelId,
    pub state: KernelState,
    pub upstream: BTreeSet<KernelId>,
}

#[derive(Clone, Debug)]
pub struct SchedulingWindow {
    capacity: usize,
    // sorted by id
    slots: Vec<Slot>,
}

impl SchedulingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        SchedulingWindow { capacity, slots: Vec::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    pub fn contains(&self, id: KernelId) -> bool {
        self.position(id).is_ok()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn ids(&self) -> impl Iterator<Item = KernelId> + '_ {
        self.slots.iter().map(|s| s.id)
    }

    /// Smallest (oldest) id currently occupying a slot.
    pub fn oldest(&self) -> Option<KernelId> {
        self.slots.first().map(|s| s.id)
    }

    pub fn state(&self, id: KernelId) -> Option<KernelState> {
        self.slot(id).map(|s| s.state)
    }

    pub fn slot(&self, id: KernelId) -> Option<&Slot> {
        self.position(id).ok().map(|i| &self.slots[i])
    }

    fn position(&self, id: KernelId) -> Result<usize, usize> {
        self.slots.binary_search_by_key(&id, |s| s.id)
    }

    /// Inserts `id`, keeping only the proposed upstream ids that are still
    /// in the window. Returns the new slot's state.
    pub fn insert(&mut self, id: KernelId, proposed_upstream: &BTreeSet<KernelId>) -> Result<KernelState, WindowError> {
        if self.is_full() {
            return Err(WindowError::Full(self.capacity));
        }
        let pos = match self.position(id) {
            Ok(_) => return Err(WindowError::DuplicateId(id)),
            Err(pos) => pos,
        };
        let upstream: BTreeSet<KernelId> =
            proposed_upstream.iter().copied().filter(|&u| u != id && self.contains(u)).collect();
        let state = if upstream.is_empty() { KernelState::Ready } else { KernelState::Pending };
        self.slots.insert(pos, Slot { id, state, upstream });
        Ok(state)
    }

    pub fn mark_executing(&mut self, id: KernelId) -> Result<(), WindowError> {
        let pos = self.position(id).map_err(|_| WindowError::UnknownId(id))?;
        let slot = &mut self.slots[pos];
        if slot.state != KernelState::Ready {
            return Err(WindowError::NotReady(id));
        }
        slot.state = KernelState::Executing;
        Ok(())
    }

    /// Retires an executing kernel. Returns the ids that became ready, in
    /// ascending order.
    pub fn complete(&mut self, id: KernelId) -> Result<Vec<KernelId>, WindowError> {
        let pos = self.position(id).map_err(|_| WindowError::UnknownId(id))?;
        if self.slots[pos].state != KernelState::Executing {
            return Err(WindowError::NotExecuting(id));
        }
        self.slots.remove(pos);
        let mut released = Vec::new();
        for slot in &mut self.slots {
            if slot.upstream.remove(&id) && slot.upstream.is_empty() {
                debug_assert_eq!(slot.state, KernelState::Pending);
                slot.state = KernelState::Ready;
                released.push(slot.id);
            }
        }
        Ok(released)
    }

    /// Ready kernels in ascending id order.
    pub fn ready_set(&self) -> Vec<KernelId> {
        self.slots.iter().filter(|s| s.state == KernelState::Ready).map(|s| s.id).collect()
    }

    /// Lowest-id ready kernel, if any.
    pub fn first_ready(&self) -> Option<KernelId> {
        self.slots.iter().find(|s| s.state == KernelState::Ready).map(|s| s.id)
    }

    pub fn executing_count(&self) -> usize {
        self.slots.iter().filter(|s| s.state == KernelState::Executing).count()
    }

    /// Checks the structural invariants. Used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.slots.len() > self.capacity {
            return Err(format!("{} slots exceed capacity {}", self.slots.len(), self.capacity));
        }
        for w in self.slots.windows(2) {
            if w[0].id >= w[1].id {
                return Err("slots out of order".into());
            }
        }
        for s in &self.slots {
            if s.upstream.len() > self.capacity.saturating_sub(1) {
                return Err(format!("kernel {} has {} upstream ids", s.id, s.upstream.len()));
            }
            for u in &s.upstream {
                if !self.contains(*u) {
                    return Err(format!("kernel {} waits on departed kernel {u}", s.id));
                }
            }
            let ok = match s.state {
                KernelState::Ready => s.upstream.is_empty(),
                KernelState::Pending => !s.upstream.is_empty(),
                KernelState::Executing => true,
            };
            if !ok {
                return Err(format!("kernel {} state {:?} with upstream {:?}", s.id, s.state, s.upstream));
            }
        }
        Ok(())
    }
}
