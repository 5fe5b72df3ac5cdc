//! Fixed-capacity circular transition store.
//!
//! Transitions are addressed by their insertion sequence number (`u64`), which
//! never repeats. The physical slot of index `i` is `i % capacity`. An index is
//! stored while `inserted_total - capacity <= i < inserted_total`.
//!
//! Only 1-step transitions are stored; n-step windows are assembled at sampling
//! time from stored successors (see [`crate::nstep`]).

use std::collections::{BTreeMap, HashSet};
use std::ops::{Deref, Range};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length numeric observation. Cloning is cheap; consecutive transitions
/// share the same allocation for `next_state` / `state`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(Arc<[f64]>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Observation(values.into())
    }

    pub fn one_hot(dim: usize, hot: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[hot] = 1.0;
        Observation::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Observation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Observation {
    fn from(v: Vec<f64>) -> Self {
        Observation::new(v)
    }
}

/// One environment step, stamped with the learner's gradient-step count at the
/// time the action was selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    /// Episode ended in a true terminal state: no bootstrap from `next_state`.
    pub terminal: bool,
    /// Episode cut by a time limit. `next_state` is a real state, but n-step
    /// windows may not extend past this transition.
    pub truncated: bool,
    pub policy_stamp: u64,
    pub env_step: u64,
    pub episode_id: u64,
}

impl Transition {
    pub fn validate(&self, action_count: usize) -> Result<()> {
        if !self.reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        if self.action >= action_count {
            return Err(Error::InvalidAction {
                action: self.action,
                count: action_count,
            });
        }
        if self.state.len() != self.next_state.len() {
            return Err(Error::DimensionMismatch {
                expected: self.state.len(),
                found: self.next_state.len(),
            });
        }
        Ok(())
    }

    /// Whether an n-step window may not continue past this transition.
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<Transition>,
    inserted_total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BufferStats {
    pub oldest_policy_age: u64,
    /// Count of stored transitions per age bucket; key is the bucket's lower bound.
    pub transition_age_histogram: BTreeMap<u64, usize>,
    pub distinct_state_action_count: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be > 0".into()));
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity.min(1 << 20)),
            inserted_total: 0,
        })
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
        self.slots.len() == self.capacity
    }

    pub fn inserted_total(&self) -> u64 {
        self.inserted_total
    }

    pub fn write_cursor(&self) -> usize {
        (self.inserted_total % self.capacity as u64) as usize
    }

    /// Index of the oldest stored transition (equal to `inserted_total` when empty).
    pub fn oldest_index(&self) -> u64 {
        self.inserted_total - self.slots.len() as u64
    }

    /// Range of currently stored indices, oldest first.
    pub fn stored(&self) -> Range<u64> {
        self.oldest_index()..self.inserted_total
    }

    pub fn contains(&self, index: u64) -> bool {
        self.stored().contains(&index)
    }

    pub fn slot_of(&self, index: u64) -> usize {
        (index % self.capacity as u64) as usize
    }

    /// Index currently held in `slot`, if the slot has been written.
    pub fn index_in_slot(&self, slot: usize) -> Option<u64> {
        if slot >= self.slots.len() {
            return None;
        }
        let newest_slot_base = self.inserted_total - 1 - (self.slot_of(self.inserted_total - 1) as u64);
        let candidate = newest_slot_base + slot as u64;
        Some(if candidate >= self.inserted_total {
            candidate - self.capacity as u64
        } else {
            candidate
        })
    }

    /// Stores `transition`, overwriting the oldest one when full. Returns the
    /// new transition's index.
    pub fn insert(&mut self, transition: Transition) -> u64 {
        debug_assert!(transition.reward.is_finite());
        debug_assert!(self
            .newest()
            .is_none_or(|last| last.policy_stamp <= transition.policy_stamp));
        let index = self.inserted_total;
        if self.slots.len() < self.capacity {
            self.slots.push(transition);
        } else {
            let slot = self.write_cursor();
            self.slots[slot] = transition;
        }
        self.inserted_total += 1;
        index
    }

    pub fn get(&self, index: u64) -> Result<&Transition> {
        if !self.contains(index) {
            return Err(Error::NotStored {
                index,
                oldest: self.oldest_index(),
                end: self.inserted_total,
            });
        }
        Ok(&self.slots[self.slot_of(index)])
    }

    pub fn oldest(&self) -> Option<&Transition> {
        self.get(self.oldest_index()).ok()
    }

    pub fn newest(&self) -> Option<&Transition> {
        self.inserted_total.checked_sub(1).and_then(|i| self.get(i).ok())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Transition)> + '_ {
        self.stored().map(move |i| (i, &self.slots[self.slot_of(i)]))
    }

    /// Gradient steps since the oldest stored transition was generated.
    pub fn oldest_policy_age(&self, current_gradient_step: u64) -> Result<u64> {
        // Stamps are non-decreasing in insertion order, so the oldest slot holds the minimum.
        let oldest = self.oldest().ok_or(Error::EmptyBuffer)?;
        Ok(current_gradient_step.saturating_sub(oldest.policy_stamp))
    }

    pub fn stats(&self, current_gradient_step: u64, bucket_width: u64) -> Result<BufferStats> {
        let bucket_width = bucket_width.max(1);
        let oldest_policy_age = self.oldest_policy_age(current_gradient_step)?;
        let mut transition_age_histogram = BTreeMap::new();
        let mut seen = HashSet::new();
        for (_, t) in self.iter() {
            let age = current_gradient_step.saturating_sub(t.policy_stamp);
            *transition_age_histogram
                .entry(age / bucket_width * bucket_width)
                .or_insert(0) += 1;
            let key: Vec<u64> = t.state.iter().map(|x| x.to_bits()).collect();
            seen.insert((key, t.action));
        }
        Ok(BufferStats {
            oldest_policy_age,
            transition_age_histogram,
            distinct_state_action_count: seen.len(),
        })
    }

    /// Whether `index` can start an n-step window: its successors up to
    /// horizon `n` are stored, stay in one episode, and either reach the
    /// horizon or end at a terminal. A truncation strictly inside the window
    /// makes the index invalid.
    pub fn is_valid_nstep(&self, index: u64, n: usize) -> bool {
        if n == 0 || !self.contains(index) {
            return false;
        }
        let episode = self.slots[self.slot_of(index)].episode_id;
        for k in 0..n as u64 {
            let j = index + k;
            if j >= self.inserted_total {
                return false;
            }
            let t = &self.slots[self.slot_of(j)];
            if t.episode_id != episode {
                return false;
            }
            if t.terminal {
                return true;
            }
            if t.truncated {
                return k + 1 == n as u64;
            }
        }
        true
    }

    pub fn valid_nstep_indices(&self, n: usize) -> Vec<u64> {
        self.stored().filter(|&i| self.is_valid_nstep(i, n)).collect()
    }
}

/// Expected number of times a transition is sampled over its lifetime in the
/// buffer: `replay_ratio * batch_size`, independent of capacity.
pub fn expected_updates_per_transition(replay_ratio: f64, batch_size: usize) -> f64 {
    replay_ratio * batch_size as f64
}
