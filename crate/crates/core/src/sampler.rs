//! Uniform and proportional-prioritized sampling over a [`ReplayBuffer`].
//!
//! [`ReplayMemory`] owns the buffer together with the bookkeeping that tracks
//! which stored indices can start a window of the configured horizon. Only
//! those indices carry sampling mass, so both strategies sample exactly from
//! the valid set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};

/// Binary sum tree over `leaf_count` (a power of two) leaves.
///
/// Stored as a 1-based heap: node `i` has children `2i` and `2i + 1`, and leaf
/// `j` lives at node `leaf_count + j`. Every internal node is recomputed as the
/// sum of its children on update, so the invariant holds exactly.
#[derive(Clone, Debug)]
pub struct SumTree {
    capacity: usize,
    leaf_count: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaf_count = capacity.max(1).next_power_of_two();
        Self {
            capacity,
            leaf_count,
            nodes: vec![0.0; 2 * leaf_count],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Raw heap node (1-based); node 1 is the root.
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.leaf_count + leaf]
    }

    pub fn set(&mut self, leaf: usize, priority: f64) -> Result<()> {
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(Error::InvalidPriority(priority));
        }
        if leaf >= self.capacity {
            return Err(Error::InvalidArgument(format!(
                "leaf {leaf} out of range for capacity {}",
                self.capacity
            )));
        }
        let mut i = self.leaf_count + leaf;
        self.nodes[i] = priority;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
        Ok(())
    }

    /// The leaf `j` with `cumsum(j - 1) <= u < cumsum(j)`.
    pub fn find(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        if !(0.0..total).contains(&u) {
            return Err(Error::QueryOutOfRange { u, total });
        }
        let mut u = u;
        let mut i = 1;
        while i < self.leaf_count {
            let left = self.nodes[2 * i];
            // A zero-mass right subtree can only be reached through rounding.
            if u < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        Ok(i - self.leaf_count)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    pub indices: Vec<u64>,
    /// Importance weights, normalized so the batch maximum is exactly 1.
    pub is_weights: Vec<f64>,
    /// Probability of drawing each sampled index under the sampling distribution.
    pub sampling_probabilities: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityConfig {
    pub alpha: f64,
    pub beta: f64,
    pub priority_floor: f64,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            priority_floor: 1e-3,
        }
    }
}

/// Proportional prioritization state: the tree holds `p^alpha` per slot.
#[derive(Clone, Debug)]
pub struct PrioritizedSampler {
    tree: SumTree,
    config: PriorityConfig,
    max_priority: f64,
}

impl PrioritizedSampler {
    pub fn new(capacity: usize, config: PriorityConfig) -> Result<Self> {
        if !(config.alpha >= 0.0) || !(0.0..=1.0).contains(&config.beta) {
            return Err(Error::InvalidArgument(format!(
                "prioritization needs alpha >= 0 and beta in [0, 1], got {config:?}"
            )));
        }
        if !(config.priority_floor > 0.0) {
            return Err(Error::InvalidArgument("priority floor must be > 0".into()));
        }
        Ok(Self {
            tree: SumTree::new(capacity),
            config,
            max_priority: 1.0,
        })
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn config(&self) -> &PriorityConfig {
        &self.config
    }

    /// Largest raw priority seen so far; new transitions enter with it.
    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    fn activate(&mut self, slot: usize) -> Result<()> {
        self.tree.set(slot, self.max_priority.powf(self.config.alpha))
    }

    fn deactivate(&mut self, slot: usize) -> Result<()> {
        self.tree.set(slot, 0.0)
    }

    /// Sets the raw priority of `slot` to `|td_error| + floor`.
    pub fn update(&mut self, slot: usize, td_error: f64) -> Result<()> {
        if !td_error.is_finite() {
            return Err(Error::NonFinite("td error"));
        }
        let p = td_error.abs() + self.config.priority_floor;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(slot, p.powf(self.config.alpha))
    }
}

#[derive(Clone, Debug)]
pub enum Sampling {
    Uniform,
    Prioritized(PrioritizedSampler),
}

/// Replay buffer plus the sampling state attached to it.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    buffer: ReplayBuffer,
    horizon: usize,
    valid: Vec<bool>,
    valid_count: usize,
    sampling: Sampling,
}

const MAX_REJECTIONS: usize = 64;

impl ReplayMemory {
    /// `horizon` is the n-step window length sampled indices must support.
    pub fn new(capacity: usize, horizon: usize, priority: Option<PriorityConfig>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        let sampling = match priority {
            Some(cfg) => Sampling::Prioritized(PrioritizedSampler::new(capacity, cfg)?),
            None => Sampling::Uniform,
        };
        Ok(Self {
            buffer: ReplayBuffer::new(capacity)?,
            horizon,
            valid: vec![false; capacity],
            valid_count: 0,
            sampling,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sampling(&self) -> &Sampling {
        &self.sampling
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid_count
    }

    pub fn is_sampleable(&self, index: u64) -> bool {
        self.buffer.contains(index) && self.valid[self.buffer.slot_of(index)]
    }

    /// Sampleable indices in insertion order.
    pub fn sampleable_indices(&self) -> Vec<u64> {
        self.buffer.stored().filter(|&i| self.is_sampleable(i)).collect()
    }

    /// Stores a transition and updates which indices can be sampled. Indices
    /// that become valid enter the prioritized tree at the current max priority.
    pub fn insert(&mut self, transition: Transition) -> u64 {
        if self.buffer.is_full() {
            let slot = self.buffer.write_cursor();
            if self.valid[slot] {
                self.valid[slot] = false;
                self.valid_count -= 1;
            }
            if let Sampling::Prioritized(p) = &mut self.sampling {
                p.deactivate(slot).expect("slot in range");
            }
        }
        let index = self.buffer.insert(transition);
        let first = self
            .buffer
            .oldest_index()
            .max((index + 1).saturating_sub(self.horizon as u64));
        for i in first..=index {
            let slot = self.buffer.slot_of(i);
            if !self.valid[slot] && self.buffer.is_valid_nstep(i, self.horizon) {
                self.valid[slot] = true;
                self.valid_count += 1;
                if let Sampling::Prioritized(p) = &mut self.sampling {
                    p.activate(slot).expect("slot in range");
                }
            }
        }
        index
    }

    /// Probability that a single draw returns `index`.
    pub fn probability(&self, index: u64) -> f64 {
        if !self.is_sampleable(index) {
            return 0.0;
        }
        match &self.sampling {
            Sampling::Uniform => 1.0 / self.valid_count as f64,
            Sampling::Prioritized(p) => p.tree.get(self.buffer.slot_of(index)) / p.tree.total(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampleBatch> {
        match &self.sampling {
            Sampling::Uniform => self.uniform_sample(batch_size, rng),
            Sampling::Prioritized(p) => self.prioritized_sample(p, batch_size, rng),
        }
    }

    /// I.i.d. uniform draws over sampleable indices; all weights are 1.
    pub fn uniform_sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampleBatch> {
        if batch_size == 0 {
            return Ok(SampleBatch::default());
        }
        if self.valid_count == 0 {
            return Err(Error::NoValidIndices { n: self.horizon });
        }
        let stored = self.buffer.stored();
        let size = self.buffer.len() as u64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut fallback: Option<Vec<u64>> = None;
        for _ in 0..batch_size {
            let mut chosen = None;
            if fallback.is_none() {
                for _ in 0..MAX_REJECTIONS {
                    let i = stored.start + rng.gen_range(0..size);
                    if self.valid[self.buffer.slot_of(i)] {
                        chosen = Some(i);
                        break;
                    }
                }
            }
            let i = match chosen {
                Some(i) => i,
                None => {
                    let all = fallback.get_or_insert_with(|| self.sampleable_indices());
                    all[rng.gen_range(0..all.len())]
                }
            };
            indices.push(i);
        }
        let p = 1.0 / self.valid_count as f64;
        Ok(SampleBatch {
            is_weights: vec![1.0; indices.len()],
            sampling_probabilities: vec![p; indices.len()],
            indices,
        })
    }

    fn prioritized_sample<R: Rng + ?Sized>(
        &self,
        sampler: &PrioritizedSampler,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<SampleBatch> {
        if batch_size == 0 {
            return Ok(SampleBatch::default());
        }
        let tree = &sampler.tree;
        let total = tree.total();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let stratum = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut probs = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            // One uniform draw inside each of `batch_size` equal-mass strata.
            let u = ((k as f64 + rng.gen::<f64>()) * stratum).min(prev_float(total));
            let slot = tree.find(u)?;
            let index = self
                .buffer
                .index_in_slot(slot)
                .expect("positive mass only on written slots");
            indices.push(index);
            probs.push(tree.get(slot) / total);
        }
        let weights = normalized_is_weights(&probs, self.buffer.len(), sampler.config.beta);
        Ok(SampleBatch {
            indices,
            is_weights: weights,
            sampling_probabilities: probs,
        })
    }

    /// Sets priorities of sampled indices from their errors. Indices evicted
    /// since sampling are skipped.
    pub fn update_priorities(&mut self, indices: &[u64], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::LengthMismatch {
                what: "td_errors",
                expected: indices.len(),
                found: td_errors.len(),
            });
        }
        let Sampling::Prioritized(p) = &mut self.sampling else {
            return Ok(());
        };
        for (&i, &e) in indices.iter().zip(td_errors) {
            if self.buffer.contains(i) && self.valid[self.buffer.slot_of(i)] {
                p.update(self.buffer.slot_of(i), e)?;
            }
        }
        Ok(())
    }
}

fn prev_float(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}

/// Importance weights `(size * P(i))^-beta` divided by their maximum.
pub fn normalized_is_weights(probabilities: &[f64], size: usize, beta: f64) -> Vec<f64> {
    let raw: Vec<f64> = probabilities
        .iter()
        .map(|&p| (size as f64 * p).powf(-beta))
        .collect();
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    raw.into_iter().map(|w| w / max).collect()
}
