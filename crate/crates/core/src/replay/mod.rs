//! Prioritized experience replay with pinned demonstrations.
//!
//! Demonstrations are loaded first into the head of the ring and never
//! evicted; live experience cycles FIFO through the remaining slots. Sampling
//! probability is proportional to `priority^alpha`, where priority is
//! `td^2 + lambda * |dQ/da|^2 + eps (+ eps_demo for demonstrations)`.

pub mod demo_file;
mod sum_tree;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Transition;

pub use sum_tree::SumTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("demonstrations must be pushed before any live transition")]
    DemoAfterLive,
    #[error("buffer capacity {0} leaves no room for live transitions")]
    NoLiveRoom(usize),
    #[error("replay buffer is empty")]
    Empty,
    #[error("batch of {requested} requested from a buffer holding {available}")]
    NotEnoughData { requested: usize, available: usize },
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("non-finite priority input (td {td}, grad {grad:?})")]
    NonFinite { td: f64, grad: [f64; 2] },
    #[error("update lists differ in length ({keys} keys, {tds} td errors, {grads} gradients)")]
    LengthMismatch { keys: usize, tds: usize, grads: usize },
    #[error("invalid replay config: {0}")]
    InvalidConfig(String),
}

/// Priority and sampling hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerConfig {
    pub capacity: usize,
    /// Priority exponent; 0 gives uniform sampling.
    pub alpha: f64,
    /// Priority floor for every transition.
    pub eps: f64,
    /// Additional priority for demonstrations.
    pub eps_demo: f64,
    /// Weight of the squared action-gradient term.
    pub lambda: f64,
    /// Importance-weight exponent at the start of training.
    pub beta_start: f64,
    /// Importance-weight exponent at the end of the horizon.
    pub beta_end: f64,
    /// Internal sums are recomputed from the leaves after this many updates.
    pub rebuild_interval: usize,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            capacity: 200_000,
            alpha: 0.6,
            eps: 0.01,
            eps_demo: 1.0,
            lambda: 0.1,
            beta_start: 0.4,
            beta_end: 1.0,
            rebuild_interval: 100_000,
        }
    }
}

impl PerConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let bad = |m: &str| Err(ReplayError::InvalidConfig(m.to_string()));
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        if !(self.eps_demo >= 0.0 && self.lambda >= 0.0) {
            return bad("eps_demo and lambda must be non-negative");
        }
        if !(self.beta_start >= 0.0 && self.beta_end >= 0.0) {
            return bad("beta must be non-negative");
        }
        if self.rebuild_interval == 0 {
            return bad("rebuild_interval must be positive");
        }
        Ok(())
    }

    /// Linear anneal of beta over `horizon` steps.
    pub fn beta_at(&self, step: u64, horizon: u64) -> f64 {
        if horizon == 0 {
            return self.beta_end;
        }
        let frac = (step as f64 / horizon as f64).min(1.0);
        self.beta_start + frac * (self.beta_end - self.beta_start)
    }
}

/// `td^2 + lambda * |grad|^2 + eps (+ eps_demo if demo)`.
pub fn compute_priority(td_error: f64, action_grad: [f64; 2], demo: bool, cfg: &PerConfig) -> Result<f64, ReplayError> {
    if !td_error.is_finite() || !action_grad.iter().all(|g| g.is_finite()) {
        return Err(ReplayError::NonFinite { td: td_error, grad: action_grad });
    }
    let grad_sq = action_grad[0] * action_grad[0] + action_grad[1] * action_grad[1];
    let bonus = if demo { cfg.eps_demo } else { 0.0 };
    Ok(td_error * td_error + cfg.lambda * grad_sq + cfg.eps + bonus)
}

/// Importance weight `(1/n * 1/p)^beta` for sampling probability `p` in a batch of `n`.
pub fn importance_weight(probability: f64, n: usize, beta: f64) -> f64 {
    (1.0 / n as f64 * (1.0 / probability)).powf(beta)
}

/// Identifies a sampled slot together with the occupant it held when sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleKey {
    pub index: usize,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub keys: Vec<SampleKey>,
    /// Sampling probability of each item.
    pub probabilities: Vec<f64>,
    /// Importance weights divided by the batch maximum, in (0, 1].
    pub weights: Vec<f64>,
    /// Importance weights before normalization.
    pub raw_weights: Vec<f64>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.keys.iter().map(|k| k.index).collect()
    }

    /// Batch from explicit transitions with unit weights; keys are not usable for updates.
    pub fn uniform(transitions: Vec<Transition>) -> Self {
        let n = transitions.len();
        Self {
            keys: (0..n).map(|index| SampleKey { index, generation: u64::MAX }).collect(),
            probabilities: vec![1.0 / n.max(1) as f64; n],
            weights: vec![1.0; n],
            raw_weights: vec![1.0; n],
            transitions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateOutcome {
    pub updated: usize,
    pub stale: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    cfg: PerConfig,
    slots: Vec<Transition>,
    generations: Vec<u64>,
    priorities: Vec<f64>,
    tree: SumTree,
    demo_count: usize,
    live_started: bool,
    /// Next live slot to overwrite once the buffer is full.
    cursor: usize,
    max_priority: f64,
    next_generation: u64,
    updates_since_rebuild: usize,
    stale_updates: usize,
}

impl ReplayBuffer {
    pub fn new(cfg: PerConfig) -> Result<Self, ReplayError> {
        cfg.validate()?;
        Ok(Self {
            slots: Vec::with_capacity(cfg.capacity.min(1 << 20)),
            generations: Vec::with_capacity(cfg.capacity.min(1 << 20)),
            priorities: Vec::with_capacity(cfg.capacity.min(1 << 20)),
            tree: SumTree::new(cfg.capacity),
            demo_count: 0,
            live_started: false,
            cursor: 0,
            max_priority: 1.0,
            next_generation: 0,
            updates_since_rebuild: 0,
            stale_updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &PerConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn demo_count(&self) -> usize {
        self.demo_count
    }

    pub fn demos(&self) -> &[Transition] {
        &self.slots[..self.demo_count]
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.slots.get(index)
    }

    /// Stored priority (before the alpha exponent) of a slot.
    pub fn priority(&self, index: usize) -> Option<f64> {
        self.priorities.get(index).copied()
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn stale_updates(&self) -> usize {
        self.stale_updates
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    fn mass(&self, priority: f64) -> f64 {
        priority.powf(self.cfg.alpha)
    }

    fn write_slot(&mut self, slot: usize, t: Transition) {
        let p = self.max_priority;
        if slot == self.slots.len() {
            self.slots.push(t);
            self.generations.push(self.next_generation);
            self.priorities.push(p);
        } else {
            self.slots[slot] = t;
            self.generations[slot] = self.next_generation;
            self.priorities[slot] = p;
        }
        self.next_generation += 1;
        self.tree.set(slot, self.mass(p));
    }

    /// Stores a transition at the current maximum priority and returns its slot.
    pub fn push(&mut self, mut transition: Transition, demo: bool) -> Result<usize, ReplayError> {
        transition.demo = demo;
        let cap = self.cfg.capacity;
        if demo {
            if self.live_started {
                return Err(ReplayError::DemoAfterLive);
            }
            if self.demo_count + 1 >= cap {
                return Err(ReplayError::NoLiveRoom(cap));
            }
            let slot = self.slots.len();
            self.write_slot(slot, transition);
            self.demo_count += 1;
            return Ok(slot);
        }
        if self.demo_count >= cap {
            return Err(ReplayError::NoLiveRoom(cap));
        }
        self.live_started = true;
        let slot = if self.slots.len() < cap {
            self.slots.len()
        } else {
            let s = self.cursor.max(self.demo_count);
            self.cursor = if s + 1 >= cap { self.demo_count } else { s + 1 };
            s
        };
        self.write_slot(slot, transition);
        Ok(slot)
    }

    /// Stratified proportional sample of `n` transitions.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, beta: f64, rng: &mut R) -> Result<SampledBatch, ReplayError> {
        if self.slots.is_empty() {
            return Err(ReplayError::Empty);
        }
        if n == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        if self.slots.len() < n {
            return Err(ReplayError::NotEnoughData { requested: n, available: self.slots.len() });
        }
        let total = self.tree.total();
        let segment = total / n as f64;
        let mut batch = SampledBatch {
            transitions: Vec::with_capacity(n),
            keys: Vec::with_capacity(n),
            probabilities: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            raw_weights: Vec::with_capacity(n),
        };
        for i in 0..n {
            let u: f64 = rng.random();
            let idx = self.tree.find((i as f64 + u) * segment);
            let p = self.tree.get(idx) / total;
            batch.transitions.push(self.slots[idx]);
            batch.keys.push(SampleKey { index: idx, generation: self.generations[idx] });
            batch.probabilities.push(p);
            batch.raw_weights.push(importance_weight(p, n, beta));
        }
        let max_w = batch.raw_weights.iter().copied().fold(0.0, f64::max);
        batch.weights = batch.raw_weights.iter().map(|w| w / max_w).collect();
        Ok(batch)
    }

    /// Re-prioritizes sampled slots. Keys whose slot has since been overwritten
    /// are skipped and counted.
    pub fn update_priorities(&mut self, keys: &[SampleKey], td_errors: &[f64], action_grads: &[[f64; 2]]) -> Result<UpdateOutcome, ReplayError> {
        if keys.len() != td_errors.len() || keys.len() != action_grads.len() {
            return Err(ReplayError::LengthMismatch { keys: keys.len(), tds: td_errors.len(), grads: action_grads.len() });
        }
        let mut outcome = UpdateOutcome::default();
        for ((key, &td), &grad) in keys.iter().zip(td_errors).zip(action_grads) {
            if self.generations.get(key.index) != Some(&key.generation) {
                outcome.stale += 1;
                continue;
            }
            let p = compute_priority(td, grad, self.slots[key.index].demo, &self.cfg)?;
            self.priorities[key.index] = p;
            self.tree.set(key.index, self.mass(p));
            self.max_priority = self.max_priority.max(p);
            outcome.updated += 1;
            self.updates_since_rebuild += 1;
            if self.updates_since_rebuild >= self.cfg.rebuild_interval {
                self.tree.rebuild();
                self.updates_since_rebuild = 0;
            }
        }
        self.stale_updates += outcome.stale;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, Observation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        let mut s = Observation::default();
        s.0[0] = tag;
        Transition { s, a: Action::ZERO, r: tag, s_next: s, done: false, demo: false }
    }

    fn small(capacity: usize) -> ReplayBuffer {
        ReplayBuffer::new(PerConfig { capacity, ..PerConfig::default() }).unwrap()
    }

    #[test]
    fn demos_survive_live_churn() {
        let mut b = small(10);
        for k in 0..3 {
            b.push(tr(k as f64), true).unwrap();
        }
        for k in 0..25 {
            b.push(tr(100.0 + k as f64), false).unwrap();
        }
        assert_eq!(b.len(), 10);
        assert_eq!(b.demos().iter().map(|t| t.r).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
        assert!(b.demos().iter().all(|t| t.demo));
    }

    #[test]
    fn first_push_has_unit_priority() {
        let mut b = small(4);
        let i = b.push(tr(0.0), false).unwrap();
        assert_eq!(b.priority(i), Some(1.0));
        assert_eq!(b.tree().total(), 1.0);
    }

    #[test]
    fn eviction_is_fifo_over_live_region() {
        let mut b = small(5);
        b.push(tr(-1.0), true).unwrap();
        for k in 0..4 {
            b.push(tr(k as f64), false).unwrap();
        }
        let slot = b.push(tr(4.0), false).unwrap();
        assert_eq!(slot, 1);
        assert_eq!(b.get(1).unwrap().r, 4.0);
        let slot = b.push(tr(5.0), false).unwrap();
        assert_eq!(slot, 2);
        let live: Vec<f64> = (1..5).map(|i| b.get(i).unwrap().r).collect();
        assert_eq!(live, vec![4.0, 5.0, 2.0, 3.0]);
    }

    #[test]
    fn demo_after_live_is_rejected() {
        let mut b = small(5);
        b.push(tr(0.0), false).unwrap();
        assert_eq!(b.push(tr(1.0), true), Err(ReplayError::DemoAfterLive));
    }

    #[test]
    fn priority_formula() {
        let cfg = PerConfig { eps: 0.01, lambda: 0.1, eps_demo: 1.0, ..PerConfig::default() };
        assert!((compute_priority(2.0, [0.0, 0.0], false, &cfg).unwrap() - 4.01).abs() < 1e-15);
        assert!((compute_priority(0.0, [1.0, 1.0], true, &cfg).unwrap() - 1.21).abs() < 1e-15);
        assert_eq!(compute_priority(0.0, [0.0, 0.0], false, &cfg).unwrap(), 0.01);
        assert!(compute_priority(f64::NAN, [0.0, 0.0], false, &cfg).is_err());
        assert!(compute_priority(0.0, [f64::INFINITY, 0.0], false, &cfg).is_err());
    }

    #[test]
    fn sampling_errors() {
        let b = small(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b.sample(2, 0.4, &mut rng), Err(ReplayError::Empty));
        let mut b = small(4);
        b.push(tr(0.0), false).unwrap();
        assert!(matches!(b.sample(2, 0.4, &mut rng), Err(ReplayError::NotEnoughData { .. })));
    }

    #[test]
    fn zero_beta_gives_unit_weights() {
        let mut b = small(16);
        for k in 0..16 {
            b.push(tr(k as f64), false).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = b.sample(8, 1.0, &mut rng).unwrap();
        let tds: Vec<f64> = (0..8).map(|k| k as f64).collect();
        b.update_priorities(&batch.keys, &tds, &vec![[0.0, 0.0]; 8]).unwrap();
        let batch = b.sample(8, 0.0, &mut rng).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0));
        assert!(batch.raw_weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn stale_keys_are_skipped() {
        let mut b = small(3);
        for k in 0..3 {
            b.push(tr(k as f64), false).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = b.sample(3, 0.4, &mut rng).unwrap();
        b.push(tr(9.0), false).unwrap();
        let overwritten = batch.keys.iter().filter(|k| k.index == 0).count();
        let out = b.update_priorities(&batch.keys, &[1.0; 3], &[[0.0, 0.0]; 3]).unwrap();
        assert_eq!(out.stale, overwritten);
        assert_eq!(out.updated + out.stale, 3);
        assert_eq!(b.stale_updates(), overwritten);
    }

    #[test]
    fn beta_anneals_linearly() {
        let cfg = PerConfig::default();
        assert_eq!(cfg.beta_at(0, 100), 0.4);
        assert!((cfg.beta_at(50, 100) - 0.7).abs() < 1e-15);
        assert_eq!(cfg.beta_at(500, 100), 1.0);
    }
}
