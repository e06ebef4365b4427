//! Prioritised experience replay with optional per-opponent weighting.
//!
//! An experience `i` with priority `p_i` has mass `p_i^a`. In
//! [`SampleMode::Per`] masses are normalised directly; in
//! [`SampleMode::Copper`] each mass is first multiplied by the weight `o` of
//! the opponent the experience is tagged with, and the products are
//! renormalised into a distribution.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::ActionMask;
use crate::error::{Error, Result};

pub const DEFAULT_PRIORITY_EXPONENT: f64 = 0.6;
pub const DEFAULT_EPSILON_PRIORITY: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub observation: Vec<f64>,
    pub action_index: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// Legal actions in the next state, when known. Bootstrapping maximises
    /// over these only.
    pub next_mask: Option<ActionMask>,
    pub terminal: bool,
    pub opponent_id: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Per,
    Copper,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub experiences: Vec<Experience>,
    /// Stable ids to hand back to [`PriorityBuffer::update_priorities`].
    pub ids: Vec<u64>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    pub updated: usize,
    /// Ids that were evicted between sampling and the update.
    pub stale: Vec<u64>,
}

#[derive(Clone, Debug)]
struct Slot {
    experience: Experience,
    priority: f64,
}

#[derive(Clone, Debug)]
pub struct PriorityBuffer {
    capacity: usize,
    slots: Vec<Slot>,
    /// Number of experiences ever pushed; the id of the next push.
    pushed: u64,
    exponent: f64,
    epsilon_priority: f64,
    opponent_weights: HashMap<String, f64>,
    prefix: Option<(SampleMode, Vec<f64>)>,
}

impl PriorityBuffer {
    pub fn new(capacity: usize) -> PriorityBuffer {
        PriorityBuffer::with_params(capacity, DEFAULT_PRIORITY_EXPONENT, DEFAULT_EPSILON_PRIORITY)
    }

    pub fn with_params(capacity: usize, exponent: f64, epsilon_priority: f64) -> PriorityBuffer {
        assert!(capacity > 0, "capacity must be positive");
        assert!(exponent >= 0.0 && epsilon_priority > 0.0);
        PriorityBuffer {
            capacity,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
            exponent,
            epsilon_priority,
            opponent_weights: HashMap::new(),
            prefix: None,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn epsilon_priority(&self) -> f64 {
        self.epsilon_priority
    }

    /// Highest stored priority, or 1 when empty. Handy as the initial
    /// priority of fresh experiences.
    pub fn max_priority(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.priority)
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
            .unwrap_or(1.0)
    }

    pub fn push(&mut self, experience: Experience, priority: f64) {
        let priority = priority.abs() + self.epsilon_priority;
        let slot = Slot { experience, priority };
        let pos = (self.pushed % self.capacity as u64) as usize;
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
        } else {
            self.slots[pos] = slot;
        }
        self.pushed += 1;
        self.prefix = None;
    }

    fn position(&self, id: u64) -> Option<usize> {
        let oldest = self.pushed - self.slots.len() as u64;
        (id >= oldest && id < self.pushed).then(|| (id % self.capacity as u64) as usize)
    }

    pub fn get(&self, id: u64) -> Option<&Experience> {
        self.position(id).map(|p| &self.slots[p].experience)
    }

    pub fn priority(&self, id: u64) -> Option<f64> {
        self.position(id).map(|p| self.slots[p].priority)
    }

    /// Ids of the stored experiences, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = u64> {
        (self.pushed - self.slots.len() as u64)..self.pushed
    }

    pub fn opponent_weight(&self, opponent_id: &str) -> f64 {
        self.opponent_weights.get(opponent_id).copied().unwrap_or(1.0)
    }

    pub fn set_opponent_weight(&mut self, opponent_id: &str, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidOpponentWeight(weight));
        }
        self.opponent_weights.insert(opponent_id.to_string(), weight);
        self.prefix = None;
        Ok(())
    }

    fn mass(&self, slot: &Slot, mode: SampleMode) -> f64 {
        let m = slot.priority.powf(self.exponent);
        match mode {
            SampleMode::Per => m,
            SampleMode::Copper => m * self.opponent_weight(&slot.experience.opponent_id),
        }
    }

    fn prefix(&mut self, mode: SampleMode) -> &[f64] {
        if !matches!(&self.prefix, Some((m, _)) if *m == mode) {
            let mut acc = 0.0;
            let prefix = self
                .slots
                .iter()
                .map(|s| {
                    acc += self.mass(s, mode);
                    acc
                })
                .collect();
            self.prefix = Some((mode, prefix));
        }
        &self.prefix.as_ref().unwrap().1
    }

    /// Normalised sampling distribution over storage positions, oldest id first.
    pub fn probabilities(&self, mode: SampleMode) -> Vec<f64> {
        let masses: Vec<f64> = self.ids().map(|id| self.mass(&self.slots[self.position(id).unwrap()], mode)).collect();
        let total: f64 = masses.iter().sum();
        masses.into_iter().map(|m| m / total).collect()
    }

    /// Draws `n` experiences with replacement.
    pub fn sample(&mut self, n: usize, mode: SampleMode, rng: &mut impl Rng) -> Result<Batch> {
        if self.slots.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let prefix = self.prefix(mode).to_vec();
        let total = *prefix.last().unwrap();
        let mut batch = Batch {
            experiences: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            probabilities: Vec::with_capacity(n),
        };
        let len = self.slots.len() as u64;
        let oldest = self.pushed - len;
        for _ in 0..n {
            let u = rng.gen::<f64>() * total;
            let pos = prefix.partition_point(|&c| c <= u).min(prefix.len() - 1);
            let mass = prefix[pos] - if pos == 0 { 0.0 } else { prefix[pos - 1] };
            // Map storage position back to its id.
            let base = oldest - oldest % self.capacity as u64;
            let mut id = base + pos as u64;
            if id < oldest {
                id += self.capacity as u64;
            }
            batch.experiences.push(self.slots[pos].experience.clone());
            batch.ids.push(id);
            batch.probabilities.push(mass / total);
        }
        Ok(batch)
    }

    /// Sets `priority = |td| + epsilon_priority` for each still-stored id.
    pub fn update_priorities(&mut self, ids: &[u64], td_errors: &[f64]) -> UpdateReport {
        assert_eq!(ids.len(), td_errors.len());
        let mut report = UpdateReport::default();
        for (&id, &td) in ids.iter().zip(td_errors) {
            match self.position(id) {
                Some(pos) => {
                    self.slots[pos].priority = td.abs() + self.epsilon_priority;
                    report.updated += 1;
                }
                None => report.stale.push(id),
            }
        }
        if report.updated > 0 {
            self.prefix = None;
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: usize, opponent: &str) -> Experience {
        Experience {
            observation: vec![0.0; 28],
            action_index: tag,
            reward: 0.0,
            next_observation: vec![0.0; 28],
            next_mask: None,
            terminal: false,
            opponent_id: opponent.to_string(),
        }
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = PriorityBuffer::new(2);
        for i in 0..3 {
            b.push(exp(i, "x"), 1.0);
        }
        assert_eq!(b.len(), 2);
        assert!(b.get(0).is_none());
        assert_eq!(b.get(1).unwrap().action_index, 1);
        assert_eq!(b.get(2).unwrap().action_index, 2);
    }

    #[test]
    fn zero_priority_stored_as_epsilon() {
        let mut b = PriorityBuffer::new(4);
        b.push(exp(0, "x"), 0.0);
        assert_eq!(b.priority(0), Some(DEFAULT_EPSILON_PRIORITY));
    }

    #[test]
    fn unknown_opponent_defaults_to_one() {
        let b = PriorityBuffer::new(4);
        assert_eq!(b.opponent_weight("nobody"), 1.0);
    }

    #[test]
    fn per_and_copper_masses() {
        let eps = 1e-12;
        let mut b = PriorityBuffer::with_params(8, 1.0, eps);
        b.push(exp(0, "a"), 3.0 - eps);
        b.push(exp(1, "b"), 1.0 - eps);
        let p = b.probabilities(SampleMode::Per);
        assert!((p[0] - 0.75).abs() < 1e-9 && (p[1] - 0.25).abs() < 1e-9);

        let mut b = PriorityBuffer::with_params(8, 1.0, eps);
        b.push(exp(0, "a"), 1.0);
        b.push(exp(1, "b"), 1.0);
        b.set_opponent_weight("a", 2.0).unwrap();
        let p = b.probabilities(SampleMode::Copper);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
        // PER ignores weights
        let p = b.probabilities(SampleMode::Per);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_make_copper_equal_per() {
        let mut b = PriorityBuffer::new(16);
        for i in 0..10 {
            b.push(exp(i, if i % 2 == 0 { "a" } else { "b" }), i as f64);
        }
        b.set_opponent_weight("a", 1.0).unwrap();
        assert_eq!(b.probabilities(SampleMode::Per), b.probabilities(SampleMode::Copper));
    }

    #[test]
    fn zero_exponent_is_uniform() {
        let mut b = PriorityBuffer::with_params(16, 0.0, 1e-3);
        for i in 0..5 {
            b.push(exp(i, "a"), (i * 7) as f64);
        }
        for p in b.probabilities(SampleMode::Per) {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn update_priorities_uses_abs_td() {
        let mut b = PriorityBuffer::new(2);
        b.push(exp(0, "a"), 1.0);
        b.push(exp(1, "a"), 1.0);
        let r = b.update_priorities(&[0, 1], &[0.0, -2.0]);
        assert_eq!(r.updated, 2);
        assert_eq!(b.priority(0), Some(DEFAULT_EPSILON_PRIORITY));
        assert_eq!(b.priority(1), Some(2.0 + DEFAULT_EPSILON_PRIORITY));
        b.push(exp(2, "a"), 1.0);
        let r = b.update_priorities(&[0, 2], &[1.0, 1.0]);
        assert_eq!(r.stale, vec![0]);
        assert_eq!(r.updated, 1);
    }

    #[test]
    fn invalid_weight_rejected() {
        let mut b = PriorityBuffer::new(2);
        assert!(b.set_opponent_weight("a", 0.0).is_err());
        assert!(b.set_opponent_weight("a", -1.0).is_err());
    }

    #[test]
    fn empty_sample_errors() {
        let mut b = PriorityBuffer::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(1, SampleMode::Per, &mut rng), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn sampled_ids_resolve_after_wraparound() {
        let mut b = PriorityBuffer::new(3);
        for i in 0..7 {
            b.push(exp(i, "a"), 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = b.sample(50, SampleMode::Per, &mut rng).unwrap();
        for (id, e) in batch.ids.iter().zip(&batch.experiences) {
            assert_eq!(b.get(*id).unwrap(), e);
            assert_eq!(e.action_index as u64, *id);
        }
        let s: f64 = b.probabilities(SampleMode::Per).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
