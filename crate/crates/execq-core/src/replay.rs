//! Experience replay memory.
//!
//! Insertion order is preserved. Once the buffer is full, each push first
//! deletes one uniformly random element from the oldest half, so recently
//! stored transitions always survive long enough to be sampled.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::NextStateTag;
use crate::error::{Error, Result};
use crate::features::RawState;

/// One stored experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Raw state at the decision time.
    pub state: RawState,
    /// Lots sold over the period; admissible for `state`.
    pub action: u32,
    /// Realized reward. On the final step this already includes the
    /// forced-liquidation component.
    pub reward: f64,
    /// Raw state at the next decision time (or horizon end).
    pub next_state: RawState,
    /// Position of the next state on the decision grid.
    pub tag: NextStateTag,
    /// Realized forced-liquidation value of the next state over the final
    /// period; meaningful only when `tag` is `Penultimate`.
    pub penultimate_bootstrap: f64,
}

impl Transition {
    /// Inventory remaining at the source state.
    pub fn q_remaining(&self) -> u32 {
        self.state.q
    }
}

/// Bounded replay memory with half-buffer random eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    store: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Argument("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            store: VecDeque::with_capacity(capacity),
            rng: rand::SeedableRng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest-first view of the stored transitions.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.store.iter()
    }

    /// Appends a transition, evicting one element from the oldest half
    /// first when the buffer is full.
    pub fn push(&mut self, t: Transition) {
        if self.store.len() == self.capacity {
            let half = (self.capacity / 2).max(1);
            let victim = self.rng.random_range(0..half);
            self.store.remove(victim);
        }
        self.store.push_back(t);
    }

    /// `j` independent uniform draws with replacement. Deterministic given
    /// the caller's RNG state.
    pub fn sample<'a, R: Rng>(&'a self, j: usize, rng: &mut R) -> Result<Vec<&'a Transition>> {
        if self.store.is_empty() {
            return Err(Error::State("cannot sample from an empty buffer".into()));
        }
        Ok((0..j)
            .map(|_| &self.store[rng.random_range(0..self.store.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker(id: f64) -> Transition {
        let raw = RawState {
            k: 0,
            q: 5,
            price: 10.0,
            hour_start_price: 10.0,
            qv_prev: 0.0,
        };
        Transition {
            state: raw,
            action: 1,
            reward: id,
            next_state: RawState { k: 1, ..raw },
            tag: NextStateTag::Interior(1),
            penultimate_bootstrap: 0.0,
        }
    }

    fn ids(buf: &ReplayBuffer) -> Vec<i64> {
        buf.iter().map(|t| t.reward as i64).collect()
    }

    #[test]
    fn push_grows_until_capacity() {
        let mut buf = ReplayBuffer::new(8, 0).unwrap();
        buf.push(marker(1.0));
        assert_eq!(buf.len(), 1);
        for i in 2..=8 {
            buf.push(marker(i as f64));
        }
        assert_eq!(ids(&buf), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn overflow_evicts_only_from_oldest_half() {
        // K=4: after pushing 1..4, pushing 5 must evict 1 or 2.
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let mut buf = ReplayBuffer::new(4, seed).unwrap();
            for i in 1..=4 {
                buf.push(marker(i as f64));
            }
            buf.push(marker(5.0));
            assert_eq!(buf.len(), 4);
            let kept = ids(&buf);
            let evicted: Vec<i64> = (1..=5).filter(|i| !kept.contains(i)).collect();
            assert_eq!(evicted.len(), 1);
            assert!(evicted[0] == 1 || evicted[0] == 2, "evicted {}", evicted[0]);
            seen.insert(evicted[0]);
        }
        // Both oldest-half positions are reachable.
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn sample_single_element_repeats() {
        let mut buf = ReplayBuffer::new(4, 0).unwrap();
        buf.push(marker(7.0));
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(1);
        let batch = buf.sample(3, &mut rng).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|t| t.reward == 7.0));
    }

    #[test]
    fn sample_empty_is_state_error() {
        let buf = ReplayBuffer::new(4, 0).unwrap();
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(1);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn sample_same_seed_identical() {
        let mut buf = ReplayBuffer::new(16, 0).unwrap();
        for i in 0..16 {
            buf.push(marker(i as f64));
        }
        let mut r1: ChaCha8Rng = rand::SeedableRng::seed_from_u64(5);
        let mut r2: ChaCha8Rng = rand::SeedableRng::seed_from_u64(5);
        let b1: Vec<f64> = buf.sample(8, &mut r1).unwrap().iter().map(|t| t.reward).collect();
        let b2: Vec<f64> = buf.sample(8, &mut r2).unwrap().iter().map(|t| t.reward).collect();
        assert_eq!(b1, b2);
    }

    #[test]
    fn sample_uniformity_chi_squared() {
        let mut buf = ReplayBuffer::new(10, 0).unwrap();
        for i in 0..10 {
            buf.push(marker(i as f64));
        }
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(2024);
        let draws = 100_000usize;
        let mut counts = [0u64; 10];
        for t in buf.sample(draws, &mut rng).unwrap() {
            counts[t.reward as usize] += 1;
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // Critical value for chi-squared with 9 degrees of freedom at
        // p = 0.01 is 21.666.
        assert!(chi2 < 21.666, "chi-squared statistic {chi2}");
    }
}
