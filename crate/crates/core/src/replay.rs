//! Bounded FIFO experience store with uniform sampling.

use rand::Rng;

use crate::envs::EpisodeStep;

pub const DEFAULT_CAPACITY: usize = 100_000;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("replay holds {available} transitions, batch needs {requested}")]
    InsufficientData { available: usize, requested: usize },
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<EpisodeStep>,
    write_cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: Vec::with_capacity(capacity.min(4096)),
            write_cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends, or overwrites the oldest entry once full.
    pub fn push(&mut self, step: EpisodeStep) {
        if self.entries.len() < self.capacity {
            self.entries.push(step);
        } else {
            self.entries[self.write_cursor] = step;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &EpisodeStep> {
        let split = if self.entries.len() < self.capacity {
            0
        } else {
            self.write_cursor
        };
        self.entries[split..].iter().chain(&self.entries[..split])
    }

    /// Draws `batch_size` entries uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&EpisodeStep>, ReplayError> {
        let n = self.entries.len();
        if n < batch_size || n == 0 {
            return Err(ReplayError::InsufficientData {
                available: n,
                requested: batch_size,
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.entries[rng.gen_range(0..n)])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{RewardVector, State, VectorState};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn step(tag: usize) -> EpisodeStep {
        let s = State::Vector(VectorState {
            values: vec![tag as f64],
            dim_labels: Arc::new(vec!["x".into()]),
        });
        EpisodeStep {
            state: s.clone(),
            action: tag % 4,
            reward: RewardVector::new(vec![tag as f64, -0.5]),
            next_state: s,
            done: false,
        }
    }

    fn tag(s: &EpisodeStep) -> usize {
        s.state.as_vector().unwrap().values[0] as usize
    }

    #[test]
    fn push_into_empty() {
        let mut b = ReplayBuffer::new(4);
        b.push(step(1));
        assert_eq!(b.len(), 1);
        assert_eq!(tag(b.iter_oldest_first().next().unwrap()), 1);
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        for t in [1, 2, 3] {
            b.push(step(t));
        }
        let tags: Vec<usize> = b.iter_oldest_first().map(tag).collect();
        assert_eq!(tags, vec![2, 3]);
    }

    #[test]
    fn push_keeps_reward_additivity() {
        let mut b = ReplayBuffer::new(2);
        b.push(step(5));
        assert!(b.iter_oldest_first().all(|s| s.reward.is_additive(1e-6)));
    }

    #[test]
    fn insufficient_data() {
        let mut b = ReplayBuffer::new(100);
        for t in 0..10 {
            b.push(step(t));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            b.sample(32, &mut rng).unwrap_err(),
            ReplayError::InsufficientData {
                available: 10,
                requested: 32
            }
        );
    }

    #[test]
    fn same_rng_state_same_batch() {
        let mut b = ReplayBuffer::new(100);
        for t in 0..50 {
            b.push(step(t));
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = r1.clone();
        let a: Vec<usize> = b.sample(32, &mut r1).unwrap().into_iter().map(tag).collect();
        let c: Vec<usize> = b.sample(32, &mut r2).unwrap().into_iter().map(tag).collect();
        assert_eq!(a, c);
    }

    #[test]
    fn sampling_is_uniform_within_three_sigma() {
        let mut b = ReplayBuffer::new(4);
        for t in 0..4 {
            b.push(step(t));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n / 4 {
            for s in b.sample(4, &mut rng).unwrap() {
                counts[tag(s)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let p = 0.25;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        for c in counts {
            let freq = c as f64 / total as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "{freq}");
        }
    }

    proptest! {
        #[test]
        fn eviction_matches_list_model(cap in 1usize..8, pushes in 0usize..40, seed in any::<u64>()) {
            let mut b = ReplayBuffer::new(cap);
            let mut model: Vec<usize> = Vec::new();
            for t in 0..pushes {
                b.push(step(t));
                model.push(t);
                if model.len() > cap {
                    model.remove(0);
                }
            }
            let got: Vec<usize> = b.iter_oldest_first().map(tag).collect();
            prop_assert_eq!(&got, &model);
            if !b.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for s in b.sample(b.len(), &mut rng).unwrap() {
                    prop_assert!(model.contains(&tag(s)));
                }
            }
        }
    }
}
