use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, Environment, RewardVector, State, StepOutcome, VectorState};

pub const GOAL_REWARD: f64 = 1.0;
pub const STEP_COST: f64 = -0.1;

/// Deterministic chain of `n` states with one-hot observations.
///
/// Action 0 moves left (clamped at state 0), action 1 moves right. Entering
/// the last state pays +1 on channel 0 and terminates; every move costs
/// 0.1 on channel 1. Small enough for exact value iteration.
#[derive(Clone, Debug)]
pub struct ChainEnv {
    n: usize,
    horizon: usize,
    labels: Arc<Vec<String>>,
    pos: usize,
    t: usize,
    done: bool,
}

impl ChainEnv {
    pub fn new(n: usize, horizon: usize) -> Result<Self, EnvError> {
        if n < 2 {
            return Err(EnvError::Setting(format!("chain_length must be >= 2, got {n}")));
        }
        Ok(ChainEnv {
            n,
            horizon: horizon.max(1),
            labels: Arc::new((0..n).map(|i| format!("s{i}")).collect()),
            pos: 0,
            t: 0,
            done: false,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Deterministic model: `(next, per-channel reward, terminal)`.
    pub fn transition(&self, s: usize, a: usize) -> (usize, [f64; 2], bool) {
        let next = if a == 0 { s.saturating_sub(1) } else { (s + 1).min(self.n - 1) };
        if next == self.n - 1 {
            (next, [GOAL_REWARD, STEP_COST], true)
        } else {
            (next, [0.0, STEP_COST], false)
        }
    }

    pub fn one_hot(&self, s: usize) -> State {
        let mut values = vec![0.0; self.n];
        values[s] = 1.0;
        State::Vector(VectorState {
            values,
            dim_labels: self.labels.clone(),
        })
    }
}

impl Environment for ChainEnv {
    fn id(&self) -> &'static str {
        "chain"
    }

    fn action_count(&self) -> usize {
        2
    }

    fn action_names(&self) -> Vec<&'static str> {
        vec!["left", "right"]
    }

    fn reward_channels(&self) -> usize {
        2
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.n]
    }

    fn reset(&mut self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = rng.gen_range(0..self.n - 1);
        self.t = 0;
        self.done = false;
        self.one_hot(self.pos)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, count: 2 });
        }
        let (next, r, terminal) = self.transition(self.pos, action);
        self.pos = next;
        self.t += 1;
        let truncated = !terminal && self.t >= self.horizon;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            state: self.one_hot(next),
            reward: RewardVector::new(r.to_vec()),
            done: terminal,
            truncated,
        })
    }

    fn clean_state(&self, state: &State, _rng: &mut dyn RngCore) -> State {
        state.clone()
    }
}
