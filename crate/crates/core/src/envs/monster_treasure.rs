use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, Environment, InputEncoding, RewardVector, State, StepOutcome, VectorState};

pub const MT_DIM_LABELS: [&str; 6] = [
    "agent_x",
    "agent_y",
    "monster_x",
    "monster_y",
    "treasure_x",
    "treasure_y",
];

pub const TREASURE_REWARD: f64 = 2.0;
pub const MONSTER_PENALTY: f64 = -2.0;

/// Grid world with an agent, a monster and a treasure.
///
/// Channel 0 pays +2 for reaching the treasure, channel 1 pays -2 for
/// stepping onto the monster; both end the episode. Moves that would leave
/// the grid keep the agent in place. Optional distractor dimensions are
/// redrawn uniformly every step and never influence dynamics or reward.
#[derive(Clone, Debug)]
pub struct MonsterTreasure {
    grid: usize,
    horizon: usize,
    distractors: usize,
    labels: Arc<Vec<String>>,
    rng: ChaCha8Rng,
    agent: (usize, usize),
    monster: (usize, usize),
    treasure: (usize, usize),
    noise: Vec<f64>,
    t: usize,
    done: bool,
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

impl MonsterTreasure {
    pub fn new(grid: usize, horizon: usize, distractors: usize) -> Result<Self, EnvError> {
        if grid < 2 {
            return Err(EnvError::Setting(format!("grid_size must be >= 2, got {grid}")));
        }
        if horizon == 0 {
            return Err(EnvError::Setting("horizon must be positive".into()));
        }
        let mut labels: Vec<String> = MT_DIM_LABELS.iter().map(|s| s.to_string()).collect();
        labels.extend((0..distractors).map(|i| format!("distractor_{i}")));
        Ok(MonsterTreasure {
            grid,
            horizon,
            distractors,
            labels: Arc::new(labels),
            rng: ChaCha8Rng::seed_from_u64(0),
            agent: (0, 0),
            monster: (1, 0),
            treasure: (2, 0),
            noise: vec![0.0; distractors],
            t: 0,
            done: false,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid
    }

    fn observe(&self) -> State {
        let mut values = vec![
            self.agent.0 as f64,
            self.agent.1 as f64,
            self.monster.0 as f64,
            self.monster.1 as f64,
            self.treasure.0 as f64,
            self.treasure.1 as f64,
        ];
        values.extend_from_slice(&self.noise);
        State::Vector(VectorState {
            values,
            dim_labels: self.labels.clone(),
        })
    }

    fn draw_noise(&mut self) {
        for v in &mut self.noise {
            *v = self.rng.gen_range(0..self.grid) as f64;
        }
    }

    /// Builds the observation for explicit `(x, y)` positions.
    pub fn state_at(
        &self,
        agent: (usize, usize),
        monster: (usize, usize),
        treasure: (usize, usize),
    ) -> State {
        let mut env = self.clone();
        env.agent = agent;
        env.monster = monster;
        env.treasure = treasure;
        env.observe()
    }

    /// Puts the environment into `state` and starts a fresh episode clock.
    pub fn restore(&mut self, state: &State) -> Result<(), EnvError> {
        let v = state
            .as_vector()
            .ok_or_else(|| EnvError::InvalidState("expected a vector state".into()))?;
        if v.values.len() != 6 + self.distractors {
            return Err(EnvError::InvalidState(format!(
                "expected {} dims, got {}",
                6 + self.distractors,
                v.values.len()
            )));
        }
        let mut cells = [(0usize, 0usize); 3];
        for (k, cell) in cells.iter_mut().enumerate() {
            let (x, y) = (v.values[2 * k], v.values[2 * k + 1]);
            let ok = |c: f64| c >= 0.0 && c.fract() == 0.0 && (c as usize) < self.grid;
            if !ok(x) || !ok(y) {
                return Err(EnvError::InvalidState(format!("coordinate ({x}, {y}) off grid")));
            }
            *cell = (x as usize, y as usize);
        }
        if cells[0] == cells[1] || cells[0] == cells[2] || cells[1] == cells[2] {
            return Err(EnvError::InvalidState("entities must occupy distinct cells".into()));
        }
        self.agent = cells[0];
        self.monster = cells[1];
        self.treasure = cells[2];
        self.noise = v.values[6..].to_vec();
        self.t = 0;
        self.done = false;
        Ok(())
    }

    /// All starting configurations (distractors at zero).
    pub fn all_start_states(&self) -> Vec<State> {
        let cells: Vec<(usize, usize)> = (0..self.grid)
            .flat_map(|y| (0..self.grid).map(move |x| (x, y)))
            .collect();
        let mut out = Vec::new();
        for &a in &cells {
            for &m in &cells {
                for &t in &cells {
                    if a != m && a != t && m != t {
                        out.push(self.state_at(a, m, t));
                    }
                }
            }
        }
        out
    }

    pub fn moved(&self, pos: (usize, usize), action: usize) -> (usize, usize) {
        let (x, y) = pos;
        match action {
            UP => (x, y.saturating_sub(1)),
            DOWN => (x, (y + 1).min(self.grid - 1)),
            LEFT => (x.saturating_sub(1), y),
            _ => ((x + 1).min(self.grid - 1), y),
        }
    }
}

impl Environment for MonsterTreasure {
    fn id(&self) -> &'static str {
        "monster_treasure"
    }

    fn action_count(&self) -> usize {
        4
    }

    fn action_names(&self) -> Vec<&'static str> {
        vec!["up", "down", "left", "right"]
    }

    fn reward_channels(&self) -> usize {
        2
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![6 + self.distractors]
    }

    fn input_encoding(&self) -> InputEncoding {
        InputEncoding::Scaled(1.0 / (self.grid - 1) as f64)
    }

    fn reset(&mut self, seed: u64) -> State {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = sample(&mut self.rng, self.grid * self.grid, 3);
        let cell = |i: usize| (i % self.grid, i / self.grid);
        self.agent = cell(picks.index(0));
        self.monster = cell(picks.index(1));
        self.treasure = cell(picks.index(2));
        self.draw_noise();
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= 4 {
            return Err(EnvError::InvalidAction { action, count: 4 });
        }
        self.agent = self.moved(self.agent, action);
        self.t += 1;
        let (reward, done) = if self.agent == self.treasure {
            (vec![TREASURE_REWARD, 0.0], true)
        } else if self.agent == self.monster {
            (vec![0.0, MONSTER_PENALTY], true)
        } else {
            (vec![0.0, 0.0], false)
        };
        let truncated = !done && self.t >= self.horizon;
        self.done = done || truncated;
        self.draw_noise();
        Ok(StepOutcome {
            state: self.observe(),
            reward: RewardVector::new(reward),
            done,
            truncated,
        })
    }

    fn clean_state(&self, state: &State, rng: &mut dyn RngCore) -> State {
        let mut out = state.clone();
        if let State::Vector(v) = &mut out {
            for d in self.distractor_dims() {
                if d < v.values.len() {
                    v.values[d] = rng.gen_range(0..self.grid) as f64;
                }
            }
        }
        out
    }

    /// Treasure channel keeps agent and treasure coordinates, monster
    /// channel keeps agent and monster coordinates.
    fn ideal_masks(&self) -> Result<Vec<Vec<f64>>, EnvError> {
        let mut treasure = vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let mut monster = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        treasure.extend(std::iter::repeat(0.0).take(self.distractors));
        monster.extend(std::iter::repeat(0.0).take(self.distractors));
        Ok(vec![treasure, monster])
    }

    fn distractor_dims(&self) -> Vec<usize> {
        (6..6 + self.distractors).collect()
    }
}
