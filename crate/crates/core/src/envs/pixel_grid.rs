use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, Environment, PixelState, Region, RewardVector, State, StepOutcome};

pub const PIXEL_SIDE: usize = 32;
pub const SCOREBOARD_ROWS: usize = 4;
const CELL: usize = 4;
const CELL_ROWS: usize = (PIXEL_SIDE - SCOREBOARD_ROWS) / CELL;
const CELL_COLS: usize = PIXEL_SIDE / CELL;

const AGENT_VALUE: f32 = 1.0;
const PREY_VALUE: f32 = 0.7;
const SEED_VALUE: f32 = 0.35;
const SCORE_VALUE: f32 = 0.9;
const BACKGROUND: f32 = 0.0;

pub const PREY_REWARD: f64 = 0.8;
pub const SEED_REWARD: f64 = 0.15;

/// 32×32 grayscale collection game.
///
/// The agent walks a 7×8 cell field below a 4-row scoreboard. Catching
/// the prey pays 0.8 on channel 0, picking up a seed pays 0.15 on channel
/// 1; both respawn on a random free cell. The scoreboard draws the
/// cumulative score as a bar and is the non-causal region of the image.
#[derive(Clone, Debug)]
pub struct PixelGrid {
    horizon: usize,
    scoreboard: bool,
    rng: ChaCha8Rng,
    agent: (usize, usize),
    prey: (usize, usize),
    seed: (usize, usize),
    score: f64,
    t: usize,
    done: bool,
}

impl PixelGrid {
    pub fn new(horizon: usize, scoreboard: bool) -> Self {
        PixelGrid {
            horizon: horizon.max(1),
            scoreboard,
            rng: ChaCha8Rng::seed_from_u64(0),
            agent: (0, 0),
            prey: (1, 0),
            seed: (2, 0),
            score: 0.0,
            t: 0,
            done: false,
        }
    }

    fn free_cell(&mut self, taken: &[(usize, usize)]) -> (usize, usize) {
        loop {
            let c = (self.rng.gen_range(0..CELL_COLS), self.rng.gen_range(0..CELL_ROWS));
            if !taken.contains(&c) {
                return c;
            }
        }
    }

    pub fn scoreboard_region() -> Region {
        Region {
            row0: 0,
            col0: 0,
            row1: SCOREBOARD_ROWS,
            col1: PIXEL_SIDE,
        }
    }

    /// Renders an arbitrary configuration; used by tests and the
    /// intervention suite.
    pub fn render_with(
        &self,
        agent: (usize, usize),
        prey: (usize, usize),
        seed: (usize, usize),
        score: f64,
    ) -> State {
        let mut px = vec![BACKGROUND; PIXEL_SIDE * PIXEL_SIDE];
        let mut paint = |cell: (usize, usize), v: f32| {
            let (r0, c0) = (SCOREBOARD_ROWS + cell.1 * CELL, cell.0 * CELL);
            for r in r0..r0 + 3 {
                for c in c0..c0 + 3 {
                    px[r * PIXEL_SIDE + c] = v;
                }
            }
        };
        paint(seed, SEED_VALUE);
        paint(prey, PREY_VALUE);
        paint(agent, AGENT_VALUE);
        if self.scoreboard {
            let bar = ((score * 4.0).round() as usize).min(PIXEL_SIDE);
            for r in 1..3 {
                for c in 0..bar {
                    px[r * PIXEL_SIDE + c] = SCORE_VALUE;
                }
            }
        }
        State::Pixel(Arc::new(PixelState {
            height: PIXEL_SIDE,
            width: PIXEL_SIDE,
            channels: 1,
            pixels: px,
            noncausal_region: self.scoreboard.then(Self::scoreboard_region),
        }))
    }

    fn observe(&self) -> State {
        self.render_with(self.agent, self.prey, self.seed, self.score)
    }
}

impl Environment for PixelGrid {
    fn id(&self) -> &'static str {
        "pixel_grid"
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
        vec![1, PIXEL_SIDE, PIXEL_SIDE]
    }

    fn reset(&mut self, seed: u64) -> State {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = self.free_cell(&[]);
        self.prey = self.free_cell(&[self.agent]);
        self.seed = self.free_cell(&[self.agent, self.prey]);
        self.score = 0.0;
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
        let (x, y) = self.agent;
        self.agent = match action {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(CELL_ROWS - 1)),
            2 => (x.saturating_sub(1), y),
            _ => ((x + 1).min(CELL_COLS - 1), y),
        };
        let mut reward = vec![0.0, 0.0];
        if self.agent == self.prey {
            reward[0] = PREY_REWARD;
            self.prey = self.free_cell(&[self.agent, self.seed]);
        }
        if self.agent == self.seed {
            reward[1] = SEED_REWARD;
            self.seed = self.free_cell(&[self.agent, self.prey]);
        }
        let reward = RewardVector::new(reward);
        self.score += reward.total;
        self.t += 1;
        let truncated = self.t >= self.horizon;
        self.done = truncated;
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            done: false,
            truncated,
        })
    }

    /// Blanks the scoreboard strip to background.
    fn clean_state(&self, state: &State, _rng: &mut dyn RngCore) -> State {
        let State::Pixel(p) = state else {
            return state.clone();
        };
        let Some(region) = p.noncausal_region else {
            return state.clone();
        };
        let mut out = (**p).clone();
        for c in 0..out.channels {
            for r in region.row0..region.row1.min(out.height) {
                for col in region.col0..region.col1.min(out.width) {
                    out.pixels[(c * out.height + r) * out.width + col] = BACKGROUND;
                }
            }
        }
        State::Pixel(Arc::new(out))
    }
}
