//! Environments with K additive reward channels.
//!
//! Every environment reports its reward split into channels plus the total,
//! knows how to produce a "clean" counterpart of a state with its
//! non-causal content removed, and, where the ground truth is known, the
//! ideal per-channel masks over its state dimensions.

mod chain;
mod monster_treasure;
mod pixel_grid;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use chain::ChainEnv;
pub use monster_treasure::{MonsterTreasure, DOWN, LEFT, MT_DIM_LABELS, RIGHT, UP};
pub use pixel_grid::{PixelGrid, PIXEL_SIDE, SCOREBOARD_ROWS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode terminated")]
    StepAfterDone,
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("ground truth masks are not available for {0}")]
    NotAvailable(&'static str),
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid environment setting: {0}")]
    Setting(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorState {
    pub values: Vec<f64>,
    pub dim_labels: Arc<Vec<String>>,
}

/// Inclusive-exclusive pixel rectangle `rows row0..row1`, `cols col0..col1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Region {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }
}

/// Channel-major `C × H × W` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelState {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    pub noncausal_region: Option<Region>,
}

impl PixelState {
    pub fn at(&self, c: usize, row: usize, col: usize) -> f32 {
        self.pixels[(c * self.height + row) * self.width + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Vector(VectorState),
    Pixel(Arc<PixelState>),
}

impl State {
    pub fn as_vector(&self) -> Option<&VectorState> {
        match self {
            State::Vector(v) => Some(v),
            State::Pixel(_) => None,
        }
    }

    pub fn as_pixel(&self) -> Option<&PixelState> {
        match self {
            State::Pixel(p) => Some(p),
            State::Vector(_) => None,
        }
    }

    /// Network input for this state.
    pub fn encode(&self, encoding: InputEncoding) -> Vec<f64> {
        match (self, encoding) {
            (State::Vector(v), InputEncoding::Scaled(k)) => {
                v.values.iter().map(|x| x * k).collect()
            }
            (State::Vector(v), InputEncoding::Identity) => v.values.clone(),
            (State::Pixel(p), _) => p.pixels.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputEncoding {
    Identity,
    /// Multiply every coordinate by the factor.
    Scaled(f64),
}

/// Per-step reward split into channels, `total == Σ components`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub components: Vec<f64>,
    pub total: f64,
}

impl RewardVector {
    pub fn new(components: Vec<f64>) -> Self {
        let total = components.iter().sum();
        RewardVector { components, total }
    }

    pub fn zeros(k: usize) -> Self {
        RewardVector::new(vec![0.0; k])
    }

    pub fn is_additive(&self, tol: f64) -> bool {
        (self.total - self.components.iter().sum::<f64>()).abs() <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub reward: RewardVector,
    /// Terminal transition; bootstrapping stops here.
    pub done: bool,
    /// Time limit reached without termination.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub state: State,
    pub action: usize,
    pub reward: RewardVector,
    pub next_state: State,
    pub done: bool,
}

pub trait Environment: Send {
    fn id(&self) -> &'static str;
    fn action_count(&self) -> usize;
    fn action_names(&self) -> Vec<&'static str>;
    fn reward_channels(&self) -> usize;
    /// Per-sample network input shape.
    fn input_shape(&self) -> Vec<usize>;
    fn input_encoding(&self) -> InputEncoding {
        InputEncoding::Identity
    }
    /// Starts a new episode; the result depends only on `seed`.
    fn reset(&mut self, seed: u64) -> State;
    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError>;
    /// `state` with its declared non-causal content removed or resampled.
    fn clean_state(&self, state: &State, rng: &mut dyn RngCore) -> State;
    fn ideal_masks(&self) -> Result<Vec<Vec<f64>>, EnvError> {
        Err(EnvError::NotAvailable(self.id()))
    }
    /// Indices of state dimensions that carry no causal content.
    fn distractor_dims(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Settings shared by the environment factories.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSettings {
    pub grid_size: usize,
    pub horizon: usize,
    pub distractor_dims: usize,
    pub scoreboard: bool,
    pub chain_length: usize,
}

impl EnvSettings {
    pub fn defaults_for(env: &str) -> Self {
        EnvSettings {
            grid_size: 4,
            horizon: match env {
                "pixel_grid" => 100,
                "chain" => 50,
                _ => 64,
            },
            distractor_dims: 0,
            scoreboard: true,
            chain_length: 5,
        }
    }
}

type EnvFactory = fn(&EnvSettings) -> Result<Box<dyn Environment>, EnvError>;

/// Name → constructor table for every environment the CLI can select.
pub struct EnvRegistry {
    factories: BTreeMap<&'static str, EnvFactory>,
}

impl EnvRegistry {
    pub fn builtin() -> Self {
        let mut factories: BTreeMap<&'static str, EnvFactory> = BTreeMap::new();
        factories.insert("monster_treasure", |s| {
            Ok(Box::new(MonsterTreasure::new(
                s.grid_size,
                s.horizon,
                s.distractor_dims,
            )?))
        });
        factories.insert("pixel_grid", |s| {
            Ok(Box::new(PixelGrid::new(s.horizon, s.scoreboard)))
        });
        factories.insert("chain", |s| {
            Ok(Box::new(ChainEnv::new(s.chain_length, s.horizon)?))
        });
        EnvRegistry { factories }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn make(&self, id: &str, settings: &EnvSettings) -> Result<Box<dyn Environment>, EnvError> {
        let factory = self
            .factories
            .get(id)
            .ok_or_else(|| EnvError::UnknownEnv(id.to_string()))?;
        factory(settings)
    }
}

pub fn make_env(id: &str, settings: &EnvSettings) -> Result<Box<dyn Environment>, EnvError> {
    EnvRegistry::builtin().make(id, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_builtin_envs() {
        let reg = EnvRegistry::builtin();
        assert_eq!(reg.names(), vec!["chain", "monster_treasure", "pixel_grid"]);
        assert!(matches!(
            reg.make("atari", &EnvSettings::defaults_for("atari")),
            Err(EnvError::UnknownEnv(_))
        ));
    }

    #[test]
    fn reward_vector_total_is_component_sum() {
        let r = RewardVector::new(vec![2.288, -0.29]);
        assert!((r.total - 1.998).abs() < 1e-12);
        assert!(r.is_additive(1e-6));
    }
}
