//! Run configuration.
//!
//! Files are flat UTF-8 `key = value` lines; `#` starts a comment. Unknown
//! keys are rejected so that a typo never silently falls back to a default.
//! Defaults depend on the environment, so the `env` key is resolved first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::distill::SparsityWeights;
use crate::envs::{make_env, EnvSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given twice")]
    DuplicateKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

pub const KEYS: &[&str] = &[
    "env",
    "method",
    "seed",
    "seeds",
    "total_steps",
    "learning_start",
    "gamma",
    "lr",
    "batch_size",
    "replay_capacity",
    "n1",
    "n2",
    "n3",
    "n4",
    "eps_start",
    "eps_end",
    "eps_fraction",
    "target_sync",
    "eps_intervention",
    "w_interv",
    "w_reward",
    "w_sparse",
    "w_orth",
    "w_log",
    "w_l1",
    "eps_log",
    "grid_size",
    "horizon",
    "distractor_dims",
    "scoreboard",
    "chain_length",
    "hidden",
    "k",
    "eval_episodes",
    "metric_episodes",
    "metric_states",
    "criticality_threshold",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub method: String,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub learning_start: u64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Update periods, in environment steps, of the distillation block,
    /// the orthogonality block, the full-reward TD block and the
    /// per-channel TD block.
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub n4: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_fraction: f64,
    pub target_sync: u64,
    pub eps_intervention: f64,
    pub w_interv: f64,
    pub w_reward: f64,
    pub w_sparse: f64,
    pub w_orth: f64,
    pub w_log: f64,
    pub w_l1: f64,
    pub eps_log: f64,
    pub grid_size: usize,
    pub horizon: usize,
    pub distractor_dims: usize,
    pub scoreboard: bool,
    pub chain_length: usize,
    pub hidden: usize,
    /// Expected number of reward channels; checked against the env.
    pub k: Option<usize>,
    pub eval_episodes: usize,
    pub metric_episodes: usize,
    pub metric_states: usize,
    pub criticality_threshold: f64,
}

impl RunConfig {
    pub fn defaults_for(env: &str) -> Self {
        let pixel = env == "pixel_grid";
        let es = EnvSettings::defaults_for(env);
        RunConfig {
            env: env.to_string(),
            method: "q_mask".into(),
            seeds: vec![0],
            total_steps: 50_000,
            learning_start: if pixel { 5_000 } else { 1_000 },
            gamma: 0.95,
            lr: crate::approx::DEFAULT_LR,
            batch_size: crate::replay::DEFAULT_BATCH_SIZE,
            replay_capacity: if pixel {
                20_000
            } else {
                crate::replay::DEFAULT_CAPACITY
            },
            n1: if pixel { 20 } else { 4 },
            n2: if pixel { 100 } else { 16 },
            n3: if pixel { 20 } else { 4 },
            n4: if pixel { 20 } else { 4 },
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.2,
            target_sync: 1_000,
            eps_intervention: 0.5,
            w_interv: 1.0,
            w_reward: 1.0,
            w_sparse: 0.1,
            w_orth: 0.1,
            w_log: 0.1,
            w_l1: 1.0,
            eps_log: 1e-6,
            grid_size: es.grid_size,
            horizon: es.horizon,
            distractor_dims: es.distractor_dims,
            scoreboard: es.scoreboard,
            chain_length: es.chain_length,
            hidden: 64,
            k: None,
            eval_episodes: 100,
            metric_episodes: 16,
            metric_states: 512,
            criticality_threshold: 0.10,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }

    /// Copy restricted to a single seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        RunConfig {
            seeds: vec![seed],
            ..self.clone()
        }
    }

    pub fn env_settings(&self) -> EnvSettings {
        EnvSettings {
            grid_size: self.grid_size,
            horizon: self.horizon,
            distractor_dims: self.distractor_dims,
            scoreboard: self.scoreboard,
            chain_length: self.chain_length,
        }
    }

    pub fn sparsity_weights(&self) -> SparsityWeights {
        SparsityWeights {
            w_log: self.w_log,
            w_l1: self.w_l1,
            eps_log: self.eps_log,
        }
    }

    /// ε of the behaviour policy after `step` environment steps.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        let span = self.eps_fraction * self.total_steps as f64;
        if span <= 0.0 {
            return self.eps_end;
        }
        let frac = (step as f64 / span).min(1.0);
        self.eps_start + frac * (self.eps_end - self.eps_start)
    }

    /// Parses a config text. `overrides` are applied after the file and
    /// win over it; an `env` override also selects the defaults.
    pub fn parse(text: &str, overrides: &[(&str, String)]) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey(k.to_string()));
            }
        }
        for (k, v) in overrides {
            if !KEYS.contains(k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            entries.insert(k.to_string(), v.clone());
        }
        if entries.contains_key("seed") && entries.contains_key("seeds") {
            let seeds = entries.remove("seeds").unwrap();
            let seed = entries.remove("seed").unwrap();
            // A single-seed override replaces a list from the file and
            // vice versa; the later source wins.
            let from_override = |key: &str| overrides.iter().any(|(k, _)| *k == key);
            if from_override("seed") && !from_override("seeds") {
                entries.insert("seed".into(), seed);
            } else {
                entries.insert("seeds".into(), seeds);
            }
        }
        let env = entries
            .get("env")
            .cloned()
            .unwrap_or_else(|| "monster_treasure".to_string());
        let mut cfg = RunConfig::defaults_for(&env);
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(&str, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text, overrides)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        }
        match key {
            "env" => self.env = value.to_string(),
            "method" => self.method = value.to_string(),
            "seed" => self.seeds = vec![num(key, value)?],
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "total_steps" => self.total_steps = num(key, value)?,
            "learning_start" => self.learning_start = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "replay_capacity" => self.replay_capacity = num(key, value)?,
            "n1" => self.n1 = num(key, value)?,
            "n2" => self.n2 = num(key, value)?,
            "n3" => self.n3 = num(key, value)?,
            "n4" => self.n4 = num(key, value)?,
            "eps_start" => self.eps_start = num(key, value)?,
            "eps_end" => self.eps_end = num(key, value)?,
            "eps_fraction" => self.eps_fraction = num(key, value)?,
            "target_sync" => self.target_sync = num(key, value)?,
            "eps_intervention" => self.eps_intervention = num(key, value)?,
            "w_interv" => self.w_interv = num(key, value)?,
            "w_reward" => self.w_reward = num(key, value)?,
            "w_sparse" => self.w_sparse = num(key, value)?,
            "w_orth" => self.w_orth = num(key, value)?,
            "w_log" => self.w_log = num(key, value)?,
            "w_l1" => self.w_l1 = num(key, value)?,
            "eps_log" => self.eps_log = num(key, value)?,
            "grid_size" => self.grid_size = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "distractor_dims" => self.distractor_dims = num(key, value)?,
            "scoreboard" => self.scoreboard = num(key, value)?,
            "chain_length" => self.chain_length = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "k" => self.k = Some(num(key, value)?),
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "metric_episodes" => self.metric_episodes = num(key, value)?,
            "metric_states" => self.metric_states = num(key, value)?,
            "criticality_threshold" => self.criticality_threshold = num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Inconsistent(msg));
        if crate::agents::MethodRegistry::builtin()
            .get(&self.method)
            .is_none()
        {
            return bad(format!("unknown method {:?}", self.method));
        }
        let env = match make_env(&self.env, &self.env_settings()) {
            Ok(e) => e,
            Err(e) => return bad(e.to_string()),
        };
        if let Some(k) = self.k {
            if k != env.reward_channels() {
                return bad(format!(
                    "k = {k} but {} has {} reward channels",
                    self.env,
                    env.reward_channels()
                ));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.n1 == 0 || self.n2 == 0 || self.n3 == 0 || self.n4 == 0 {
            return bad("update frequencies n1..n4 must be at least 1".into());
        }
        if self.target_sync == 0 {
            return bad("target_sync must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.hidden == 0 {
            return bad("batch_size, replay_capacity and hidden must be positive".into());
        }
        if !(self.eps_intervention > 0.0 && self.eps_intervention <= 1.0) {
            return bad(format!(
                "eps_intervention must lie in (0, 1], got {}",
                self.eps_intervention
            ));
        }
        if self.eps_log <= 0.0 {
            return bad("eps_log must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("env", self.env.clone());
        kv("method", self.method.clone());
        kv("seeds", seeds.join(","));
        kv("total_steps", self.total_steps.to_string());
        kv("learning_start", self.learning_start.to_string());
        kv("gamma", self.gamma.to_string());
        kv("lr", self.lr.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("replay_capacity", self.replay_capacity.to_string());
        kv("n1", self.n1.to_string());
        kv("n2", self.n2.to_string());
        kv("n3", self.n3.to_string());
        kv("n4", self.n4.to_string());
        kv("eps_start", self.eps_start.to_string());
        kv("eps_end", self.eps_end.to_string());
        kv("eps_fraction", self.eps_fraction.to_string());
        kv("target_sync", self.target_sync.to_string());
        kv("eps_intervention", self.eps_intervention.to_string());
        kv("w_interv", self.w_interv.to_string());
        kv("w_reward", self.w_reward.to_string());
        kv("w_sparse", self.w_sparse.to_string());
        kv("w_orth", self.w_orth.to_string());
        kv("w_log", self.w_log.to_string());
        kv("w_l1", self.w_l1.to_string());
        kv("eps_log", self.eps_log.to_string());
        kv("grid_size", self.grid_size.to_string());
        kv("horizon", self.horizon.to_string());
        kv("distractor_dims", self.distractor_dims.to_string());
        kv("scoreboard", self.scoreboard.to_string());
        kv("chain_length", self.chain_length.to_string());
        kv("hidden", self.hidden.to_string());
        if let Some(k) = self.k {
            kv("k", k.to_string());
        }
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("metric_episodes", self.metric_episodes.to_string());
        kv("metric_states", self.metric_states.to_string());
        kv("criticality_threshold", self.criticality_threshold.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_monster_treasure_defaults() {
        let c = RunConfig::parse("", &[]).unwrap();
        assert_eq!(c, RunConfig::defaults_for("monster_treasure"));
        assert_eq!((c.n1, c.n2, c.n3, c.n4), (4, 16, 4, 4));
        assert_eq!(c.gamma, 0.95);
        assert_eq!(c.lr, 6.25e-5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.learning_start, 1000);
    }

    #[test]
    fn pixel_defaults_follow_env() {
        let c = RunConfig::parse("env = pixel_grid\n", &[]).unwrap();
        assert_eq!((c.n1, c.n2, c.n3, c.n4), (20, 100, 20, 20));
        assert_eq!(c.learning_start, 5000);
    }

    #[test]
    fn comments_and_overrides() {
        let text = "# run\nmethod = r_mask # inline\nseed = 3\ntotal_steps = 10\n";
        let c = RunConfig::parse(text, &[("total_steps", "20".into())]).unwrap();
        assert_eq!(c.method, "r_mask");
        assert_eq!(c.seeds, vec![3]);
        assert_eq!(c.total_steps, 20);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(matches!(
            RunConfig::parse("gamm = 0.9\n", &[]),
            Err(ConfigError::UnknownKey(k)) if k == "gamm"
        ));
    }

    #[test]
    fn zero_frequency_and_bad_k_rejected() {
        assert!(matches!(
            RunConfig::parse("n2 = 0\n", &[]),
            Err(ConfigError::Inconsistent(_))
        ));
        assert!(matches!(
            RunConfig::parse("k = 3\n", &[]),
            Err(ConfigError::Inconsistent(_))
        ));
        assert!(RunConfig::parse("k = 2\n", &[]).is_ok());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            RunConfig::parse("gamma 0.9\n", &[]),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("gamma = x\n", &[]),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("gamma = 0.9\ngamma = 0.8\n", &[]),
            Err(ConfigError::DuplicateKey(_))
        ));
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::defaults_for("pixel_grid");
        c.seeds = vec![1, 2, 5];
        c.lr = 3.3e-4;
        c.k = Some(2);
        let back = RunConfig::parse(&c.to_text(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let mut c = RunConfig::defaults_for("monster_treasure");
        c.total_steps = 1000;
        assert_eq!(c.epsilon_at(0), 1.0);
        assert!((c.epsilon_at(100) - 0.525).abs() < 1e-12);
        assert!((c.epsilon_at(200) - 0.05).abs() < 1e-12);
        assert!((c.epsilon_at(900) - 0.05).abs() < 1e-12);
    }
}
