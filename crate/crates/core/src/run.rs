//! Run directories: one per seed, holding the config snapshot, the
//! checkpoint and the training log.

use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::{train, AgentError, LogRow, TrainRun, TrainedBundle, LOG_HEADER};
use crate::approx::ParamSet;
use crate::config::{ConfigError, RunConfig};

pub const CONFIG_FILE: &str = "config.cfg";
pub const CHECKPOINT_FILE: &str = "checkpoint.cdrl";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for unusable
    /// checkpoints, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Agent(AgentError::Config(_)) => 2,
            RunError::Checkpoint { .. } => 3,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `out/seed<seed>`.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed{seed}"))
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), RunError> {
    let csv_err = |e: csv::Error| RunError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(LOG_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

/// Writes the three run files for a single-seed config.
pub fn write_run(dir: &Path, cfg: &RunConfig, run: &TrainRun) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_text()).map_err(io(&cfg_path))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    fs::write(&ckpt, run.bundle.to_params()?.to_bytes()).map_err(io(&ckpt))?;
    write_log(&dir.join(LOG_FILE), &run.log)
}

/// Trains `cfg` once per seed, writing `out/seed<s>/` for each.
pub fn train_all(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, RunError> {
    cfg.validate()?;
    let mut dirs = Vec::new();
    for &seed in &cfg.seeds {
        let single = cfg.with_seed(seed);
        let run = train(&single)?;
        let dir = seed_dir(out, seed);
        write_run(&dir, &single, &run)?;
        log::info!("seed {seed}: wrote {}", dir.display());
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Rebuilds the bundle saved in a run directory.
pub fn load_bundle(dir: &Path) -> Result<TrainedBundle, RunError> {
    let bad = |path: &Path, reason: String| RunError::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| bad(&cfg_path, e.to_string()))?;
    let cfg = RunConfig::parse(&text, &[]).map_err(|e| bad(&cfg_path, e.to_string()))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let bytes = fs::read(&ckpt).map_err(|e| bad(&ckpt, e.to_string()))?;
    let params = ParamSet::from_bytes(&bytes).map_err(|e| bad(&ckpt, e.to_string()))?;
    TrainedBundle::from_params(&cfg, &params).map_err(|e| bad(&ckpt, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg = RunError::Config(ConfigError::UnknownKey("x".into()));
        assert_eq!(cfg.exit_code(), 2);
        let ck = RunError::Checkpoint {
            path: "x".into(),
            reason: "missing".into(),
        };
        assert_eq!(ck.exit_code(), 3);
    }

    #[test]
    fn missing_checkpoint_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
