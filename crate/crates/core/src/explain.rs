//! Per-state explanation records and their on-disk export.
//!
//! A record is a JSON document (`schema_version` 1) holding the component
//! Q matrix, the chosen action, criticality, RDX against the runner-up,
//! reward-head predictions when the method has them, and channel masks.
//! Masks are also written as 8-bit PGM images.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{global_action, AgentError, TrainedBundle};
use crate::envs::{make_env, State};
use crate::metrics::{criticality, rdx, Criticality, RdxTable};

pub const SCHEMA_VERSION: u32 = 1;
const EXPORT_SALT: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record: {0}")]
    Format(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExplainError + '_ {
    move |source| ExplainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateId {
    pub episode: usize,
    pub step: usize,
}

/// Row-major grid of values with its `[rows, cols]` shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskImage {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    /// One mask per channel at the resolution the masker produces.
    pub substrate: Vec<MaskImage>,
    /// Nearest-neighbour upsampling to the input resolution (pixel envs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsampled: Option<Vec<MaskImage>>,
}

impl MaskSet {
    /// The images meant for viewing: upsampled when present.
    pub fn display(&self) -> &[MaskImage] {
        self.upsampled.as_deref().unwrap_or(&self.substrate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub schema_version: u32,
    pub method: String,
    pub env: String,
    pub id: StateId,
    pub action_names: Vec<String>,
    pub chosen_action: usize,
    /// `K × |A|`.
    pub q: Vec<Vec<f64>>,
    pub criticality: Criticality,
    /// `K × |A|`, only for methods with reward heads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_predictions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<MaskSet>,
    pub rdx: RdxTable,
}

/// Best and runner-up actions of the summed Q; ties go to lower indices.
fn top_two(q: &[Vec<f64>]) -> (usize, usize) {
    let best = global_action(q);
    let a = q.first().map_or(0, Vec::len);
    let sum = |j: usize| q.iter().map(|r| r[j]).sum::<f64>();
    let mut second = None;
    for j in (0..a).filter(|&j| j != best) {
        match second {
            Some(s) if sum(j) <= sum(s) => {}
            _ => second = Some(j),
        }
    }
    (best, second.unwrap_or(best))
}

fn mask_images(bundle: &TrainedBundle, masks: Vec<Vec<f64>>) -> MaskSet {
    match bundle.input_shape.as_slice() {
        [_, h, w] => {
            let side = |n: usize| (n as f64).sqrt().round() as usize;
            let substrate: Vec<MaskImage> = masks
                .into_iter()
                .map(|m| {
                    let s = side(m.len());
                    MaskImage {
                        shape: [s, m.len() / s.max(1)],
                        values: m,
                    }
                })
                .collect();
            let upsampled = substrate.iter().map(|m| upsample(m, *h, *w)).collect();
            MaskSet {
                substrate,
                upsampled: Some(upsampled),
            }
        }
        _ => MaskSet {
            substrate: masks
                .into_iter()
                .map(|m| MaskImage {
                    shape: [1, m.len()],
                    values: m,
                })
                .collect(),
            upsampled: None,
        },
    }
}

/// Nearest-neighbour resize of `m` to `rows × cols`.
pub fn upsample(m: &MaskImage, rows: usize, cols: usize) -> MaskImage {
    let [mr, mc] = m.shape;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            values.push(m.values[(r * mr / rows) * mc + c * mc / cols]);
        }
    }
    MaskImage {
        shape: [rows, cols],
        values,
    }
}

/// Builds the explanation of `state` under `bundle`.
pub fn explain_state(bundle: &TrainedBundle, state: &State, id: StateId) -> ExplanationRecord {
    let view = bundle.inspect(state);
    let (best, second) = top_two(&view.q);
    let sums: Vec<f64> = (0..bundle.action_count)
        .map(|j| view.q.iter().map(|r| r[j]).sum())
        .collect();
    let action_names = make_env(&bundle.config.env, &bundle.config.env_settings())
        .map(|e| e.action_names().iter().map(|s| s.to_string()).collect())
        .unwrap_or_else(|_| (0..bundle.action_count).map(|a| a.to_string()).collect());
    ExplanationRecord {
        schema_version: SCHEMA_VERSION,
        method: bundle.method.to_string(),
        env: bundle.config.env.clone(),
        id,
        action_names,
        chosen_action: best,
        criticality: criticality(&sums, bundle.config.criticality_threshold),
        reward_predictions: bundle.reward_predictions(state),
        masks: view.masks.map(|m| mask_images(bundle, m)),
        rdx: rdx(&view.q, best, second),
        q: view.q,
    }
}

pub fn write_record(record: &ExplanationRecord, path: &Path) -> Result<(), ExplainError> {
    let text = serde_json::to_string_pretty(record).map_err(|e| ExplainError::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_record(path: &Path) -> Result<ExplanationRecord, ExplainError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let record: ExplanationRecord =
        serde_json::from_str(&text).map_err(|e| ExplainError::Format(e.to_string()))?;
    if record.schema_version != SCHEMA_VERSION {
        return Err(ExplainError::Format(format!(
            "unsupported schema_version {}",
            record.schema_version
        )));
    }
    Ok(record)
}

/// 8-bit value for a mask entry: `round(255 v)`, halves away from zero.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Writes `mask` as a binary PGM (P5).
pub fn render_mask_image(mask: &MaskImage, path: &Path) -> Result<(), ExplainError> {
    let [rows, cols] = mask.shape;
    if rows * cols != mask.values.len() {
        return Err(ExplainError::Format(format!(
            "mask shape {rows}x{cols} does not hold {} values",
            mask.values.len()
        )));
    }
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend(mask.values.iter().map(|&v| quantize(v)));
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))
}

/// Reads a P5 image written by [`render_mask_image`] back to `[0, 1]`.
pub fn read_mask_image(path: &Path) -> Result<MaskImage, ExplainError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = || ExplainError::Format(format!("{} is not an 8-bit P5 image", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if fields[0] != "P5" || num(&fields[3])? != 255 {
        return Err(bad());
    }
    let (cols, rows) = (num(&fields[1])?, num(&fields[2])?);
    let data = bytes.get(pos..pos + rows * cols).ok_or_else(bad)?;
    Ok(MaskImage {
        shape: [rows, cols],
        values: data.iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

/// One line of `index.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub episode: usize,
    pub step: usize,
    #[serde(rename = "C")]
    pub gap: f64,
    pub is_critical: bool,
    pub chosen_action: usize,
}

/// Greedy rollouts of `bundle`, one record per visited state (critical ones
/// only with `only_critical`), mask images per channel, and `index.csv`.
pub fn export_episodes(
    bundle: &TrainedBundle,
    episodes: usize,
    only_critical: bool,
    seed: u64,
    out: &Path,
) -> Result<Vec<IndexRow>, ExplainError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg = &bundle.config;
    let mut env = make_env(&cfg.env, &cfg.env_settings()).map_err(AgentError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EXPORT_SALT);
    let mut index = Vec::new();
    for ep in 0..episodes {
        let mut state = env.reset(rng.next_u64());
        for t in 0.. {
            let record = explain_state(bundle, &state, StateId { episode: ep, step: t });
            if !only_critical || record.criticality.is_critical {
                let stem = format!("ep{ep}_step{t}");
                write_record(&record, &out.join(format!("{stem}.record")))?;
                if let Some(masks) = &record.masks {
                    for (i, m) in masks.display().iter().enumerate() {
                        render_mask_image(m, &out.join(format!("{stem}_mask{i}.pgm")))?;
                    }
                }
                index.push(IndexRow {
                    episode: ep,
                    step: t,
                    gap: record.criticality.gap,
                    is_critical: record.criticality.is_critical,
                    chosen_action: record.chosen_action,
                });
            }
            let step = env.step(record.chosen_action).map_err(AgentError::from)?;
            if step.done || step.truncated {
                break;
            }
            state = step.state;
        }
    }
    let path = out.join("index.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| ExplainError::Format(e.to_string()))?;
    for row in &index {
        w.serialize(row).map_err(|e| ExplainError::Format(e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.5), 255);
    }

    #[test]
    fn top_two_breaks_ties_low() {
        assert_eq!(top_two(&[vec![0.0; 4]]), (0, 1));
        assert_eq!(top_two(&[vec![1.0, 3.0, 2.0, 3.0]]), (1, 3));
        assert_eq!(top_two(&[vec![1.0, 2.0], vec![1.5, 0.0]]), (0, 1));
    }

    #[test]
    fn upsample_repeats_blocks() {
        let m = MaskImage {
            shape: [2, 2],
            values: vec![0.0, 0.25, 0.5, 1.0],
        };
        let up = upsample(&m, 4, 4);
        assert_eq!(up.shape, [4, 4]);
        assert_eq!(&up.values[0..4], &[0.0, 0.0, 0.25, 0.25]);
        assert_eq!(&up.values[12..16], &[0.5, 0.5, 1.0, 1.0]);
    }
}
