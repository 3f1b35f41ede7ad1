//! The four distillation objectives, built on the autodiff tape so the
//! same code path serves training and plain evaluation.

use crate::approx::{Tape, Tensor, Var};

use super::DistillError;

/// Feature rows with a smaller norm are excluded from the cosine term.
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityWeights {
    pub w_log: f64,
    pub w_l1: f64,
    pub eps_log: f64,
}

impl Default for SparsityWeights {
    fn default() -> Self {
        SparsityWeights {
            w_log: 0.1,
            w_l1: 1.0,
            eps_log: 1e-6,
        }
    }
}

/// Mean cosine similarity between `ψ(s)` and `ψ(s_inter)` rows, to be
/// maximized. Rows where either norm falls below [`DEGENERATE_NORM`] are
/// skipped with a warning; if every row is degenerate the call fails.
pub fn intervention_similarity(
    tape: &mut Tape,
    features: Var,
    features_inter: Var,
) -> Result<Var, DistillError> {
    let (a, b) = (tape.value(features), tape.value(features_inter));
    if a.shape() != b.shape() {
        return Err(DistillError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let valid: Vec<usize> = (0..a.batch())
        .filter(|&r| norm(a.row(r)) >= DEGENERATE_NORM && norm(b.row(r)) >= DEGENERATE_NORM)
        .collect();
    if valid.is_empty() {
        return Err(DistillError::DegenerateFeatures);
    }
    let (fa, fb) = if valid.len() < a.batch() {
        log::warn!(
            "skipping {} degenerate feature rows in intervention loss",
            a.batch() - valid.len()
        );
        (
            tape.select_rows(features, &valid),
            tape.select_rows(features_inter, &valid),
        )
    } else {
        (features, features_inter)
    };
    let cos = tape.cosine_rows(fa, fb);
    Ok(tape.mean(cos))
}

/// Batch mean of `|Σ_i R_θ(ᾱ^i, a) − r|`, the L2 norm of the scalar
/// residual. `predictions[i]` holds head `i`'s output, shape `[B]`.
pub fn reward_fidelity(tape: &mut Tape, predictions: &[Var], target: &[f64]) -> Result<Var, DistillError> {
    let first = tape.value(predictions[0]);
    if first.len() != target.len() || predictions.iter().any(|&p| tape.value(p).len() != target.len()) {
        return Err(DistillError::ShapeMismatch(format!(
            "{} predictions for {} targets",
            first.len(),
            target.len()
        )));
    }
    let sum = tape.add_all(predictions);
    let r = tape.constant(Tensor::new(vec![target.len()], target.to_vec()).expect("target shape"));
    let res = tape.sub(sum, r);
    let abs = tape.abs(res);
    Ok(tape.mean(abs))
}

/// Per-head supervision with known sub-rewards: batch mean of
/// `Σ_i |R_θ^i − r^i|`.
pub fn reward_components(tape: &mut Tape, predictions: &[Var], targets: &[Vec<f64>]) -> Var {
    let terms: Vec<Var> = predictions
        .iter()
        .zip(targets)
        .map(|(&p, t)| {
            let r = tape.constant(Tensor::new(vec![t.len()], t.clone()).expect("target shape"));
            let res = tape.sub(p, r);
            let abs = tape.abs(res);
            tape.mean(abs)
        })
        .collect();
    tape.add_all(&terms)
}

/// Batch mean of `Σ_i [w_log·log(Σ_d m^i_d + ε) + w_l1·(Σ_d m^i_d)/d]`.
/// Each mask is `[B, d]`.
pub fn sparsity(tape: &mut Tape, masks: &[Var], w: SparsityWeights) -> Var {
    let terms: Vec<Var> = masks
        .iter()
        .map(|&m| {
            let d = tape.value(m).row_len() as f64;
            let mass = tape.row_sum(m);
            let log = tape.log(mass, w.eps_log);
            let log = tape.scale(log, w.w_log);
            let l1 = tape.scale(mass, w.w_l1 / d);
            tape.add(log, l1)
        })
        .collect();
    let total = tape.add_all(&terms);
    tape.mean(total)
}

/// Batch mean of `Σ_{i≠j} mean_d(m^i_d · m^j_d)` over ordered pairs.
pub fn orthogonality(tape: &mut Tape, masks: &[Var]) -> Var {
    let mut terms = Vec::new();
    for i in 0..masks.len() {
        for j in 0..masks.len() {
            if i != j {
                let d = tape.value(masks[i]).row_len() as f64;
                let prod = tape.mul(masks[i], masks[j]);
                let s = tape.row_sum(prod);
                terms.push(tape.scale(s, 1.0 / d));
            }
        }
    }
    if terms.is_empty() {
        let z = tape.constant(Tensor::zeros(&[1]));
        return tape.sum(z);
    }
    let total = tape.add_all(&terms);
    tape.mean(total)
}

fn mask_vars(tape: &mut Tape, masks: &[Vec<f64>]) -> Result<Vec<Var>, DistillError> {
    let d = masks.first().map_or(0, Vec::len);
    masks
        .iter()
        .map(|m| {
            if m.len() != d {
                return Err(DistillError::ShapeMismatch("masks differ in length".into()));
            }
            Ok(tape.constant(Tensor::new(vec![1, d], m.clone()).expect("mask shape")))
        })
        .collect()
}

/// [`sparsity`] for a single mask set.
pub fn loss_sparsity(masks: &[Vec<f64>], w: SparsityWeights) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let vars = mask_vars(&mut tape, masks)?;
    let l = sparsity(&mut tape, &vars, w);
    Ok(tape.value(l).scalar())
}

/// [`orthogonality`] for a single mask set.
pub fn loss_orthogonality(masks: &[Vec<f64>]) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let vars = mask_vars(&mut tape, masks)?;
    let l = orthogonality(&mut tape, &vars);
    Ok(tape.value(l).scalar())
}

/// [`intervention_similarity`] for plain feature batches.
pub fn loss_intervention(features: &Tensor, features_inter: &Tensor) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let a = tape.constant(features.clone());
    let b = tape.constant(features_inter.clone());
    let l = intervention_similarity(&mut tape, a, b)?;
    Ok(tape.value(l).scalar())
}

/// [`reward_fidelity`] with per-head prediction columns given directly.
pub fn loss_reward_fidelity(predictions: &[Vec<f64>], total: &[f64]) -> Result<f64, DistillError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = predictions
        .iter()
        .map(|p| tape.constant(Tensor::new(vec![p.len()], p.clone()).expect("prediction shape")))
        .collect();
    if vars.is_empty() {
        return Err(DistillError::ShapeMismatch("no reward heads".into()));
    }
    let l = reward_fidelity(&mut tape, &vars, total)?;
    Ok(tape.value(l).scalar())
}
