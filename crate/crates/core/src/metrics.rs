//! Explanation-quality metrics and explanation arithmetic.
//!
//! Soft masks are treated as fuzzy sets: `|m| = Σ_d m_d` and the
//! intersection is the elementwise minimum, which reduces to counting for
//! binary masks.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::agents::{global_action, TrainedBundle};
use crate::envs::State;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("method has no maskers")]
    NoMasks,
    #[error("ideal masks are not available")]
    NotAvailable,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no states to evaluate")]
    NoStates,
}

impl MetricsError {
    /// Short status code written in place of a value in reports.
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::NoMasks => "NoMasks",
            MetricsError::NotAvailable => "NotAvailable",
            MetricsError::ShapeMismatch(_) => "ShapeMismatch",
            MetricsError::NoStates => "NoStates",
        }
    }
}

fn masks_of(bundle: &TrainedBundle, states: &[State]) -> Result<Vec<Vec<Vec<f64>>>, MetricsError> {
    if !bundle.has_masks() {
        return Err(MetricsError::NoMasks);
    }
    if states.is_empty() {
        return Err(MetricsError::NoStates);
    }
    Ok(states
        .iter()
        .map(|s| bundle.inspect(s).masks.expect("bundle has maskers"))
        .collect())
}

/// Fraction of `(full, masked)` Q-matrix pairs whose global actions agree.
pub fn fidelity_from_q(pairs: &[(Vec<Vec<f64>>, Vec<Vec<f64>>)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoStates);
    }
    let agree = pairs
        .iter()
        .filter(|(full, masked)| global_action(full) == global_action(masked))
        .count();
    Ok(agree as f64 / pairs.len() as f64)
}

/// Fraction of states where the decision from the unmasked substrate
/// equals the decision from the masked factors.
pub fn fidelity(bundle: &TrainedBundle, states: &[State]) -> Result<f64, MetricsError> {
    if states.is_empty() {
        return Err(MetricsError::NoStates);
    }
    let pairs: Vec<_> = states
        .iter()
        .map(|s| bundle.q_full_and_masked(s).ok_or(MetricsError::NoMasks))
        .collect::<Result<_, _>>()?;
    fidelity_from_q(&pairs)
}

/// Mean mask value over channels: `(1/K) Σ_i |m^i| / |s|`.
pub fn mask_sparsity(masks: &[Vec<f64>]) -> f64 {
    let k = masks.len() as f64;
    masks
        .iter()
        .map(|m| m.iter().sum::<f64>() / m.len() as f64)
        .sum::<f64>()
        / k
}

pub fn sparsity_metric(bundle: &TrainedBundle, states: &[State]) -> Result<f64, MetricsError> {
    let all = masks_of(bundle, states)?;
    Ok(all.iter().map(|m| mask_sparsity(m)).sum::<f64>() / all.len() as f64)
}

/// `(1/|s|) Σ_{i<j} (|m^i| + |m^j| − |m^i ∩ m^j|)`.
pub fn mask_orthogonality(masks: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (a, b) in masks.iter().tuple_combinations() {
        let inter: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        total += (sa + sb - inter) / a.len() as f64;
    }
    total
}

pub fn orthogonality_metric(bundle: &TrainedBundle, states: &[State]) -> Result<f64, MetricsError> {
    let all = masks_of(bundle, states)?;
    Ok(all.iter().map(|m| mask_orthogonality(m)).sum::<f64>() / all.len() as f64)
}

/// Channel masks averaged over `states`.
pub fn mean_masks(bundle: &TrainedBundle, states: &[State]) -> Result<Vec<Vec<f64>>, MetricsError> {
    let all = masks_of(bundle, states)?;
    let n = all.len() as f64;
    let mut mean: Vec<Vec<f64>> = all[0].iter().map(|m| vec![0.0; m.len()]).collect();
    for set in &all {
        for (acc, m) in mean.iter_mut().zip(set) {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v / n;
            }
        }
    }
    Ok(mean)
}

/// `(1/K) min_σ Σ_i Σ_d |m^i_d − ideal_{σ(i),d}|` over channel
/// assignments σ.
pub fn mask_score(masks: &[Vec<f64>], ideals: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if ideals.is_empty() {
        return Err(MetricsError::NotAvailable);
    }
    if masks.len() != ideals.len() || masks.iter().zip(ideals).any(|(m, i)| m.len() != i.len()) {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} masks vs {} ideal masks",
            masks.len(),
            ideals.len()
        )));
    }
    let k = masks.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let best = (0..k)
        .permutations(k)
        .map(|sigma| (0..k).map(|i| dist(&masks[i], &ideals[sigma[i]])).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criticality {
    /// Gap between the best and second-best Q-value.
    pub gap: f64,
    pub is_critical: bool,
}

/// A state is critical when its best Q-value beats the runner-up by the
/// relative `threshold`; with a non-positive runner-up any positive gap
/// counts.
pub fn criticality(q: &[f64], threshold: f64) -> Criticality {
    assert!(q.len() >= 2, "criticality needs at least two actions");
    let mut sorted = q.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (best, second) = (sorted[0], sorted[1]);
    let gap = best - second;
    let is_critical = if second > 0.0 {
        best >= (1.0 + threshold) * second
    } else {
        gap > 0.0
    };
    Criticality { gap, is_critical }
}

/// Per-channel preference of `a1` over `a2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdxTable {
    pub a1: usize,
    pub a2: usize,
    pub deltas: Vec<f64>,
    pub total: f64,
}

/// `Δ_i = Q^i(s, a1) − Q^i(s, a2)` for every channel.
pub fn rdx(q: &[Vec<f64>], a1: usize, a2: usize) -> RdxTable {
    let deltas: Vec<f64> = q.iter().map(|row| row[a1] - row[a2]).collect();
    let total = deltas.iter().sum();
    RdxTable {
        a1,
        a2,
        deltas,
        total,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub fidelity: Result<f64, MetricsError>,
    pub sparsity: Result<f64, MetricsError>,
    pub orthogonality: Result<f64, MetricsError>,
    pub mask_score: Result<f64, MetricsError>,
    pub n_states: usize,
}

impl MetricReport {
    pub fn compute(bundle: &TrainedBundle, states: &[State], ideals: Option<&[Vec<f64>]>) -> Self {
        let mask_score = match ideals {
            None => Err(MetricsError::NotAvailable),
            Some(ideals) => mean_masks(bundle, states).and_then(|m| mask_score(&m, ideals)),
        };
        MetricReport {
            fidelity: fidelity(bundle, states),
            sparsity: sparsity_metric(bundle, states),
            orthogonality: orthogonality_metric(bundle, states),
            mask_score,
            n_states: states.len(),
        }
    }

    /// `(metric, value-or-status)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let cell = |r: &Result<f64, MetricsError>| match r {
            Ok(v) => v.to_string(),
            Err(e) => e.code().to_string(),
        };
        vec![
            ("fidelity", cell(&self.fidelity)),
            ("sparsity", cell(&self.sparsity)),
            ("orthogonality", cell(&self.orthogonality)),
            ("mask_score", cell(&self.mask_score)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mt_ideals() -> Vec<Vec<f64>> {
        vec![
            vec![1., 1., 0., 0., 1., 1.],
            vec![1., 1., 1., 1., 0., 0.],
        ]
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(mask_sparsity(&[vec![1.0; 6], vec![1.0; 6]]), 1.0);
        assert_eq!(mask_sparsity(&[vec![0.0; 6]]), 0.0);
        assert_eq!(mask_sparsity(&[vec![1., 0., 1., 0.]]), 0.5);
    }

    #[test]
    fn orthogonality_examples() {
        let p = vec![1., 1., 0., 0.];
        assert!((mask_orthogonality(&[p.clone(), p.clone()]) - 0.5).abs() < 1e-12);
        let q = vec![0., 0., 1., 0.];
        assert!((mask_orthogonality(&[p, q]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn orthogonality_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let k = rng.gen_range(2..5);
            let m: Vec<Vec<f64>> = (0..k).map(|_| (0..5).map(|_| rng.gen()).collect()).collect();
            let mut oracle = 0.0;
            for i in 0..k {
                for j in i + 1..k {
                    let mut s = 0.0;
                    for d in 0..5 {
                        s += m[i][d] + m[j][d] - m[i][d].min(m[j][d]);
                    }
                    oracle += s / 5.0;
                }
            }
            assert!((mask_orthogonality(&m) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_score_examples() {
        let ideals = mt_ideals();
        assert_eq!(mask_score(&ideals, &ideals).unwrap(), 0.0);
        let swapped = vec![ideals[1].clone(), ideals[0].clone()];
        assert_eq!(mask_score(&swapped, &ideals).unwrap(), 0.0);
        let ones = vec![vec![1.0; 6]; 2];
        assert_eq!(mask_score(&ones, &ideals).unwrap(), 2.0);
        assert_eq!(mask_score(&ones, &[]), Err(MetricsError::NotAvailable));
    }

    #[test]
    fn criticality_examples() {
        let c = criticality(&[1.0, 0.5], 0.10);
        assert_eq!(c.gap, 0.5);
        assert!(c.is_critical);
        let t = criticality(&[0.7, 0.7, 0.3], 0.10);
        assert_eq!(t.gap, 0.0);
        assert!(!t.is_critical);
        assert!(criticality(&[0.1, -0.2], 0.10).is_critical);
        assert!(!criticality(&[1.05, 1.0], 0.10).is_critical);
    }

    #[test]
    fn criticality_gap_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.gen_range(2..7);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut s = q.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(criticality(&q, 0.1).gap, s[n - 1] - s[n - 2]);
            let shifted: Vec<f64> = q.iter().map(|v| v + 3.0).collect();
            assert!((criticality(&shifted, 0.1).gap - s[n - 1] + s[n - 2]).abs() < 1e-12);
        }
    }

    #[test]
    fn rdx_examples() {
        let q = vec![vec![0.882, 0.486], vec![0.683, 0.73]];
        let t = rdx(&q, 0, 1);
        assert!((t.deltas[0] - 0.396).abs() < 1e-9);
        assert!((t.deltas[1] + 0.047).abs() < 1e-9);
        assert_eq!(rdx(&q, 1, 1).deltas, vec![0.0, 0.0]);
    }

    #[test]
    fn fidelity_from_handcrafted_pairs() {
        let right = vec![vec![0.0, 1.0]];
        let left = vec![vec![1.0, 0.0]];
        let pairs = vec![
            (right.clone(), right.clone()),
            (left.clone(), left.clone()),
            (right.clone(), right.clone()),
            (right.clone(), left.clone()),
        ];
        assert_eq!(fidelity_from_q(&pairs).unwrap(), 0.75);
    }

    proptest! {
        #[test]
        fn rdx_total_is_q_sum_gap(
            q in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..4),
            a1 in 0usize..4,
            a2 in 0usize..4,
        ) {
            let t = rdx(&q, a1, a2);
            let gap: f64 = q.iter().map(|r| r[a1]).sum::<f64>() - q.iter().map(|r| r[a2]).sum::<f64>();
            prop_assert!((t.total - t.deltas.iter().sum::<f64>()).abs() < 1e-9);
            prop_assert!((t.total - gap).abs() < 1e-9);
        }

        #[test]
        fn mask_score_is_permutation_invariant(
            m in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 6), 2),
        ) {
            let ideals = mt_ideals();
            let a = mask_score(&m, &ideals).unwrap();
            let b = mask_score(&[m[1].clone(), m[0].clone()], &ideals).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn sparsity_is_monotone(
            m in proptest::collection::vec(0.0f64..=1.0, 6),
            d in 0usize..6,
            bump in 0.0f64..1.0,
        ) {
            let mut up = m.clone();
            up[d] = (up[d] + bump).min(1.0);
            prop_assert!(mask_sparsity(&[up]) >= mask_sparsity(&[m]) - 1e-12);
        }
    }
}
