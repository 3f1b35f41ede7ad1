//! Central finite-difference verification of tape gradients.

use rand::Rng;

use super::tape::{ParamKey, Tape, Var};
use super::{ApproxError, Tensor};

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose ±h probes crossed a ReLU or |·| kink.
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

fn bind_all(tape: &mut Tape, params: &[Vec<Tensor>]) -> Vec<Vec<Var>> {
    params
        .iter()
        .enumerate()
        .map(|(slot, arrays)| {
            arrays
                .iter()
                .enumerate()
                .map(|(index, t)| tape.param(ParamKey { slot, index }, t.clone()))
                .collect()
        })
        .collect()
}

/// Compares the tape gradient of `build` against central differences on
/// `coords` randomly chosen parameter entries.
///
/// `params[slot][index]` are the parameter arrays; `build` receives them as
/// bound tape variables in the same layout and returns a scalar loss.
pub fn check_gradients<R, F>(
    params: &[Vec<Tensor>],
    mut build: F,
    coords: usize,
    rng: &mut R,
) -> Result<GradCheckReport, ApproxError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut Tape, &[Vec<Var>]) -> Var,
{
    let mut tape = Tape::new();
    let vars = bind_all(&mut tape, params);
    let loss = build(&mut tape, &vars);
    let grads = tape.backward(loss)?;
    let base_sig = tape.kink_signature();

    let all: Vec<(usize, usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(s, arrays)| {
            arrays
                .iter()
                .enumerate()
                .flat_map(move |(k, t)| (0..t.len()).map(move |j| (s, k, j)))
        })
        .collect();
    let mut report = GradCheckReport::default();
    if all.is_empty() {
        return Ok(report);
    }

    let mut probe = |p: &[Vec<Tensor>]| -> (f64, Vec<bool>) {
        let mut t = Tape::new();
        let v = bind_all(&mut t, p);
        let l = build(&mut t, &v);
        (t.value(l).scalar(), t.kink_signature())
    };

    let mut work = params.to_vec();
    for _ in 0..coords {
        let (s, k, j) = all[rng.gen_range(0..all.len())];
        let analytic = grads
            .get(ParamKey { slot: s, index: k })
            .map_or(0.0, |g| g[j]);
        let orig = work[s][k].data()[j];
        work[s][k].data_mut()[j] = orig + FD_STEP;
        let (lp, sp) = probe(&work);
        work[s][k].data_mut()[j] = orig - FD_STEP;
        let (lm, sm) = probe(&work);
        work[s][k].data_mut()[j] = orig;
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        report.max_rel_err = report.max_rel_err.max(rel);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let net = Network::mlp(&[5, 8, 3], false, &mut rng).unwrap();
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::new(vec![2, 5], x).unwrap();
            let params = vec![net.params().arrays().iter().map(|a| a.to_tensor()).collect()];
            let report = check_gradients(
                &params,
                |tape, vars| {
                    let xv = tape.constant(x.clone());
                    let y = net.forward_with(tape, &vars[0], xv).unwrap();
                    let sq = tape.square(y);
                    tape.mean(sq)
                },
                30,
                &mut rng,
            )
            .unwrap();
            assert!(report.passed(FD_TOLERANCE), "{report:?}");
        }
    }
}
