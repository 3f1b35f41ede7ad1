use super::{ApproxError, ParamSet};

pub const DEFAULT_LR: f64 = 6.25e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .arrays()
            .iter()
            .map(|a| vec![0.0; a.values.len()])
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. `grads[k]` is the gradient of array `k`; `None`
    /// means the array took no part in the loss and is treated as zero.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &[Option<&[f64]>],
    ) -> Result<(), ApproxError> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(ApproxError::ShapeMismatch {
                expected: vec![params.len()],
                found: vec![grads.len()],
            });
        }
        for ((a, g), m) in params.arrays().iter().zip(grads).zip(&self.m) {
            if let Some(g) = g {
                if g.len() != a.values.len() || m.len() != a.values.len() {
                    return Err(ApproxError::ShapeMismatch {
                        expected: a.shape.clone(),
                        found: vec![g.len()],
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, a) in params.arrays_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for j in 0..a.values.len() {
                let g = grads[k].map_or(0.0, |g| g[j]);
                m[j] = flush(self.beta1 * m[j] + (1.0 - self.beta1) * g);
                v[j] = flush(self.beta2 * v[j] + (1.0 - self.beta2) * g * g);
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                let delta = self.lr * mhat / (vhat.sqrt() + self.eps);
                a.values[j] = (a.values[j] as f64 - delta) as f32;
            }
        }
        Ok(())
    }
}

/// Moments below the normal range cannot move an f32 parameter but make
/// every later multiply slow; treat them as zero.
fn flush(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}
