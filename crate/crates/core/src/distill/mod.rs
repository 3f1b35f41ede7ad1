//! Causal distillation: masked state factors, Fourier intervention on the
//! non-causal part of an image, and the intervention / reward-sufficiency /
//! sparsity / orthogonality objectives.

pub mod fft;
mod intervention;
pub mod losses;

pub use intervention::{
    blend_amplitude, fourier_intervene, intervene, intervene_channel, vector_intervene,
};
pub use losses::{
    loss_intervention, loss_orthogonality, loss_reward_fidelity, loss_sparsity, SparsityWeights,
};

use crate::approx::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DistillError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every feature row has a vanishing norm")]
    DegenerateFeatures,
    #[error("interpolation weight {0} outside [0, 1]")]
    InvalidLambda(f64),
}

/// `ᾱ = m ⊙ ψ(s)`. A mask shorter than the features is repeated over
/// channel blocks (feature-map masks over `C` channels).
pub fn distill_state(mask: &Tensor, features: &Tensor) -> Result<Tensor, DistillError> {
    let (p, f) = (mask.len(), features.len());
    if p == 0 || f % p != 0 {
        return Err(DistillError::ShapeMismatch(format!(
            "mask of {p} values cannot tile {f} features"
        )));
    }
    let data = features
        .data()
        .iter()
        .enumerate()
        .map(|(j, x)| x * mask.data()[j % p])
        .collect();
    Ok(Tensor::new(features.shape().to_vec(), data).expect("same shape"))
}
