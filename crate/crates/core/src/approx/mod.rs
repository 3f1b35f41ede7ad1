//! Small differentiable function approximators: tensors, a reverse-mode
//! tape, MLP/conv stacks, Adam, checkpoint IO and gradient checking.

mod adam;
pub mod gradcheck;
mod network;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamState, DEFAULT_LR};
pub use network::{Layer, Network};
pub use params::{
    copy_to_target, load_params, save_params, ParamArray, ParamSet, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use tape::{sigmoid, Gradients, ParamKey, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum ApproxError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("parameter array {0} holds a non-finite value")]
    NonFiniteParam(String),
    #[error("duplicate parameter name {0}")]
    DuplicateName(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
