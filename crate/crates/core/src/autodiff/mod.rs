//! Reverse-mode automatic differentiation with differentiable backward
//! passes, plus the multilayer perceptron built on it.

mod activation;
mod mlp;
mod tape;

pub use activation::{ActivationKind, LEAKY_RELU_SLOPE};
pub use mlp::{
    grad_input, grad_params, mlp_forward, row_mean, Layer, MlpBinding, MlpCheckpoint, MlpParams,
    MLP_CHECKPOINT_VERSION,
};
pub use tape::{Op, Tape, Var};
