//! Minimal differentiable building blocks with hand-written backward passes.

pub mod adam;
pub mod encoder;
pub mod gradcheck;
pub mod layers;
pub mod param;
pub mod policy;

pub use adam::{adam_step, AdamConfig};
pub use encoder::{EncoderTape, SeqEncoder};
pub use layers::{Activation, LayerNorm, Linear, Mlp, MlpTape};
pub use param::{named_rng, ParamBlock, Parameterized};
pub use policy::{greedy_action, logprob_grad, masked_softmax, softmax_policy, PolicySample};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected width {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("tape does not match this module")]
    StaleTape,
    #[error("empty token sequence")]
    EmptySequence,
    #[error("sequence of {found} tokens exceeds window {window}")]
    WindowOverflow { window: usize, found: usize },
    #[error("every action is masked")]
    AllMasked,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error("non-finite gradient in block {block}")]
    NonFiniteGradient { block: String },
}
