//! Environment, rollouts, A2C updates, the training loop, evaluation and
//! run directories.

pub mod a2c;
pub mod bundle;
pub mod config;
pub mod env;
pub mod eval;
pub mod shaped;
pub mod train;

pub use a2c::{actor_loss, compute_advantages, critic_loss, CriticForm, DoneReason, RewardComponents, Trajectory, Transition};
pub use bundle::{load_bundle, save_bundle, Bundle, BundleManifest};
pub use config::{PolicyConfig, RunConfig, TrainConfig, Variant};
pub use env::{env_step, termination, EnvStep, Mode, MAX_LENGTH, QUIT_WINDOW};
pub use eval::{evaluate, evaluate_episodes, evaluate_episodes_with_workers, reward_error, EpisodeSummary, EvalReport};
pub use shaped::{ShapedRewardMatrix, WriteBack};
pub use train::{
    metrics_csv, train, train_with_log, update_recommender, update_selector, MetricsRow, StepLog, TrainOutcome, Trainer,
    UpdateStats, METRICS_HEADER,
};

use crate::checkpoint::CheckpointError;
use crate::dataset::DatasetError;
use crate::nn::NnError;
use crate::rewardmath::RewardMathError;
use crate::selector::SelectorError;
use crate::worldmodel::WorldModelError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("evaluation needs a ground-truth matrix")]
    MissingTruth,
    #[error("unknown variant {0:?}; valid variants: {valid}", valid = Variant::valid_names())]
    UnknownVariant(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("non-finite {what}: {value}")]
    NonFinite { what: String, value: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    RewardMath(#[from] RewardMathError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    WorldModel(#[from] WorldModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
