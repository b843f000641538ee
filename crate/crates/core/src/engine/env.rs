//! Simulated user environment: reward source and quit rules.

use serde::{Deserialize, Serialize};

use super::a2c::DoneReason;
use super::shaped::ShapedRewardMatrix;
use super::EngineError;
use crate::matrix::DenseMatrix;

/// Recent recommendations whose categories must differ from a new item's.
pub const QUIT_WINDOW: usize = 4;
pub const MAX_LENGTH: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    pub done: bool,
    pub reason: Option<DoneReason>,
}

/// Quit rule for the `step`-th recommendation (1-based) of category
/// `category`, given the categories of every earlier recommendation in the
/// episode. A category repeat takes precedence over the length cap.
pub fn termination(category: usize, previous_categories: &[usize], step: usize) -> Option<DoneReason> {
    let recent = &previous_categories[previous_categories.len().saturating_sub(QUIT_WINDOW)..];
    if recent.contains(&category) {
        Some(DoneReason::CategoryRepeat)
    } else if step >= MAX_LENGTH {
        Some(DoneReason::MaxLength)
    } else {
        None
    }
}

/// One environment transition: the reward comes from the shaped matrix in
/// training and from the ground-truth matrix in evaluation.
pub fn env_step(
    user: usize,
    item: usize,
    category: usize,
    previous_categories: &[usize],
    step: usize,
    mode: Mode,
    matrix: &ShapedRewardMatrix,
    truth: Option<&DenseMatrix>,
) -> Result<EnvStep, EngineError> {
    let reward = match mode {
        Mode::Train => matrix.get(user, item),
        Mode::Eval => truth.ok_or(EngineError::MissingTruth)?.get(user, item),
    };
    let reason = termination(category, previous_categories, step);
    Ok(EnvStep { reward, done: reason.is_some(), reason })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quit_rules() {
        assert_eq!(termination(2, &[1, 2, 3, 4], 5), Some(DoneReason::CategoryRepeat));
        assert_eq!(termination(5, &[1, 2, 3, 4], 5), None);
        // Only the last four categories count.
        assert_eq!(termination(1, &[1, 2, 3, 4, 5], 6), None);
        assert_eq!(termination(9, &[], MAX_LENGTH), Some(DoneReason::MaxLength));
    }

    #[test]
    fn eval_without_truth_is_an_error() {
        let m = ShapedRewardMatrix::new(&DenseMatrix::zeros(1, 1), 0.0, 1.0);
        assert!(matches!(env_step(0, 0, 0, &[], 1, Mode::Eval, &m, None), Err(EngineError::MissingTruth)));
        let truth = DenseMatrix::filled(1, 1, 0.7);
        let s = env_step(0, 0, 0, &[], 1, Mode::Eval, &m, Some(&truth)).unwrap();
        assert_eq!(s, EnvStep { reward: 0.7, done: false, reason: None });
    }
}
