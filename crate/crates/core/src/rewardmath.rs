//! Closed-form reward terms: similarity and diversity gains, the selector's
//! intrinsic reward, shaped-reward aggregation, dynamic uncertainty and the
//! recommender's composite reward.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardMathError {
    #[error("cosine of a zero-norm vector")]
    ZeroNorm,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty reference set")]
    EmptyReferenceSet,
}

/// Similarity gain and diversity gain of one selection step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GainPair {
    pub sim: f64,
    pub div: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyCoeffs {
    pub lambda_u: f64,
    pub lambda_e: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
}

impl Default for PenaltyCoeffs {
    fn default() -> Self {
        Self { lambda_u: 0.1, lambda_e: 0.1, lambda_s: 1.0, lambda_d: 0.1 }
    }
}

impl PenaltyCoeffs {
    pub fn zero() -> Self {
        Self { lambda_u: 0.0, lambda_e: 0.0, lambda_s: 0.0, lambda_d: 0.0 }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RewardMathError> {
    if a.len() != b.len() {
        return Err(RewardMathError::LengthMismatch(a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(RewardMathError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine between the current user's preference row and a candidate's.
pub fn similarity_gain(p_user: &[f64], p_candidate: &[f64]) -> Result<f64, RewardMathError> {
    cosine(p_user, p_candidate)
}

/// Mean dissimilarity `1 − cos` between the candidate and every already
/// selected row; 0 for an empty selection.
pub fn diversity_gain<S: AsRef<[f64]>>(candidate: &[f64], selected: &[S]) -> Result<f64, RewardMathError> {
    if selected.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in selected {
        total += 1.0 - cosine(s.as_ref(), candidate)?;
    }
    Ok(total / selected.len() as f64)
}

pub fn intrinsic_reward(r_hat: f64, gains: GainPair, c: &PenaltyCoeffs) -> f64 {
    r_hat + c.lambda_s * gains.sim + c.lambda_d * gains.div
}

/// Mean of the reference users' current estimates for the recommended item.
pub fn shape_reward(reference_rewards: &[f64]) -> Result<f64, RewardMathError> {
    if reference_rewards.is_empty() {
        return Err(RewardMathError::EmptyReferenceSet);
    }
    Ok(reference_rewards.iter().sum::<f64>() / reference_rewards.len() as f64)
}

/// `|r_new − r_prev| / max(mean_sim + mean_div, eps)`.
pub fn dynamic_uncertainty(r_new: f64, r_prev: f64, mean_sim: f64, mean_div: f64, eps: f64) -> f64 {
    (r_new - r_prev).abs() / (mean_sim + mean_div).max(eps)
}

/// `r̂ − λ_U·P_U + λ_E·P_E`, for either the dynamic or the static `P_U`.
pub fn recommender_reward(r_hat: f64, p_u: f64, p_e: f64, c: &PenaltyCoeffs) -> f64 {
    r_hat - c.lambda_u * p_u + c.lambda_e * p_e
}
