use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::a2c::CriticForm;
use super::EngineError;
use crate::nn::AdamConfig;
use crate::recommender::RecommenderConfig;
use crate::rewardmath::PenaltyCoeffs;
use crate::selector::SelectorConfig;
use crate::worldmodel::WorldModelConfig;

/// Ablation variants; `Variant::ALL` lists them in comparison-table order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Frozen world-model matrix, no selection, static uncertainty.
    RStatic,
    /// Dynamic shaping but the static (ensemble-variance) uncertainty.
    PuStatic,
    /// Intrinsic reward without similarity or diversity gains.
    Rhat,
    /// Intrinsic reward with the similarity gain only.
    RhatRs,
    /// Intrinsic reward with the diversity gain only.
    RhatRd,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::RStatic, Variant::PuStatic, Variant::Rhat, Variant::RhatRs, Variant::RhatRd, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::RStatic => "r_static",
            Variant::PuStatic => "pu_static",
            Variant::Rhat => "rhat",
            Variant::RhatRs => "rhat_rs",
            Variant::RhatRd => "rhat_rd",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Variant::name).join(", ")
    }

    /// Whether the selector runs and the matrix is rewritten.
    pub fn shapes(self) -> bool {
        self != Variant::RStatic
    }

    /// Whether the dynamic uncertainty replaces the static one.
    pub fn dynamic_uncertainty(self) -> bool {
        !matches!(self, Variant::RStatic | Variant::PuStatic)
    }

    /// Coefficients with the gains this variant drops set to zero.
    pub fn coeffs(self, base: &PenaltyCoeffs) -> PenaltyCoeffs {
        let mut c = *base;
        match self {
            Variant::Rhat => (c.lambda_s, c.lambda_d) = (0.0, 0.0),
            Variant::RhatRs => c.lambda_d = 0.0,
            Variant::RhatRd => c.lambda_s = 0.0,
            _ => {}
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| EngineError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub recommender: RecommenderConfig,
    pub selector: SelectorConfig,
    pub coeffs: PenaltyCoeffs,
    pub critic: CriticForm,
    pub recommender_adam: AdamConfig,
    pub selector_adam: AdamConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            recommender: RecommenderConfig::default(),
            selector: SelectorConfig::default(),
            coeffs: PenaltyCoeffs::default(),
            critic: CriticForm::default(),
            recommender_adam: AdamConfig::with_lr(1e-3),
            selector_adam: AdamConfig::with_lr(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub trajectories: usize,
    /// Cap on recommendation steps over the whole run.
    pub max_steps: usize,
    pub gamma: f64,
    /// EMA coefficient of the shaped write-back (1 = overwrite).
    pub alpha_shape: f64,
    /// Floor of the dynamic-uncertainty denominator.
    pub eps: f64,
    pub eval_episodes: usize,
    /// Evaluate every this many epochs (the last epoch always evaluates).
    pub eval_every: usize,
    pub greedy_eval: bool,
    /// Category k-gram order of the behaviour statistics.
    pub behavior_order: usize,
    pub behavior_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            trajectories: 50,
            max_steps: 100_000,
            gamma: 0.99,
            alpha_shape: 1.0,
            eps: 1e-6,
            eval_episodes: 100,
            eval_every: 1,
            greedy_eval: false,
            behavior_order: 2,
            behavior_alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world_model: WorldModelConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub variant: Variant,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world_model: WorldModelConfig::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
            variant: Variant::Full,
            seeds: vec![0],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        let c = &self.policy.coeffs;
        for (name, v) in [("lambda_u", c.lambda_u), ("lambda_e", c.lambda_e), ("lambda_s", c.lambda_s), ("lambda_d", c.lambda_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value ≥ 0, got {v}"));
            }
        }
        let t = &self.train;
        if !(0.0..=1.0).contains(&t.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", t.gamma));
        }
        if !(t.alpha_shape > 0.0 && t.alpha_shape <= 1.0) {
            return bad(format!("alpha_shape must lie in (0, 1], got {}", t.alpha_shape));
        }
        if !(t.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", t.eps));
        }
        if t.eval_every == 0 {
            return bad("eval_every must be ≥ 1".into());
        }
        if t.behavior_alpha <= 0.0 {
            return bad("behavior_alpha must be positive".into());
        }
        let (r, s) = (&self.policy.recommender, &self.policy.selector);
        if s.k_sel == 0 {
            return bad("k_sel must be ≥ 1".into());
        }
        if r.window == 0 || s.window == 0 {
            return bad("windows must be ≥ 1".into());
        }
        if r.heads == 0 || r.d_rec % r.heads != 0 {
            return bad("recommender d_rec must be divisible by heads".into());
        }
        if s.heads == 0 || (r.d_rec + s.d_pref) % s.heads != 0 {
            return bad("selector width d_rec + d_pref must be divisible by heads".into());
        }
        if r.layers == 0 || s.layers == 0 || r.hidden == 0 || s.hidden == 0 || r.d_embed == 0 {
            return bad("layer counts and widths must be ≥ 1".into());
        }
        if !(r.temperature > 0.0 && s.temperature > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        self.world_model.validate().map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("nope".parse::<Variant>(), Err(EngineError::UnknownVariant(_))));
    }

    #[test]
    fn rhat_zeroes_only_the_gains() {
        let base = PenaltyCoeffs::default();
        let c = Variant::Rhat.coeffs(&base);
        assert_eq!(c, PenaltyCoeffs { lambda_s: 0.0, lambda_d: 0.0, ..base });
        assert_eq!(Variant::RhatRs.coeffs(&base).lambda_s, base.lambda_s);
        assert_eq!(Variant::RhatRd.coeffs(&base).lambda_d, base.lambda_d);
        assert_eq!(Variant::Full.coeffs(&base), base);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"train": {"epochz": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
        let ok = RunConfig::from_json(r#"{"train": {"epochs": 3}, "variant": "rhat"}"#).unwrap();
        assert_eq!((ok.train.epochs, ok.variant), (3, Variant::Rhat));
    }

    #[test]
    fn negative_coefficients_are_rejected() {
        assert!(RunConfig::from_json(r#"{"policy": {"coeffs": {"lambda_u": -1}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"gamma": 1.5}}"#).is_err());
    }
}
