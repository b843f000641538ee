//! Ensemble of Gaussian-head factorisation models learned from the offline
//! log, plus the behaviour-entropy penalty table.

mod entropy;
mod member;

pub use entropy::{behavior_log_ratio, entropy_penalty, state_entropy_penalty, EntropyTable};
pub use member::{FieldLayout, WorldModelMember};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{encode_params, load_params, parse_blocks, CheckpointError};
use crate::dataset::Dataset;
use crate::matrix::DenseMatrix;
use crate::nn::{adam_step, named_rng, AdamConfig, NnError, ParamBlock, Parameterized};

#[derive(Debug, thiserror::Error)]
pub enum WorldModelError {
    #[error("world model diverged: member {member}, epoch {epoch} (non-finite loss)")]
    Diverged { member: usize, epoch: usize },
    #[error("invalid world-model config: {0}")]
    InvalidConfig(String),
    #[error("training log is empty")]
    EmptyLog,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("malformed world-model manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldModelConfig {
    pub members: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self { members: 2, embed_dim: 8, hidden: 16, epochs: 100, batch: 32, adam: AdamConfig::with_lr(1e-2), seed: 0 }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<(), WorldModelError> {
        let bad = |m: &str| Err(WorldModelError::InvalidConfig(m.to_string()));
        if self.members == 0 {
            return bad("members must be ≥1");
        }
        if self.embed_dim == 0 || self.hidden == 0 || self.batch == 0 {
            return bad("embed_dim, hidden and batch must be ≥1");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct WorldModelEnsemble {
    pub config: WorldModelConfig,
    pub layout: FieldLayout,
    pub members: Vec<WorldModelMember>,
    pub r_min: f64,
    pub r_max: f64,
    pub dataset_hash: String,
}

/// Ensemble-average reward estimate and max-variance uncertainty for every
/// (user, item).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    pub mean: DenseMatrix,
    pub static_uncertainty: DenseMatrix,
}

/// Per-member mean negative log-likelihood for every epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCurve {
    pub losses: Vec<Vec<f64>>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("member,epoch,nll\n");
        for (m, curve) in self.losses.iter().enumerate() {
            for (e, l) in curve.iter().enumerate() {
                out.push_str(&format!("{m},{e},{}\n", crate::checkpoint::format_value(*l)));
            }
        }
        out
    }
}

/// Combines member outputs: clipped means are averaged, variances maxed.
pub fn combine_member_outputs(means: &[f64], variances: &[f64], r_min: f64, r_max: f64) -> (f64, f64) {
    let k = means.len() as f64;
    let mean = means.iter().map(|m| m.clamp(r_min, r_max)).sum::<f64>() / k;
    let unc = variances.iter().copied().fold(0.0, f64::max);
    (mean, unc)
}

impl WorldModelEnsemble {
    pub fn new(d: &Dataset, config: &WorldModelConfig) -> Result<Self, WorldModelError> {
        config.validate()?;
        let layout = FieldLayout::from_dataset(d);
        let log_mean = if d.train_log.is_empty() {
            0.5 * (d.r_min + d.r_max)
        } else {
            d.train_log.iter().map(|r| r.feedback).sum::<f64>() / d.train_log.len() as f64
        };
        let members = (0..config.members)
            .map(|k| {
                let mut m = WorldModelMember::new(&format!("wm{k}"), &layout, config.embed_dim, config.hidden, config.seed);
                m.bias.values[0] = log_mean;
                m
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layout,
            members,
            r_min: d.r_min,
            r_max: d.r_max,
            dataset_hash: d.content_hash(),
        })
    }

    pub fn predict_entry(&self, d: &Dataset, user: usize, item: usize) -> (f64, f64) {
        let fields = self.layout.fields(d, user, item);
        let (means, vars): (Vec<f64>, Vec<f64>) = self
            .members
            .iter()
            .map(|m| {
                let (mu, lv) = m.predict(&fields);
                (mu, lv.exp())
            })
            .unzip();
        combine_member_outputs(&means, &vars, self.r_min, self.r_max)
    }

    pub fn predict_matrix(&self, d: &Dataset) -> PredictionMatrix {
        let (nu, ni) = (d.n_users(), d.n_items());
        let mut mean = DenseMatrix::zeros(nu, ni);
        let mut unc = DenseMatrix::zeros(nu, ni);
        for u in 0..nu {
            for i in 0..ni {
                let (m, v) = self.predict_entry(d, u, i);
                mean.set(u, i, m);
                unc.set(u, i, v);
            }
        }
        PredictionMatrix { mean, static_uncertainty: unc }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldModelError> {
        fs::write(path, self.to_text()).map_err(CheckpointError::from)?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let manifest = WorldModelManifest {
            members: self.members.len(),
            embed_dim: self.config.embed_dim,
            dataset_hash: self.dataset_hash.clone(),
            layout: self.layout.clone(),
            r_min: self.r_min,
            r_max: self.r_max,
            config: self.config.clone(),
        };
        let mut text = format!("# darlr-world-model {}\n", serde_json::to_string(&manifest).expect("manifest serialises"));
        text.push_str(&encode_params(&self.members, false));
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldModelError> {
        let text = fs::read_to_string(path).map_err(CheckpointError::from)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, WorldModelError> {
        let first = text.lines().next().unwrap_or_default();
        let json = first
            .strip_prefix("# darlr-world-model ")
            .ok_or_else(|| WorldModelError::Manifest("missing header line".into()))?;
        let manifest: WorldModelManifest =
            serde_json::from_str(json).map_err(|e| WorldModelError::Manifest(e.to_string()))?;
        let mut members: Vec<WorldModelMember> = (0..manifest.members)
            .map(|k| {
                WorldModelMember::new(
                    &format!("wm{k}"),
                    &manifest.layout,
                    manifest.embed_dim,
                    manifest.config.hidden,
                    manifest.config.seed,
                )
            })
            .collect();
        load_params(&mut members, &parse_blocks(text)?)?;
        Ok(Self {
            config: manifest.config,
            layout: manifest.layout,
            members,
            r_min: manifest.r_min,
            r_max: manifest.r_max,
            dataset_hash: manifest.dataset_hash,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldModelManifest {
    members: usize,
    embed_dim: usize,
    dataset_hash: String,
    layout: FieldLayout,
    r_min: f64,
    r_max: f64,
    config: WorldModelConfig,
}

fn train_member(
    member: &mut WorldModelMember,
    index: usize,
    d: &Dataset,
    layout: &FieldLayout,
    cfg: &WorldModelConfig,
) -> Result<Vec<f64>, WorldModelError> {
    let records: Vec<(Vec<usize>, f64)> =
        d.train_log.iter().map(|r| (layout.fields(d, r.user_id, r.item_id), r.feedback)).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = named_rng(cfg.seed, &format!("wm{index}.shuffle"));
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let (fields, target) = &records[idx];
                total += member.accumulate_nll(fields, *target, scale);
            }
            if !total.is_finite() {
                return Err(WorldModelError::Diverged { member: index, epoch });
            }
            adam_step(member, &cfg.adam).map_err(|_| WorldModelError::Diverged { member: index, epoch })?;
        }
        curve.push(total / records.len() as f64);
    }
    Ok(curve)
}

/// Fits every member by minimising the Gaussian negative log-likelihood
/// `½(log σ² + (r − μ)²/σ²)` over the log. Members differ only in their
/// initialisation and shuffling streams.
pub fn train_world_model(
    d: &Dataset,
    cfg: &WorldModelConfig,
) -> Result<(WorldModelEnsemble, TrainingCurve), WorldModelError> {
    if d.train_log.is_empty() {
        return Err(WorldModelError::EmptyLog);
    }
    let mut ensemble = WorldModelEnsemble::new(d, cfg)?;
    let layout = ensemble.layout.clone();

    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<f64>, WorldModelError>> = {
        use rayon::prelude::*;
        ensemble.members.par_iter_mut().enumerate().map(|(k, m)| train_member(m, k, d, &layout, cfg)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<f64>, WorldModelError>> =
        ensemble.members.iter_mut().enumerate().map(|(k, m)| train_member(m, k, d, &layout, cfg)).collect();

    let losses = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((ensemble, TrainingCurve { losses }))
}

impl Parameterized for WorldModelEnsemble {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.members.visit(f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.members.visit_mut(f)
    }
}
