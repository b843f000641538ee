//! Run directories: everything needed to resume training or re-run
//! evaluation for one seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::shaped::ShapedRewardMatrix;
use super::train::Trainer;
use super::EngineError;
use crate::checkpoint::{encode_params, load_params, parse_blocks, write_block, CheckpointError, RawBlock};
use crate::dataset::Dataset;
use crate::matrix::DenseMatrix;
use crate::worldmodel::WorldModelEnsemble;

pub const BUNDLE_FORMAT: &str = "darlr-bundle-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format: String,
    pub seed: u64,
    pub variant: String,
    pub epoch: usize,
    pub steps: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub dataset_hash: String,
    /// SHA-256 of `config.json`.
    pub config_hash: String,
    pub matrix_hash: String,
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn io(e: std::io::Error) -> EngineError {
    EngineError::Checkpoint(CheckpointError::Io(e))
}

pub fn encode_matrix(m: &ShapedRewardMatrix) -> String {
    let mut out = format!("# shaped reward matrix, range {} {}\n", m.r_min, m.r_max);
    let shape = [m.n_users(), m.n_items()];
    write_block(&mut out, "current", &shape, &m.current.data);
    write_block(&mut out, "previous", &shape, &m.previous.data);
    let counts: Vec<f64> = m.write_count.iter().map(|&c| f64::from(c)).collect();
    write_block(&mut out, "write_count", &shape, &counts);
    out
}

pub fn decode_matrix(text: &str, r_min: f64, r_max: f64) -> Result<ShapedRewardMatrix, EngineError> {
    let blocks = parse_blocks(text)?;
    let get = |name: &str| -> Result<&RawBlock, EngineError> {
        let b = blocks.get(name).ok_or_else(|| CheckpointError::MissingBlock(name.to_string()))?;
        if b.shape.len() != 2 {
            return Err(CheckpointError::ShapeMismatch { name: name.into(), expected: vec![0, 0], found: b.shape.clone() }.into());
        }
        Ok(b)
    };
    let dense = |b: &RawBlock| DenseMatrix { rows: b.shape[0], cols: b.shape[1], data: b.values.clone() };
    let (cur, prev, cnt) = (get("current")?, get("previous")?, get("write_count")?);
    if prev.shape != cur.shape || cnt.shape != cur.shape {
        return Err(CheckpointError::ShapeMismatch { name: "previous".into(), expected: cur.shape.clone(), found: prev.shape.clone() }.into());
    }
    Ok(ShapedRewardMatrix {
        current: dense(cur),
        previous: dense(prev),
        write_count: cnt.values.iter().map(|&c| c as u32).collect(),
        r_min,
        r_max,
    })
}

/// Writes the run directory for `trainer` (creating `dir`).
pub fn save_bundle(
    dir: impl AsRef<Path>,
    trainer: &Trainer,
    wm: &WorldModelEnsemble,
    metrics_csv: &str,
) -> Result<(), EngineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io)?;
    let config = trainer.config.to_json();
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.to_string(),
        seed: trainer.seed,
        variant: trainer.variant.name().to_string(),
        epoch: trainer.epoch,
        steps: trainer.steps,
        n_users: trainer.matrix.n_users(),
        n_items: trainer.matrix.n_items(),
        dataset_hash: wm.dataset_hash.clone(),
        config_hash: sha256_hex(&config),
        matrix_hash: trainer.matrix.content_hash(),
    };
    let write = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(io);
    write("config.json", &config)?;
    write("manifest.json", &serde_json::to_string_pretty(&manifest).expect("manifest serialises"))?;
    write("recommender.params", &encode_params(&trainer.recommender, true))?;
    write("selector.params", &encode_params(&trainer.selector, true))?;
    write("matrix.params", &encode_matrix(&trainer.matrix))?;
    write("rng.json", &serde_json::to_string(&trainer.rng).expect("rng serialises"))?;
    write("world_model.ckpt", &wm.to_text())?;
    write("metrics.csv", metrics_csv)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub trainer: Trainer,
    pub world_model: WorldModelEnsemble,
}

/// Restores a run directory against the dataset it was trained on.
pub fn load_bundle(dir: impl AsRef<Path>, d: &Dataset) -> Result<Bundle, EngineError> {
    let dir = dir.as_ref();
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(io);
    let manifest: BundleManifest = serde_json::from_str(&read("manifest.json")?)
        .map_err(|e| EngineError::InvalidConfig(format!("manifest.json: {e}")))?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(EngineError::InvalidConfig(format!("unsupported bundle format {}", manifest.format)));
    }
    let config_text = read("config.json")?;
    if sha256_hex(&config_text) != manifest.config_hash {
        return Err(EngineError::HashMismatch { expected: manifest.config_hash.clone(), found: sha256_hex(&config_text) });
    }
    let config = RunConfig::from_json(&config_text)?;
    let world_model = WorldModelEnsemble::from_text(&read("world_model.ckpt")?)?;
    let mut trainer = Trainer::new(d, &world_model, &config, manifest.seed)?;
    load_params(&mut trainer.recommender, &parse_blocks(&read("recommender.params")?)?)?;
    load_params(&mut trainer.selector, &parse_blocks(&read("selector.params")?)?)?;
    trainer.matrix = decode_matrix(&read("matrix.params")?, d.r_min, d.r_max)?;
    if trainer.matrix.content_hash() != manifest.matrix_hash {
        return Err(EngineError::HashMismatch { expected: manifest.matrix_hash.clone(), found: trainer.matrix.content_hash() });
    }
    trainer.rng = serde_json::from_str(&read("rng.json")?)
        .map_err(|e| EngineError::InvalidConfig(format!("rng.json: {e}")))?;
    trainer.epoch = manifest.epoch;
    trainer.steps = manifest.steps;
    Ok(Bundle { manifest, trainer, world_model })
}
