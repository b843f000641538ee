//! Offline interaction logs, catalogs, the evaluation-only truth matrix, and
//! behaviour-policy statistics.

mod behavior;
mod io;
mod synthetic;

pub use behavior::BehaviorStats;
pub use io::{load_dataset, save_dataset, Manifest};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::matrix::DenseMatrix;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("csv error in {file}: {message}")]
    Csv { file: String, message: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("empty log")]
    EmptyLog,
    #[error("id out of range: {kind} id {id} in {file}")]
    IdOutOfRange { kind: &'static str, id: i64, file: String },
    #[error("feedback {value} outside declared range [{r_min}, {r_max}]")]
    FeedbackOutOfRange { value: f64, r_min: f64, r_max: f64 },
    #[error("duplicate interaction (user {user}, item {item}, step {step})")]
    Duplicate { user: usize, item: usize, step: usize },
    #[error("truth matrix incomplete: {missing} of {total} entries missing")]
    IncompleteTruth { missing: usize, total: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: usize,
    pub item_id: usize,
    pub feedback: f64,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    pub primary_category: Vec<usize>,
    /// Per-item categorical feature ids, one entry per feature field.
    pub features: Vec<Vec<usize>>,
    pub n_categories: usize,
    /// Vocabulary size of every feature field.
    pub feature_vocab: Vec<usize>,
}

impl ItemCatalog {
    pub fn count(&self) -> usize {
        self.primary_category.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserCatalog {
    pub features: Vec<Vec<usize>>,
    pub feature_vocab: Vec<usize>,
}

impl UserCatalog {
    pub fn count(&self) -> usize {
        self.features.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub seed: Option<u64>,
    pub train_log: Vec<InteractionRecord>,
    pub users: UserCatalog,
    pub items: ItemCatalog,
    /// Ground-truth feedback for every (user, item); used only by evaluation.
    pub truth: Option<DenseMatrix>,
    pub r_min: f64,
    pub r_max: f64,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.users.count()
    }

    pub fn n_items(&self) -> usize {
        self.items.count()
    }

    pub fn category(&self, item: usize) -> usize {
        self.items.primary_category[item]
    }

    /// Each user's log entries ordered by step.
    pub fn user_sequences(&self) -> Vec<Vec<&InteractionRecord>> {
        let mut seqs: Vec<Vec<&InteractionRecord>> = vec![Vec::new(); self.n_users()];
        for rec in &self.train_log {
            seqs[rec.user_id].push(rec);
        }
        for s in &mut seqs {
            s.sort_by_key(|r| r.step);
        }
        seqs
    }

    /// Fraction of the user × item grid present in the log.
    pub fn density(&self) -> f64 {
        self.train_log.len() as f64 / (self.n_users() * self.n_items()) as f64
    }

    /// SHA-256 over the canonical on-disk serialisation.
    pub fn content_hash(&self) -> String {
        let files = io::render_files(self);
        let mut hasher = Sha256::new();
        for (name, body) in &files {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(body.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}
