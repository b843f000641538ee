use sha2::{Digest, Sha256};

use crate::matrix::DenseMatrix;

/// Current reward estimates for every (user, item), the value each entry held
/// before its latest write, and per-entry write counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapedRewardMatrix {
    pub current: DenseMatrix,
    pub previous: DenseMatrix,
    pub write_count: Vec<u32>,
    pub r_min: f64,
    pub r_max: f64,
}

/// Outcome of one write-back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WriteBack {
    pub previous: f64,
    pub current: f64,
}

impl ShapedRewardMatrix {
    pub fn new(initial: &DenseMatrix, r_min: f64, r_max: f64) -> Self {
        let mut current = initial.clone();
        current.data.iter_mut().for_each(|v| *v = v.clamp(r_min, r_max));
        Self {
            previous: current.clone(),
            write_count: vec![0; current.data.len()],
            current,
            r_min,
            r_max,
        }
    }

    pub fn n_users(&self) -> usize {
        self.current.rows
    }

    pub fn n_items(&self) -> usize {
        self.current.cols
    }

    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.current.get(user, item)
    }

    pub fn row(&self, user: usize) -> &[f64] {
        self.current.row(user)
    }

    /// Moves the entry towards `target` by `alpha` (1 = overwrite), clipping to
    /// the reward range, and remembers the value it replaced.
    pub fn write(&mut self, user: usize, item: usize, target: f64, alpha: f64) -> WriteBack {
        let old = self.current.get(user, item);
        let new = ((1.0 - alpha) * old + alpha * target).clamp(self.r_min, self.r_max);
        self.previous.set(user, item, old);
        self.current.set(user, item, new);
        self.write_count[user * self.current.cols + item] += 1;
        WriteBack { previous: old, current: new }
    }

    /// SHA-256 over the bit patterns of every stored value and count.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.current.data.iter().chain(&self.previous.data) {
            h.update(v.to_bits().to_le_bytes());
        }
        for c in &self.write_count {
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
