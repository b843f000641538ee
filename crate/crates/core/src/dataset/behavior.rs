use std::collections::BTreeMap;

use super::{Dataset, DatasetError};

/// Empirical next-item counts conditioned on the categories of the preceding
/// `order` interactions, with Laplace smoothing and suffix backoff.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorStats {
    pub order: usize,
    pub alpha: f64,
    pub n_items: usize,
    /// Category pattern (oldest first, length 1..=order) → next-item counts.
    pub pattern_counts: BTreeMap<Vec<usize>, Vec<f64>>,
    pub item_totals: Vec<f64>,
}

impl BehaviorStats {
    pub fn build(d: &Dataset, order: usize, alpha: f64) -> Result<Self, DatasetError> {
        if !(alpha > 0.0) {
            return Err(DatasetError::InvalidArgument(format!("smoothing alpha must be > 0, got {alpha}")));
        }
        let n_items = d.n_items();
        let mut pattern_counts: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
        let mut item_totals = vec![0.0; n_items];
        for seq in d.user_sequences() {
            let cats: Vec<usize> = seq.iter().map(|r| d.category(r.item_id)).collect();
            for (t, rec) in seq.iter().enumerate() {
                item_totals[rec.item_id] += 1.0;
                for len in 1..=order.min(t) {
                    let counts =
                        pattern_counts.entry(cats[t - len..t].to_vec()).or_insert_with(|| vec![0.0; n_items]);
                    counts[rec.item_id] += 1.0;
                }
            }
        }
        Ok(Self { order, alpha, n_items, pattern_counts, item_totals })
    }

    /// Counts for the longest observed suffix of `recent` (at most `order`
    /// long), falling back to unconditional counts. Returns the matched length.
    pub fn counts_for(&self, recent: &[usize]) -> (&[f64], usize) {
        let longest = self.order.min(recent.len());
        for len in (1..=longest).rev() {
            if let Some(c) = self.pattern_counts.get(&recent[recent.len() - len..]) {
                return (c, len);
            }
        }
        (&self.item_totals, 0)
    }

    /// Smoothed `π̂_β(·|pattern)`.
    pub fn distribution(&self, recent: &[usize]) -> Vec<f64> {
        let (counts, _) = self.counts_for(recent);
        let denom = counts.iter().sum::<f64>() + self.alpha * self.n_items as f64;
        counts.iter().map(|c| (c + self.alpha) / denom).collect()
    }

    pub fn prob(&self, recent: &[usize], item: usize) -> f64 {
        let (counts, _) = self.counts_for(recent);
        let denom = counts.iter().sum::<f64>() + self.alpha * self.n_items as f64;
        (counts[item] + self.alpha) / denom
    }
}
