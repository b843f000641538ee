//! Behaviour-entropy penalty: `P_E = −KL(π̂_β(·|pattern) ‖ uniform)`.
//!
//! At action level the penalty for item `a` is `−log(|I|·π̂_β(a|pattern))`,
//! whose expectation under `π̂_β` is exactly `−KL`. Rarely-logged continuations
//! earn a bonus, habitual ones a penalty.

use std::collections::BTreeMap;

use crate::dataset::BehaviorStats;

/// `log(|I|·π̂_β(item|pattern))`, the pointwise log-ratio against uniform.
pub fn behavior_log_ratio(stats: &BehaviorStats, recent: &[usize], item: usize) -> f64 {
    (stats.n_items as f64 * stats.prob(recent, item)).ln()
}

pub fn entropy_penalty(stats: &BehaviorStats, recent: &[usize], item: usize) -> f64 {
    -behavior_log_ratio(stats, recent, item)
}

/// State-level `−KL(π̂_β ‖ uniform)`, always ≤ 0.
pub fn state_entropy_penalty(stats: &BehaviorStats, recent: &[usize]) -> f64 {
    let n = stats.n_items as f64;
    -stats.distribution(recent).iter().map(|&p| p * (n * p).ln()).sum::<f64>()
}

/// Precomputed per-(pattern, item) penalties for every observed pattern.
#[derive(Clone, Debug)]
pub struct EntropyTable {
    pub stats: BehaviorStats,
    patterns: BTreeMap<Vec<usize>, Vec<f64>>,
    unconditional: Vec<f64>,
}

impl EntropyTable {
    pub fn new(stats: BehaviorStats) -> Self {
        let penalties = |recent: &[usize]| -> Vec<f64> {
            let n = stats.n_items as f64;
            stats.distribution(recent).iter().map(|p| -(n * p).ln()).collect()
        };
        let patterns = stats.pattern_counts.keys().map(|k| (k.clone(), penalties(k))).collect();
        let unconditional = penalties(&[]);
        Self { stats, patterns, unconditional }
    }

    /// Penalty row for the longest observed suffix of `recent`.
    pub fn row(&self, recent: &[usize]) -> &[f64] {
        let longest = self.stats.order.min(recent.len());
        for len in (1..=longest).rev() {
            if let Some(row) = self.patterns.get(&recent[recent.len() - len..]) {
                return row;
            }
        }
        &self.unconditional
    }

    pub fn penalty(&self, recent: &[usize], item: usize) -> f64 {
        self.row(recent)[item]
    }

    /// Backoff depth of every stored pattern length, for inspection.
    pub fn levels(&self) -> Vec<usize> {
        let mut lv: Vec<usize> = self.patterns.keys().map(Vec::len).collect();
        lv.sort_unstable();
        lv.dedup();
        lv
    }
}
