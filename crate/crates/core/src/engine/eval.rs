//! Evaluation on the ground-truth environment.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a2c::DoneReason;
use super::env::{termination, MAX_LENGTH};
use super::shaped::ShapedRewardMatrix;
use super::EngineError;
use crate::dataset::Dataset;
use crate::matrix::{mean_std, pairwise_sum, DenseMatrix};
use crate::recommender::RecommenderAgent;

/// Environment variable capping the number of evaluation workers.
pub const THREADS_ENV: &str = "DARLR_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub user: usize,
    pub items: Vec<usize>,
    pub categories: Vec<usize>,
    pub rewards: Vec<f64>,
    pub reason: Option<DoneReason>,
}

impl EpisodeSummary {
    pub fn length(&self) -> usize {
        self.rewards.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn mean_reward(&self) -> f64 {
        self.total_reward() / self.length().max(1) as f64
    }

    /// Share of the episode taken by its most frequent category.
    pub fn mcd(&self) -> f64 {
        majority_category_share(&self.categories)
    }
}

pub fn majority_category_share(categories: &[usize]) -> f64 {
    if categories.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &c in categories {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    *counts.values().max().expect("non-empty") as f64 / categories.len() as f64
}

/// Means and standard deviations over evaluation episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub r_tra: f64,
    pub r_tra_std: f64,
    pub r_each: f64,
    pub r_each_std: f64,
    pub length: f64,
    pub length_std: f64,
    pub mcd: f64,
    pub mcd_std: f64,
}

impl EvalReport {
    pub fn from_episodes(episodes: &[EpisodeSummary]) -> Self {
        let stat = |f: &dyn Fn(&EpisodeSummary) -> f64| mean_std(&episodes.iter().map(f).collect::<Vec<_>>());
        let (r_tra, r_tra_std) = stat(&|e| e.total_reward());
        let (r_each, r_each_std) = stat(&|e| e.mean_reward());
        let (length, length_std) = stat(&|e| e.length() as f64);
        let (mcd, mcd_std) = stat(&|e| e.mcd());
        Self { episodes: episodes.len(), r_tra, r_tra_std, r_each, r_each_std, length, length_std, mcd, mcd_std }
    }
}

/// RNG of evaluation episode `index`: depends only on `(seed, index)`.
pub fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Plays one episode against the ground truth with a frozen recommender.
pub fn run_eval_episode<R: Rng + ?Sized>(
    agent: &RecommenderAgent,
    d: &Dataset,
    truth: &DenseMatrix,
    user: usize,
    greedy: bool,
    rng: &mut R,
) -> Result<EpisodeSummary, EngineError> {
    let mut state = agent.init_episode(user)?;
    let mut mask = vec![true; d.n_items()];
    let mut ep = EpisodeSummary { user, items: Vec::new(), categories: Vec::new(), rewards: Vec::new(), reason: None };
    for step in 1..=MAX_LENGTH {
        let item = agent.recommend(&state, &mask, greedy, rng)?.item;
        let category = d.category(item);
        let reward = truth.get(user, item);
        let mut reason = termination(category, &ep.categories, step);
        mask[item] = false;
        if reason.is_none() && !mask.contains(&true) {
            reason = Some(DoneReason::MaxLength);
        }
        ep.items.push(item);
        ep.categories.push(category);
        ep.rewards.push(reward);
        if reason.is_some() {
            ep.reason = reason;
            break;
        }
        agent.track(&mut state, item, reward)?;
    }
    Ok(ep)
}

fn worker_count() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(0)
}

/// Runs `episodes` episodes for uniformly drawn users; episode `k` uses
/// `episode_rng(seed, k)`, so results do not depend on worker scheduling.
/// The worker count comes from `DARLR_THREADS` (unset: all cores).
pub fn evaluate_episodes(
    agent: &RecommenderAgent,
    d: &Dataset,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<Vec<EpisodeSummary>, EngineError> {
    evaluate_episodes_with_workers(agent, d, episodes, seed, greedy, worker_count())
}

/// As `evaluate_episodes` with an explicit worker count (0 = all cores).
pub fn evaluate_episodes_with_workers(
    agent: &RecommenderAgent,
    d: &Dataset,
    episodes: usize,
    seed: u64,
    greedy: bool,
    workers: usize,
) -> Result<Vec<EpisodeSummary>, EngineError> {
    let truth = d.truth.as_ref().ok_or(EngineError::MissingTruth)?;
    let one = |k: usize| {
        let mut rng = episode_rng(seed, k);
        let user = rng.gen_range(0..d.n_users());
        run_eval_episode(agent, d, truth, user, greedy, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..episodes).into_par_iter().map(one).collect::<Result<Vec<_>, _>>();
        match workers {
            0 => run(),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| EngineError::InvalidConfig(format!("thread pool: {e}")))?
                .install(run),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..episodes).map(one).collect()
    }
}

pub fn evaluate(
    agent: &RecommenderAgent,
    d: &Dataset,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<EvalReport, EngineError> {
    Ok(EvalReport::from_episodes(&evaluate_episodes(agent, d, episodes, seed, greedy)?))
}

/// Mean `|matrix − truth|` over the given entries (0 when empty).
pub fn reward_error(matrix: &ShapedRewardMatrix, truth: &DenseMatrix, visited: &BTreeSet<(usize, usize)>) -> f64 {
    let errs: Vec<f64> = visited.iter().map(|&(u, i)| (matrix.get(u, i) - truth.get(u, i)).abs()).collect();
    if errs.is_empty() {
        0.0
    } else {
        pairwise_sum(&errs) / errs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcd_is_majority_share() {
        assert_eq!(majority_category_share(&[1, 1, 2, 3]), 0.5);
        assert_eq!(majority_category_share(&[4]), 1.0);
    }

    #[test]
    fn report_aggregates() {
        let ep = |rewards: Vec<f64>, cats: Vec<usize>| EpisodeSummary {
            user: 0,
            items: vec![0; rewards.len()],
            categories: cats,
            rewards,
            reason: None,
        };
        let r = EvalReport::from_episodes(&[ep(vec![1.0, 1.0], vec![0, 1]), ep(vec![1.0; 4], vec![0, 0, 1, 2])]);
        assert_eq!((r.r_tra, r.r_tra_std, r.r_each, r.length, r.mcd), (3.0, 1.0, 1.0, 3.0, 0.5));
    }
}
