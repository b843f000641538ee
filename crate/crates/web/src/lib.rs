//! Browser bindings for three interactive views of the reward machinery:
//! the composite recommender reward, the behaviour-entropy penalty of a
//! logged item distribution, and reward-error curves of dynamic versus static
//! shaping on a small synthetic world.
//!
//! Every export returns a JSON string; errors come back as `{"error": ...}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use darlr_core::dataset::{generate_synthetic, BehaviorStats, Dataset, InteractionRecord, ItemCatalog, SyntheticSpec, UserCatalog};
use darlr_core::engine::{train, RunConfig, Variant};
use darlr_core::rewardmath::{dynamic_uncertainty, recommender_reward, PenaltyCoeffs};
use darlr_core::worldmodel::{entropy_penalty, state_entropy_penalty, train_world_model, WorldModelConfig};

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("plain data serialises"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[derive(Debug, Serialize)]
pub struct RewardBreakdown {
    pub p_u: f64,
    pub reward: f64,
    /// Reward had the shaped value not moved (`P_U′ = 0`).
    pub reward_if_settled: f64,
}

pub fn reward_breakdown_value(
    r_hat: f64,
    previous: f64,
    mean_sim: f64,
    mean_div: f64,
    p_e: f64,
    lambda_u: f64,
    lambda_e: f64,
    eps: f64,
) -> Result<RewardBreakdown, String> {
    if !(eps > 0.0) {
        return Err("eps must be > 0".into());
    }
    let c = PenaltyCoeffs { lambda_u, lambda_e, ..PenaltyCoeffs::zero() };
    let p_u = dynamic_uncertainty(r_hat, previous, mean_sim, mean_div, eps);
    Ok(RewardBreakdown {
        p_u,
        reward: recommender_reward(r_hat, p_u, p_e, &c),
        reward_if_settled: recommender_reward(r_hat, 0.0, p_e, &c),
    })
}

/// Composite reward for one shaped entry and its previous value.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn reward_breakdown(
    r_hat: f64,
    previous: f64,
    mean_sim: f64,
    mean_div: f64,
    p_e: f64,
    lambda_u: f64,
    lambda_e: f64,
    eps: f64,
) -> String {
    to_json(reward_breakdown_value(r_hat, previous, mean_sim, mean_div, p_e, lambda_u, lambda_e, eps))
}

#[derive(Debug, Serialize)]
pub struct EntropyProfile {
    pub probabilities: Vec<f64>,
    pub penalties: Vec<f64>,
    pub state_penalty: f64,
}

/// A log in which item `i` was chosen `counts[i]` times, each by a different
/// user, so only the unconditional distribution is populated.
fn count_log(counts: &[usize]) -> Dataset {
    let n_items = counts.len();
    let train_log: Vec<InteractionRecord> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat(i).take(c))
        .enumerate()
        .map(|(u, item_id)| InteractionRecord { user_id: u, item_id, feedback: 1.0, step: 0 })
        .collect();
    Dataset {
        name: "counts".into(),
        seed: None,
        users: UserCatalog { features: vec![vec![0]; train_log.len()], feature_vocab: vec![1] },
        train_log,
        items: ItemCatalog {
            primary_category: (0..n_items).collect(),
            features: vec![vec![0]; n_items],
            n_categories: n_items,
            feature_vocab: vec![1],
        },
        truth: None,
        r_min: 0.0,
        r_max: 1.0,
    }
}

pub fn entropy_profile_value(counts: &str, alpha: f64) -> Result<EntropyProfile, String> {
    let counts: Vec<usize> = counts
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad count {s:?}")))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err("need ≥2 items".into());
    }
    if counts.iter().sum::<usize>() == 0 {
        return Err("log is empty".into());
    }
    let stats = BehaviorStats::build(&count_log(&counts), 1, alpha).map_err(|e| e.to_string())?;
    Ok(EntropyProfile {
        probabilities: stats.distribution(&[]),
        penalties: (0..counts.len()).map(|i| entropy_penalty(&stats, &[], i)).collect(),
        state_penalty: state_entropy_penalty(&stats, &[]),
    })
}

/// Per-item and state-level entropy penalty for comma-separated log counts.
#[wasm_bindgen]
pub fn entropy_profile(counts: &str, alpha: f64) -> String {
    to_json(entropy_profile_value(counts, alpha))
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub variant: String,
    pub reward_error: Vec<f64>,
    pub r_tra: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ShapingComparison {
    pub epochs: Vec<usize>,
    pub curves: Vec<Curve>,
}

fn demo_config(epochs: usize, trajectories: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.epochs = epochs;
    cfg.train.trajectories = trajectories;
    cfg.train.eval_episodes = 30;
    let r = &mut cfg.policy.recommender;
    (r.d_rec, r.d_embed, r.hidden) = (8, 4, 8);
    let s = &mut cfg.policy.selector;
    (s.d_pref, s.hidden, s.k_sel) = (8, 8, 3);
    cfg
}

pub fn compare_shaping_value(seed: u64, epochs: usize, trajectories: usize) -> Result<ShapingComparison, String> {
    if epochs == 0 || epochs > 50 || trajectories == 0 || trajectories > 100 {
        return Err("epochs must be in [1, 50] and trajectories in [1, 100]".into());
    }
    let d = generate_synthetic(&SyntheticSpec { users: 30, items: 25, log_density: 0.1, seed, ..SyntheticSpec::default() })
        .map_err(|e| e.to_string())?;
    let (wm, _) = train_world_model(&d, &WorldModelConfig { epochs: 50, seed, ..WorldModelConfig::default() })
        .map_err(|e| e.to_string())?;
    let mut out = ShapingComparison { epochs: Vec::new(), curves: Vec::new() };
    for variant in [Variant::Full, Variant::RStatic] {
        let mut cfg = demo_config(epochs, trajectories);
        cfg.variant = variant;
        let run = train(&d, &wm, &cfg, seed).map_err(|e| e.to_string())?;
        out.epochs = run.metrics.iter().map(|m| m.epoch).collect();
        out.curves.push(Curve {
            variant: variant.name().to_string(),
            reward_error: run.metrics.iter().map(|m| m.reward_error).collect(),
            r_tra: run.metrics.iter().map(|m| m.report.r_tra).collect(),
        });
    }
    Ok(out)
}

/// Trains `full` and `r_static` on a small synthetic world and returns their
/// per-epoch reward error and trajectory return.
#[wasm_bindgen]
pub fn compare_shaping(seed: u32, epochs: u32, trajectories: u32) -> String {
    to_json(compare_shaping_value(u64::from(seed), epochs as usize, trajectories as usize))
}
