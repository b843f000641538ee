//! The dual-agent training loop.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a2c::{actor_loss, compute_advantages, critic_loss, CriticForm, DoneReason, RewardComponents, Trajectory, Transition};
use super::config::{RunConfig, Variant};
use super::env::{env_step, Mode, MAX_LENGTH};
use super::eval::{evaluate, reward_error, EvalReport};
use super::shaped::ShapedRewardMatrix;
use super::EngineError;
use crate::dataset::{BehaviorStats, Dataset};
use crate::matrix::DenseMatrix;
use crate::nn::{adam_step, named_rng, AdamConfig};
use crate::recommender::{RecEpisodeTape, RecStepTape, RecommenderAgent};
use crate::rewardmath::{dynamic_uncertainty, recommender_reward, shape_reward};
use crate::selector::{SelectionEpisode, SelectorAgent};
use crate::worldmodel::{EntropyTable, WorldModelEnsemble};

/// Everything logged about one training recommendation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub user: usize,
    pub item: usize,
    pub components: RewardComponents,
    pub reward: f64,
    pub selected: Vec<usize>,
    pub reference_rewards: Vec<f64>,
    /// Matrix value at `(user, item)` right after this step.
    pub matrix_after: f64,
    pub reason: Option<DoneReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub steps: usize,
    pub report: EvalReport,
    /// Mean `|r̂ − truth|` over the pairs visited during this epoch.
    pub reward_error: f64,
}

pub const METRICS_HEADER: &str = "epoch,steps,R_tra,R_tra_std,R_each,Length,MCD,reward_error";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.steps, r.report.r_tra, r.report.r_tra_std, r.report.r_each, r.report.length, r.report.mcd, r.reward_error
        );
    }
    out
}

/// Losses of one policy update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub actor: f64,
    pub critic: f64,
}

fn check_finite(what: &str, v: f64) -> Result<(), EngineError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(EngineError::NonFinite { what: what.to_string(), value: v })
    }
}

/// One A2C step of the recommender on a finished trajectory.
pub fn update_recommender(
    agent: &mut RecommenderAgent,
    traj: &mut Trajectory,
    tape: &RecEpisodeTape,
    gamma: f64,
    adam: &AdamConfig,
) -> Result<UpdateStats, EngineError> {
    let form = agent.critic_form;
    compute_advantages(traj, gamma, form);
    let (actor, d_logits) = actor_loss(traj);
    let (critic, d_critic) = critic_loss(traj, gamma, form);
    check_finite("recommender actor loss", actor)?;
    check_finite("recommender critic loss", critic)?;
    agent.backward(tape, &d_logits, &d_critic)?;
    adam_step(agent, adam)?;
    Ok(UpdateStats { actor, critic })
}

/// One A2C step of the selector on every selection episode of a
/// recommendation trajectory, losses averaged over episodes.
pub fn update_selector(
    agent: &mut SelectorAgent,
    episodes: &mut [SelectionEpisode],
    gamma: f64,
    adam: &AdamConfig,
) -> Result<UpdateStats, EngineError> {
    if episodes.is_empty() {
        return Ok(UpdateStats::default());
    }
    let form = agent.critic_form;
    let scale = 1.0 / episodes.len() as f64;
    let mut stats = UpdateStats::default();
    for ep in episodes.iter_mut() {
        compute_advantages(&mut ep.trajectory, gamma, form);
        let (a, mut dl) = actor_loss(&ep.trajectory);
        let (c, mut dc) = critic_loss(&ep.trajectory, gamma, form);
        check_finite("selector actor loss", a)?;
        check_finite("selector critic loss", c)?;
        stats.actor += a * scale;
        stats.critic += c * scale;
        dl.iter_mut().chain(dc.iter_mut()).flatten().for_each(|g| *g *= scale);
        agent.backward(&ep.tape, &dl, &dc)?;
    }
    adam_step(agent, adam)?;
    Ok(stats)
}

/// Mutable state of a training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: RunConfig,
    pub variant: Variant,
    pub seed: u64,
    pub recommender: RecommenderAgent,
    pub selector: SelectorAgent,
    pub matrix: ShapedRewardMatrix,
    pub static_uncertainty: DenseMatrix,
    pub entropy: EntropyTable,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub steps: usize,
}

/// What one training trajectory produced.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub selections: Vec<SelectionEpisode>,
    pub recommender: UpdateStats,
    pub selector: UpdateStats,
}

impl Trainer {
    pub fn new(d: &Dataset, wm: &WorldModelEnsemble, config: &RunConfig, seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let hash = d.content_hash();
        if wm.dataset_hash != hash {
            return Err(EngineError::HashMismatch { expected: hash, found: wm.dataset_hash.clone() });
        }
        if d.truth.is_none() {
            return Err(EngineError::MissingTruth);
        }
        let pred = wm.predict_matrix(d);
        let p = &config.policy;
        let stats = BehaviorStats::build(d, config.train.behavior_order, config.train.behavior_alpha)?;
        Ok(Self {
            config: config.clone(),
            variant: config.variant,
            seed,
            recommender: RecommenderAgent::new(&p.recommender, d.n_users(), d.n_items(), p.critic, seed),
            selector: SelectorAgent::new(&p.selector, p.recommender.d_rec, d.n_users(), d.n_items(), p.critic, seed),
            matrix: ShapedRewardMatrix::new(&pred.mean, d.r_min, d.r_max),
            static_uncertainty: pred.static_uncertainty,
            entropy: EntropyTable::new(stats),
            rng: named_rng(seed, "train"),
            epoch: 0,
            steps: 0,
        })
    }

    pub fn critic_form(&self) -> CriticForm {
        self.config.policy.critic
    }

    fn budget_left(&self) -> bool {
        self.steps < self.config.train.max_steps
    }

    /// Rolls out one recommendation trajectory for a random user and updates
    /// both agents on it.
    pub fn run_trajectory(
        &mut self,
        d: &Dataset,
        visited: &mut BTreeSet<(usize, usize)>,
        mut log: Option<&mut Vec<StepLog>>,
    ) -> Result<EpisodeOutcome, EngineError> {
        let cfg = self.config.train.clone();
        let coeffs = self.variant.coeffs(&self.config.policy.coeffs);
        let k_sel = self.config.policy.selector.k_sel;
        let user = self.rng.gen_range(0..d.n_users());
        let mut state = self.recommender.init_episode(user)?;
        let mut mask = vec![true; d.n_items()];
        let mut categories: Vec<usize> = Vec::new();
        let mut traj = Trajectory::new(user);
        let mut steps = Vec::new();
        let mut selections = Vec::new();
        for step in 1..=MAX_LENGTH {
            if !self.budget_left() {
                break;
            }
            let decision = self.recommender.recommend(&state, &mask, false, &mut self.rng)?;
            let item = decision.item;
            let (r_hat, components, selection) = if self.variant.shapes() {
                let ep =
                    self.selector.run_selection(user, item, &state.vector, &self.matrix, k_sel, &coeffs, &mut self.rng)?;
                let target = shape_reward(&ep.reference_rewards)?;
                let wb = self.matrix.write(user, item, target, cfg.alpha_shape);
                let (ms, md) = (ep.mean_similarity(), ep.mean_diversity());
                let p_u = if self.variant.dynamic_uncertainty() {
                    dynamic_uncertainty(wb.current, wb.previous, ms, md, cfg.eps)
                } else {
                    self.static_uncertainty.get(user, item)
                };
                let comp = RewardComponents {
                    r_hat: wb.current,
                    p_u,
                    p_e: 0.0,
                    previous: Some(wb.previous),
                    mean_sim: Some(ms),
                    mean_div: Some(md),
                };
                (wb.current, comp, Some(ep))
            } else {
                let r_hat = self.matrix.get(user, item);
                let comp =
                    RewardComponents { r_hat, p_u: self.static_uncertainty.get(user, item), ..RewardComponents::default() };
                (r_hat, comp, None)
            };
            let p_e = self.entropy.penalty(&categories, item);
            let components = RewardComponents { p_e, ..components };
            let reward = recommender_reward(r_hat, components.p_u, p_e, &coeffs);
            let category = d.category(item);
            let env = env_step(user, item, category, &categories, step, Mode::Train, &self.matrix, None)?;
            mask[item] = false;
            let mut reason = env.reason;
            if reason.is_none() && !mask.contains(&true) {
                reason = Some(DoneReason::MaxLength);
            }
            self.steps += 1;
            visited.insert((user, item));
            if let Some(log) = log.as_deref_mut() {
                log.push(StepLog {
                    epoch: self.epoch,
                    step,
                    user,
                    item,
                    components: components.clone(),
                    reward,
                    selected: selection.as_ref().map(|s| s.selected.clone()).unwrap_or_default(),
                    reference_rewards: selection.as_ref().map(|s| s.reference_rewards.clone()).unwrap_or_default(),
                    matrix_after: self.matrix.get(user, item),
                    reason,
                });
            }
            steps.push(RecStepTape {
                window_start: state.window_start(),
                encoder: state.tape.clone(),
                actor: decision.actor_tape,
                critic: decision.critic_tape,
            });
            traj.transitions.push(Transition {
                state: state.vector.clone(),
                action: item,
                logprob: decision.logprob,
                probs: decision.probs,
                temperature: self.recommender.config.temperature,
                reward,
                critic: decision.critic,
                components: Some(components),
                done: reason.is_some(),
                reason,
            });
            selections.extend(selection);
            categories.push(category);
            if reason.is_some() {
                break;
            }
            self.recommender.track(&mut state, item, env.reward)?;
        }
        let tape = RecEpisodeTape { user, records: state.records, steps };
        let gamma = cfg.gamma;
        let rec_stats = if traj.is_empty() {
            UpdateStats::default()
        } else {
            update_recommender(&mut self.recommender, &mut traj, &tape, gamma, &self.config.policy.recommender_adam)?
        };
        let sel_stats = update_selector(&mut self.selector, &mut selections, gamma, &self.config.policy.selector_adam)?;
        Ok(EpisodeOutcome { trajectory: traj, selections, recommender: rec_stats, selector: sel_stats })
    }

    /// Runs one epoch of trajectories; returns the pairs visited.
    pub fn train_epoch(
        &mut self,
        d: &Dataset,
        mut log: Option<&mut Vec<StepLog>>,
    ) -> Result<BTreeSet<(usize, usize)>, EngineError> {
        self.epoch += 1;
        let mut visited = BTreeSet::new();
        for _ in 0..self.config.train.trajectories {
            if !self.budget_left() {
                break;
            }
            self.run_trajectory(d, &mut visited, log.as_deref_mut())?;
        }
        Ok(visited)
    }

    /// Evaluation seed of the current epoch, distinct from the training stream.
    pub fn eval_seed(&self) -> u64 {
        crate::nn::param::fnv1a(&format!("eval/{}/{}", self.seed, self.epoch))
    }

    pub fn evaluate(&self, d: &Dataset) -> Result<EvalReport, EngineError> {
        let t = &self.config.train;
        evaluate(&self.recommender, d, t.eval_episodes, self.eval_seed(), t.greedy_eval)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub metrics: Vec<MetricsRow>,
    pub step_log: Vec<StepLog>,
}

impl TrainOutcome {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }
}

/// Full training run for one seed, evaluating every `eval_every` epochs and
/// after the last one.
pub fn train(d: &Dataset, wm: &WorldModelEnsemble, config: &RunConfig, seed: u64) -> Result<TrainOutcome, EngineError> {
    train_with_log(d, wm, config, seed, false)
}

pub fn train_with_log(
    d: &Dataset,
    wm: &WorldModelEnsemble,
    config: &RunConfig,
    seed: u64,
    keep_step_log: bool,
) -> Result<TrainOutcome, EngineError> {
    let mut trainer = Trainer::new(d, wm, config, seed)?;
    let truth = d.truth.clone().ok_or(EngineError::MissingTruth)?;
    let mut metrics = Vec::new();
    let mut step_log = Vec::new();
    let epochs = config.train.epochs;
    for epoch in 1..=epochs {
        let visited = trainer.train_epoch(d, keep_step_log.then_some(&mut step_log))?;
        if epoch % config.train.eval_every == 0 || epoch == epochs {
            metrics.push(MetricsRow {
                epoch,
                steps: trainer.steps,
                report: trainer.evaluate(d)?,
                reward_error: reward_error(&trainer.matrix, &truth, &visited),
            });
        }
    }
    Ok(TrainOutcome { trainer, metrics, step_log })
}
