//! Advantage actor-critic bookkeeping shared by both agents.

use serde::{Deserialize, Serialize};

use crate::nn::logprob_grad;

/// Critic parameterisation. `StateValue` trains `V(s)` towards the one-step
/// TD target `r + γ·V(s')`; `ActionValueMax` trains `Q(s, a)` towards
/// `r + γ·max_a' Q(s', a')` and uses `Q(s, a) − Σ_a π(a|s)·Q(s, a)` as the
/// advantage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticForm {
    #[default]
    StateValue,
    ActionValueMax,
}

impl CriticForm {
    pub fn outputs(self, n_actions: usize) -> usize {
        match self {
            CriticForm::StateValue => 1,
            CriticForm::ActionValueMax => n_actions,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    CategoryRepeat,
    MaxLength,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::CategoryRepeat => "category_repeat",
            DoneReason::MaxLength => "max_length",
        }
    }
}

/// Reward ingredients logged for a recommendation step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// Reward estimate used in the composite reward.
    pub r_hat: f64,
    /// Uncertainty penalty actually applied (dynamic or static).
    pub p_u: f64,
    pub p_e: f64,
    /// Matrix value before this step's write-back, when shaping ran.
    pub previous: Option<f64>,
    pub mean_sim: Option<f64>,
    pub mean_div: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub logprob: f64,
    /// Full action distribution (zero on masked actions).
    pub probs: Vec<f64>,
    pub temperature: f64,
    pub reward: f64,
    /// Critic output: one value, or one per action.
    pub critic: Vec<f64>,
    pub components: Option<RewardComponents>,
    pub done: bool,
    pub reason: Option<DoneReason>,
}

impl Transition {
    pub fn value(&self, form: CriticForm) -> f64 {
        match form {
            CriticForm::StateValue => self.critic[0],
            CriticForm::ActionValueMax => self.probs.iter().zip(&self.critic).map(|(p, q)| p * q).sum(),
        }
    }

    fn bootstrap(&self, form: CriticForm) -> f64 {
        match form {
            CriticForm::StateValue => self.critic[0],
            CriticForm::ActionValueMax => self
                .probs
                .iter()
                .zip(&self.critic)
                .filter(|(p, _)| **p > 0.0)
                .map(|(_, q)| *q)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub user: usize,
    pub transitions: Vec<Transition>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Trajectory {
    pub fn new(user: usize) -> Self {
        Self { user, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Monte Carlo returns `G_t = Σ_k γ^(k−t) r_k` and advantages `G_t − V(s_t)`
/// (or `Q(s_t, a_t) − V(s_t)` for the action-value critic).
pub fn compute_advantages(traj: &mut Trajectory, gamma: f64, form: CriticForm) {
    let n = traj.len();
    traj.returns = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        running = traj.transitions[t].reward + gamma * running;
        traj.returns[t] = running;
    }
    traj.advantages = traj
        .transitions
        .iter()
        .zip(&traj.returns)
        .map(|(tr, g)| match form {
            CriticForm::StateValue => g - tr.critic[0],
            CriticForm::ActionValueMax => tr.critic[tr.action] - tr.value(form),
        })
        .collect();
}

/// Mean squared TD error, with the gradient w.r.t. every critic output.
/// Targets are constants; terminal transitions bootstrap from 0.
pub fn critic_loss(traj: &Trajectory, gamma: f64, form: CriticForm) -> (f64, Vec<Vec<f64>>) {
    let n = traj.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(n);
    for t in 0..n {
        let tr = &traj.transitions[t];
        let next = if tr.done { 0.0 } else { traj.transitions.get(t + 1).map_or(0.0, |nx| nx.bootstrap(form)) };
        let target = tr.reward + gamma * next;
        let mut g = vec![0.0; tr.critic.len()];
        let idx = match form {
            CriticForm::StateValue => 0,
            CriticForm::ActionValueMax => tr.action,
        };
        let err = target - tr.critic[idx];
        loss += err * err * scale;
        g[idx] = -2.0 * err * scale;
        grads.push(g);
    }
    (loss, grads)
}

/// `−mean_t[log π(a_t|s_t)·A_t]` with advantages held constant, and its
/// gradient w.r.t. each step's logits.
pub fn actor_loss(traj: &Trajectory) -> (f64, Vec<Vec<f64>>) {
    let n = traj.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let grads = traj
        .transitions
        .iter()
        .zip(&traj.advantages)
        .map(|(tr, &adv)| {
            loss -= tr.logprob * adv * scale;
            logprob_grad(&tr.probs, tr.action, tr.temperature).into_iter().map(|g| -adv * scale * g).collect()
        })
        .collect();
    (loss, grads)
}
