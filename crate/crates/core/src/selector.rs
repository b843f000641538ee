//! The selector agent: within one recommendation step it picks `K_sel`
//! reference users whose current estimates will refine the recommended
//! entry, earning an intrinsic reward for choosing users that are similar to
//! the target yet mutually diverse.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::a2c::{CriticForm, Trajectory, Transition};
use crate::engine::shaped::ShapedRewardMatrix;
use crate::nn::layers::add_into;
use crate::nn::{softmax_policy, Activation, EncoderTape, Linear, Mlp, MlpTape, NnError, ParamBlock, Parameterized, SeqEncoder};
use crate::rewardmath::{cosine, diversity_gain, intrinsic_reward, similarity_gain, GainPair, PenaltyCoeffs, RewardMathError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectorError {
    #[error("candidate pool has {available} users but {needed} must be selected")]
    PoolExhausted { available: usize, needed: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    RewardMath(#[from] RewardMathError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    /// Width added to the recommender state by the preference projection.
    pub d_pref: usize,
    pub window: usize,
    pub heads: usize,
    pub layers: usize,
    pub hidden: usize,
    /// Upper bound on the candidate pool; the effective size is
    /// `min(pool_size, |U| − 1)`.
    pub pool_size: usize,
    pub k_sel: usize,
    pub temperature: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { d_pref: 32, window: 5, heads: 1, layers: 1, hidden: 32, pool_size: 100, k_sel: 5, temperature: 1.0 }
    }
}

/// Top-`c` users other than `user` ranked by cosine similarity of their rows
/// to the user's row (ties: ascending id). Rows with zero norm rank as
/// similarity 0.
pub fn candidate_pool(
    user: usize,
    matrix: &ShapedRewardMatrix,
    c: usize,
    k_sel: usize,
) -> Result<Vec<usize>, SelectorError> {
    let available = matrix.n_users().saturating_sub(1);
    if available < k_sel || c < k_sel {
        return Err(SelectorError::PoolExhausted { available: available.min(c), needed: k_sel });
    }
    let p_u = matrix.row(user);
    let mut scored: Vec<(f64, usize)> = (0..matrix.n_users())
        .filter(|&v| v != user)
        .map(|v| (cosine(p_u, matrix.row(v)).unwrap_or(0.0), v))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(c);
    Ok(scored.into_iter().map(|(_, v)| v).collect())
}

/// Similarity gain with zero-norm rows scoring 0 instead of failing.
fn safe_similarity(a: &[f64], b: &[f64]) -> Result<f64, RewardMathError> {
    match similarity_gain(a, b) {
        Err(RewardMathError::ZeroNorm) => Ok(0.0),
        other => other,
    }
}

fn safe_diversity(candidate: &[f64], selected: &[&[f64]]) -> Result<f64, RewardMathError> {
    match diversity_gain(candidate, selected) {
        Err(RewardMathError::ZeroNorm) => Ok(0.0),
        other => other,
    }
}

#[derive(Clone, Debug)]
pub struct SelectorAgent {
    pub config: SelectorConfig,
    pub d_rec: usize,
    pub n_items: usize,
    pub critic_form: CriticForm,
    pub projection: Linear,
    pub encoder: SeqEncoder,
    pub actor: Mlp,
    pub critic: Mlp,
}

#[derive(Clone, Debug)]
struct StepTape {
    window_start: usize,
    encoder: Option<EncoderTape>,
    actor: MlpTape,
    critic: MlpTape,
}

/// Forward records needed to backpropagate a selection episode.
#[derive(Clone, Debug, Default)]
pub struct SelectionTape {
    /// Projection inputs `s_rec ⊕ p`, one per token.
    inputs: Vec<Vec<f64>>,
    steps: Vec<StepTape>,
}

#[derive(Clone, Debug)]
pub struct SelectionEpisode {
    pub user: usize,
    pub item: usize,
    pub pool: Vec<usize>,
    pub selected: Vec<usize>,
    pub gains: Vec<GainPair>,
    /// `r̂(u_t, item)` of each selected user, read from the pre-step matrix.
    pub reference_rewards: Vec<f64>,
    pub intrinsic: Vec<f64>,
    pub trajectory: Trajectory,
    pub tape: SelectionTape,
}

impl SelectionEpisode {
    pub fn mean_similarity(&self) -> f64 {
        self.gains.iter().map(|g| g.sim).sum::<f64>() / self.gains.len().max(1) as f64
    }

    pub fn mean_diversity(&self) -> f64 {
        self.gains.iter().map(|g| g.div).sum::<f64>() / self.gains.len().max(1) as f64
    }
}

impl SelectorAgent {
    pub fn new(
        config: &SelectorConfig,
        d_rec: usize,
        n_users: usize,
        n_items: usize,
        critic_form: CriticForm,
        seed: u64,
    ) -> Self {
        let width = d_rec + config.d_pref;
        let pool = config.pool_size.min(n_users.saturating_sub(1)).max(1);
        Self {
            config: config.clone(),
            d_rec,
            n_items,
            critic_form,
            projection: Linear::new("sel.projection", d_rec + n_items, width, seed),
            encoder: SeqEncoder::new("sel.encoder", width, config.heads, config.layers, config.window, seed),
            actor: Mlp::new("sel.actor", &[width, config.hidden, pool], Activation::Tanh, seed),
            critic: Mlp::new("sel.critic", &[width, config.hidden, critic_form.outputs(pool)], Activation::Tanh, seed),
        }
    }

    pub fn state_width(&self) -> usize {
        self.projection.out_dim()
    }

    pub fn pool_width(&self) -> usize {
        self.actor.out_dim()
    }

    fn token_input(&self, s_rec: &[f64], p: &[f64]) -> Result<Vec<f64>, SelectorError> {
        if s_rec.len() != self.d_rec {
            return Err(NnError::ShapeMismatch { expected: self.d_rec, found: s_rec.len() }.into());
        }
        if p.len() != self.n_items {
            return Err(NnError::ShapeMismatch { expected: self.n_items, found: p.len() }.into());
        }
        Ok([s_rec, p].concat())
    }

    /// Initial state: the projection of `s_rec ⊕ p_u`.
    pub fn init_state(&self, s_rec: &[f64], p_u: &[f64]) -> Result<Vec<f64>, SelectorError> {
        Ok(self.projection.forward(&self.token_input(s_rec, p_u)?))
    }

    /// Token contributed by a newly selected user's preference row.
    pub fn token(&self, s_rec: &[f64], p: &[f64]) -> Result<Vec<f64>, SelectorError> {
        self.init_state(s_rec, p)
    }

    /// Encodes the last `window` tokens into the next state.
    pub fn advance_state(&self, tokens: &[Vec<f64>]) -> Result<(Vec<f64>, EncoderTape), SelectorError> {
        let start = tokens.len().saturating_sub(self.config.window);
        Ok(self.encoder.encode(&tokens[start..])?)
    }

    /// Samples `K_sel` distinct reference users for `(user, item)` and scores
    /// each step with the intrinsic reward.
    #[allow(clippy::too_many_arguments)]
    pub fn run_selection<R: Rng + ?Sized>(
        &self,
        user: usize,
        item: usize,
        s_rec: &[f64],
        matrix: &ShapedRewardMatrix,
        k_sel: usize,
        coeffs: &PenaltyCoeffs,
        rng: &mut R,
    ) -> Result<SelectionEpisode, SelectorError> {
        let pool = candidate_pool(user, matrix, self.pool_width(), k_sel)?;
        let p_u = matrix.row(user);
        let mut tape = SelectionTape { inputs: vec![self.token_input(s_rec, p_u)?], steps: Vec::with_capacity(k_sel) };
        let mut tokens = vec![self.projection.forward(&tape.inputs[0])];
        let mut mask: Vec<bool> = (0..self.pool_width()).map(|k| k < pool.len()).collect();
        let mut ep = SelectionEpisode {
            user,
            item,
            pool,
            selected: Vec::with_capacity(k_sel),
            gains: Vec::with_capacity(k_sel),
            reference_rewards: Vec::with_capacity(k_sel),
            intrinsic: Vec::with_capacity(k_sel),
            trajectory: Trajectory::new(user),
            tape: SelectionTape::default(),
        };
        let mut prefix_sum = 0.0;
        for t in 0..k_sel {
            let (state, enc_tape, window_start) = if t == 0 {
                (tokens[0].clone(), None, 0)
            } else {
                let (s, et) = self.advance_state(&tokens)?;
                (s, Some(et), tokens.len().saturating_sub(self.config.window))
            };
            let (logits, actor_tape) = self.actor.forward(&state)?;
            let (critic, critic_tape) = self.critic.forward(&state)?;
            let sample = softmax_policy(&logits, &mask, self.config.temperature, rng)?;
            mask[sample.action] = false;
            let chosen = ep.pool[sample.action];
            let p_chosen = matrix.row(chosen);
            let prior: Vec<&[f64]> = ep.selected.iter().map(|&v| matrix.row(v)).collect();
            let gains = GainPair { sim: safe_similarity(p_u, p_chosen)?, div: safe_diversity(p_chosen, &prior)? };
            let r_ref = matrix.get(chosen, item);
            prefix_sum += r_ref;
            let reward = intrinsic_reward(prefix_sum / (t + 1) as f64, gains, coeffs);
            ep.trajectory.transitions.push(Transition {
                state,
                action: sample.action,
                logprob: sample.logprob,
                probs: sample.probs,
                temperature: self.config.temperature,
                reward,
                critic,
                components: None,
                done: t + 1 == k_sel,
                reason: None,
            });
            tape.steps.push(StepTape { window_start, encoder: enc_tape, actor: actor_tape, critic: critic_tape });
            ep.selected.push(chosen);
            ep.gains.push(gains);
            ep.reference_rewards.push(r_ref);
            ep.intrinsic.push(reward);
            if t + 1 < k_sel {
                let input = self.token_input(s_rec, p_chosen)?;
                tokens.push(self.projection.forward(&input));
                tape.inputs.push(input);
            }
        }
        ep.tape = tape;
        Ok(ep)
    }

    /// Accumulates parameter gradients given per-step gradients w.r.t. the
    /// actor logits and critic outputs.
    pub fn backward(
        &mut self,
        tape: &SelectionTape,
        d_logits: &[Vec<f64>],
        d_critic: &[Vec<f64>],
    ) -> Result<(), SelectorError> {
        if d_logits.len() != tape.steps.len() || d_critic.len() != tape.steps.len() {
            return Err(NnError::StaleTape.into());
        }
        let width = self.state_width();
        let mut d_tokens = vec![vec![0.0; width]; tape.inputs.len()];
        for (step, (dl, dc)) in tape.steps.iter().zip(d_logits.iter().zip(d_critic)) {
            let mut d_state = self.actor.backward(&step.actor, dl)?;
            add_into(&mut d_state, &self.critic.backward(&step.critic, dc)?);
            match &step.encoder {
                None => add_into(&mut d_tokens[0], &d_state),
                Some(et) => {
                    for (j, g) in self.encoder.backward(et, &d_state)?.iter().enumerate() {
                        add_into(&mut d_tokens[step.window_start + j], g);
                    }
                }
            }
        }
        for (input, d) in tape.inputs.iter().zip(&d_tokens) {
            self.projection.backward(input, d);
        }
        Ok(())
    }
}

impl Parameterized for SelectorAgent {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.projection.visit(f);
        self.encoder.visit(f);
        self.actor.visit(f);
        self.critic.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.projection.visit_mut(f);
        self.encoder.visit_mut(f);
        self.actor.visit_mut(f);
        self.critic.visit_mut(f);
    }
}
