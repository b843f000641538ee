//! The recommender agent: tracks the episode as a window of
//! `(user, item, reward)` tokens, and scores every item with its actor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::a2c::CriticForm;
use crate::nn::layers::add_into;
use crate::nn::{
    greedy_action, masked_softmax, softmax_policy, Activation, EncoderTape, Linear, Mlp, MlpTape, NnError, ParamBlock,
    Parameterized, SeqEncoder,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecommenderConfig {
    pub d_rec: usize,
    pub d_embed: usize,
    pub window: usize,
    pub heads: usize,
    pub layers: usize,
    pub hidden: usize,
    pub temperature: f64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self { d_rec: 32, d_embed: 16, window: 5, heads: 1, layers: 1, hidden: 32, temperature: 1.0 }
    }
}

/// Projection input of one token; `item` is `None` for the start token.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenRecord {
    pub item: Option<usize>,
    pub input: Vec<f64>,
}

/// Episode state: every token seen so far, the retained window and its
/// encoding.
#[derive(Clone, Debug)]
pub struct RecState {
    pub user: usize,
    pub records: Vec<TokenRecord>,
    /// Projected tokens still inside the window (at most `w_rec`).
    pub history: Vec<Vec<f64>>,
    pub vector: Vec<f64>,
    pub tape: EncoderTape,
}

impl RecState {
    /// Index (into `records`) of the oldest token in the window.
    pub fn window_start(&self) -> usize {
        self.records.len() - self.history.len()
    }
}

/// One policy decision plus what backpropagation needs.
#[derive(Clone, Debug)]
pub struct RecDecision {
    pub item: usize,
    pub logprob: f64,
    pub probs: Vec<f64>,
    pub critic: Vec<f64>,
    pub actor_tape: MlpTape,
    pub critic_tape: MlpTape,
}

#[derive(Clone, Debug)]
pub struct RecStepTape {
    pub window_start: usize,
    pub encoder: EncoderTape,
    pub actor: MlpTape,
    pub critic: MlpTape,
}

#[derive(Clone, Debug)]
pub struct RecEpisodeTape {
    pub user: usize,
    pub records: Vec<TokenRecord>,
    pub steps: Vec<RecStepTape>,
}

#[derive(Clone, Debug)]
pub struct RecommenderAgent {
    pub config: RecommenderConfig,
    pub critic_form: CriticForm,
    pub user_emb: ParamBlock,
    pub item_emb: ParamBlock,
    pub token_proj: Linear,
    pub encoder: SeqEncoder,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl RecommenderAgent {
    pub fn new(config: &RecommenderConfig, n_users: usize, n_items: usize, critic_form: CriticForm, seed: u64) -> Self {
        let (de, dr) = (config.d_embed, config.d_rec);
        Self {
            config: config.clone(),
            critic_form,
            user_emb: ParamBlock::glorot("rec.user_emb", &[n_users, de], n_users, de, seed),
            item_emb: ParamBlock::glorot("rec.item_emb", &[n_items, de], n_items, de, seed),
            token_proj: Linear::new("rec.token_proj", 2 * de + 1, dr, seed),
            encoder: SeqEncoder::new("rec.encoder", dr, config.heads, config.layers, config.window, seed),
            actor: Mlp::new("rec.actor", &[dr, config.hidden, n_items], Activation::Tanh, seed),
            critic: Mlp::new("rec.critic", &[dr, config.hidden, critic_form.outputs(n_items)], Activation::Tanh, seed),
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_emb.shape[0]
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.shape[0]
    }

    fn token_input(&self, user: usize, item: Option<usize>, reward: f64) -> TokenRecord {
        let de = self.config.d_embed;
        let mut input = self.user_emb.row(user).to_vec();
        match item {
            Some(i) => input.extend_from_slice(self.item_emb.row(i)),
            None => input.extend(std::iter::repeat(0.0).take(de)),
        }
        input.push(reward);
        TokenRecord { item, input }
    }

    fn encode(&self, state: &mut RecState) -> Result<(), NnError> {
        let (v, tape) = self.encoder.encode(&state.history)?;
        state.vector = v;
        state.tape = tape;
        Ok(())
    }

    /// Start state: a single token `proj(e_u ⊕ 0 ⊕ [0])`, encoded.
    pub fn init_episode(&self, user: usize) -> Result<RecState, NnError> {
        if user >= self.n_users() {
            return Err(NnError::ShapeMismatch { expected: self.n_users(), found: user });
        }
        let record = self.token_input(user, None, 0.0);
        let token = self.token_proj.forward(&record.input);
        let mut state =
            RecState { user, records: vec![record], history: vec![token], vector: Vec::new(), tape: EncoderTape::default() };
        self.encode(&mut state)?;
        Ok(state)
    }

    /// Appends the token for `(item, reward)` and re-encodes the window.
    pub fn track(&self, state: &mut RecState, item: usize, reward: f64) -> Result<(), NnError> {
        if item >= self.n_items() {
            return Err(NnError::ShapeMismatch { expected: self.n_items(), found: item });
        }
        let record = self.token_input(state.user, Some(item), reward);
        state.history.push(self.token_proj.forward(&record.input));
        state.records.push(record);
        if state.history.len() > self.config.window {
            state.history.remove(0);
        }
        self.encode(state)
    }

    /// Samples (or, when `greedy`, picks the arg-max) an unmasked item.
    pub fn recommend<R: Rng + ?Sized>(
        &self,
        state: &RecState,
        mask: &[bool],
        greedy: bool,
        rng: &mut R,
    ) -> Result<RecDecision, NnError> {
        let (logits, actor_tape) = self.actor.forward(&state.vector)?;
        let (critic, critic_tape) = self.critic.forward(&state.vector)?;
        let t = self.config.temperature;
        let (item, probs) = if greedy {
            (greedy_action(&logits, mask)?, masked_softmax(&logits, mask, t)?)
        } else {
            let s = softmax_policy(&logits, mask, t, rng)?;
            (s.action, s.probs)
        };
        Ok(RecDecision { item, logprob: probs[item].ln(), probs, critic, actor_tape, critic_tape })
    }

    /// Accumulates gradients for a whole episode from per-step gradients
    /// w.r.t. logits and critic outputs; token gradients reach the
    /// projection and both embedding tables.
    pub fn backward(&mut self, ep: &RecEpisodeTape, d_logits: &[Vec<f64>], d_critic: &[Vec<f64>]) -> Result<(), NnError> {
        if d_logits.len() != ep.steps.len() || d_critic.len() != ep.steps.len() {
            return Err(NnError::StaleTape);
        }
        let mut d_tokens = vec![vec![0.0; self.config.d_rec]; ep.records.len()];
        for (step, (dl, dc)) in ep.steps.iter().zip(d_logits.iter().zip(d_critic)) {
            let mut d_state = self.actor.backward(&step.actor, dl)?;
            add_into(&mut d_state, &self.critic.backward(&step.critic, dc)?);
            for (j, g) in self.encoder.backward(&step.encoder, &d_state)?.iter().enumerate() {
                add_into(&mut d_tokens[step.window_start + j], g);
            }
        }
        let de = self.config.d_embed;
        for (rec, d) in ep.records.iter().zip(&d_tokens) {
            let d_in = self.token_proj.backward(&rec.input, d);
            add_into(self.user_emb.grad_row_mut(ep.user), &d_in[..de]);
            if let Some(i) = rec.item {
                add_into(self.item_emb.grad_row_mut(i), &d_in[de..2 * de]);
            }
        }
        Ok(())
    }
}

impl Parameterized for RecommenderAgent {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.user_emb);
        f(&self.item_emb);
        self.token_proj.visit(f);
        self.encoder.visit(f);
        self.actor.visit(f);
        self.critic.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.user_emb);
        f(&mut self.item_emb);
        self.token_proj.visit_mut(f);
        self.encoder.visit_mut(f);
        self.actor.visit_mut(f);
        self.critic.visit_mut(f);
    }
}
