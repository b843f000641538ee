use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::nn::{Activation, Mlp, ParamBlock, Parameterized};

/// Bound on |log σ²|; the raw head output passes through a scaled tanh.
const LOGVAR_BOUND: f64 = 6.0;

/// Categorical fields fed to the model, in order: user id, user features,
/// item id, item category, item features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub names: Vec<String>,
    pub vocab: Vec<usize>,
}

impl FieldLayout {
    pub fn from_dataset(d: &Dataset) -> Self {
        let mut names = vec!["user_id".to_string()];
        let mut vocab = vec![d.n_users()];
        for (f, v) in d.users.feature_vocab.iter().enumerate() {
            names.push(format!("user_feat_{f}"));
            vocab.push(*v);
        }
        names.push("item_id".into());
        vocab.push(d.n_items());
        names.push("item_category".into());
        vocab.push(d.items.n_categories);
        for (f, v) in d.items.feature_vocab.iter().enumerate() {
            names.push(format!("item_feat_{f}"));
            vocab.push(*v);
        }
        Self { names, vocab }
    }

    pub fn fields(&self, d: &Dataset, user: usize, item: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.vocab.len());
        out.push(user);
        out.extend_from_slice(&d.users.features[user]);
        out.push(item);
        out.push(d.items.primary_category[item]);
        out.extend_from_slice(&d.items.features[item]);
        out
    }
}

/// One ensemble member: per-field embeddings, a pairwise-interaction term and
/// an MLP over the concatenated embeddings producing (μ, log σ²).
#[derive(Clone, Debug)]
pub struct WorldModelMember {
    pub tables: Vec<ParamBlock>,
    pub bias: ParamBlock,
    pub head: Mlp,
    embed_dim: usize,
}

impl WorldModelMember {
    pub fn new(name: &str, layout: &FieldLayout, embed_dim: usize, hidden: usize, seed: u64) -> Self {
        let tables = layout
            .names
            .iter()
            .zip(&layout.vocab)
            .map(|(n, &v)| ParamBlock::glorot(format!("{name}.emb.{n}"), &[v, embed_dim], v, embed_dim, seed))
            .collect();
        let width = layout.vocab.len() * embed_dim;
        Self {
            tables,
            bias: ParamBlock::zeros(format!("{name}.bias"), &[1]),
            head: Mlp::new(&format!("{name}.head"), &[width, hidden, 2], Activation::Tanh, seed),
            embed_dim,
        }
    }

    fn embed(&self, fields: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
        let d = self.embed_dim;
        let mut concat = Vec::with_capacity(fields.len() * d);
        let mut sum = vec![0.0; d];
        let mut sq = 0.0;
        for (table, &id) in self.tables.iter().zip(fields) {
            let row = table.row(id);
            concat.extend_from_slice(row);
            for k in 0..d {
                sum[k] += row[k];
                sq += row[k] * row[k];
            }
        }
        let pairwise = 0.5 * (sum.iter().map(|s| s * s).sum::<f64>() - sq);
        (concat, sum, pairwise)
    }

    /// Returns (μ, log σ²) without clipping.
    pub fn predict(&self, fields: &[usize]) -> (f64, f64) {
        let (concat, _, pairwise) = self.embed(fields);
        let out = self.head.predict(&concat).expect("layout-consistent input");
        (self.bias.values[0] + pairwise + out[0], LOGVAR_BOUND * (out[1] / LOGVAR_BOUND).tanh())
    }

    /// Adds `scale ×` the NLL gradient for one record and returns its NLL.
    pub fn accumulate_nll(&mut self, fields: &[usize], target: f64, scale: f64) -> f64 {
        let (concat, sum, pairwise) = self.embed(fields);
        let (out, tape) = self.head.forward(&concat).expect("layout-consistent input");
        let mu = self.bias.values[0] + pairwise + out[0];
        let squashed = (out[1] / LOGVAR_BOUND).tanh();
        let logvar = LOGVAR_BOUND * squashed;
        let inv_var = (-logvar).exp();
        let resid = target - mu;
        let nll = 0.5 * (logvar + resid * resid * inv_var);

        let d_mu = -resid * inv_var * scale;
        let d_logvar = 0.5 * (1.0 - resid * resid * inv_var) * scale;
        let d_raw = d_logvar * (1.0 - squashed * squashed);
        let d_concat = self.head.backward(&tape, &[d_mu, d_raw]).expect("tape from this head");
        self.bias.grad[0] += d_mu;
        let d = self.embed_dim;
        for (f, &id) in fields.iter().enumerate() {
            let row: Vec<f64> = self.tables[f].row(id).to_vec();
            let grad = self.tables[f].grad_row_mut(id);
            for k in 0..d {
                grad[k] += d_concat[f * d + k] + d_mu * (sum[k] - row[k]);
            }
        }
        nll
    }
}

impl Parameterized for WorldModelMember {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.tables.visit(f);
        f(&self.bias);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.tables.visit_mut(f);
        f(&mut self.bias);
        self.head.visit_mut(f);
    }
}
