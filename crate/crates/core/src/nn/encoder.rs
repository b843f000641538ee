//! Windowed causal self-attention encoder (pre-norm transformer blocks).
//!
//! Sequences shorter than the window are right-aligned onto the positional
//! table: the last token always receives the last positional offset. The
//! encoding of a sequence is the output row of its last token, so the final
//! block only evaluates the query, attention output and feed-forward for that
//! row.

use super::layers::{add_into, dot, LayerNorm, LayerNormCache, Linear};
use super::param::{ParamBlock, Parameterized};
use super::NnError;

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub ln_ff: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl Parameterized for EncoderBlock {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.ln_attn.visit(f);
        self.query.visit(f);
        self.key.visit(f);
        self.value.visit(f);
        self.out.visit(f);
        self.ln_ff.visit(f);
        self.ff_in.visit(f);
        self.ff_out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.ln_attn.visit_mut(f);
        self.query.visit_mut(f);
        self.key.visit_mut(f);
        self.value.visit_mut(f);
        self.out.visit_mut(f);
        self.ln_ff.visit_mut(f);
        self.ff_in.visit_mut(f);
        self.ff_out.visit_mut(f);
    }
}

#[derive(Clone, Debug)]
pub struct SeqEncoder {
    pub width: usize,
    pub heads: usize,
    pub window: usize,
    pub positions: ParamBlock,
    pub blocks: Vec<EncoderBlock>,
}

#[derive(Clone, Debug)]
struct BlockTape {
    /// First row whose output is evaluated in this block.
    start: usize,
    ln_attn: Vec<LayerNormCache>,
    normed: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    /// Rows `start..n` only.
    queries: Vec<Vec<f64>>,
    /// `probs[row - start][head]` has `row + 1` entries.
    probs: Vec<Vec<Vec<f64>>>,
    mixed: Vec<Vec<f64>>,
    ln_ff: Vec<LayerNormCache>,
    ff_normed: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct EncoderTape {
    len: usize,
    blocks: Vec<BlockTape>,
}

impl EncoderTape {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Attention distributions of `block` for the evaluated rows, indexed
    /// `[row][head][key]`.
    pub fn attention(&self, block: usize) -> &[Vec<Vec<f64>>] {
        &self.blocks[block].probs
    }
}

impl SeqEncoder {
    pub fn new(name: &str, width: usize, heads: usize, layers: usize, window: usize, seed: u64) -> Self {
        assert!(heads >= 1 && width % heads == 0, "width must be divisible by heads");
        assert!(window >= 1 && layers >= 1);
        let ff = 2 * width;
        let blocks = (0..layers)
            .map(|l| {
                let p = format!("{name}.b{l}");
                EncoderBlock {
                    ln_attn: LayerNorm::new(&format!("{p}.ln_attn"), width),
                    query: Linear::new(&format!("{p}.query"), width, width, seed),
                    key: Linear::new(&format!("{p}.key"), width, width, seed),
                    value: Linear::new(&format!("{p}.value"), width, width, seed),
                    out: Linear::new(&format!("{p}.out"), width, width, seed),
                    ln_ff: LayerNorm::new(&format!("{p}.ln_ff"), width),
                    ff_in: Linear::new(&format!("{p}.ff_in"), width, ff, seed),
                    ff_out: Linear::new(&format!("{p}.ff_out"), ff, width, seed),
                }
            })
            .collect();
        let mut positions = ParamBlock::glorot(format!("{name}.positions"), &[window, width], window, width, seed);
        positions.values.iter_mut().for_each(|v| *v *= 0.1);
        Self { width, heads, window, positions, blocks }
    }

    /// Zeroes the value/output projections and the feed-forward output so each
    /// block reduces to its residual path.
    pub fn zero_residual_branches(&mut self) {
        for b in &mut self.blocks {
            b.value.set_zero();
            b.out.set_zero();
            b.ff_out.set_zero();
        }
    }

    fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn encode(&self, tokens: &[Vec<f64>]) -> Result<(Vec<f64>, EncoderTape), NnError> {
        let n = tokens.len();
        if n == 0 {
            return Err(NnError::EmptySequence);
        }
        if n > self.window {
            return Err(NnError::WindowOverflow { window: self.window, found: n });
        }
        if let Some(bad) = tokens.iter().find(|t| t.len() != self.width) {
            return Err(NnError::ShapeMismatch { expected: self.width, found: bad.len() });
        }
        let offset = self.window - n;
        let mut rows: Vec<Vec<f64>> = tokens
            .iter()
            .enumerate()
            .map(|(j, t)| t.iter().zip(self.positions.row(offset + j)).map(|(a, b)| a + b).collect())
            .collect();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter().enumerate() {
            let start = if l + 1 == self.blocks.len() { n - 1 } else { 0 };
            let (normed, ln_attn): (Vec<_>, Vec<_>) = rows.iter().map(|r| block.ln_attn.forward(r)).unzip();
            let keys: Vec<Vec<f64>> = normed.iter().map(|h| block.key.forward(h)).collect();
            let values: Vec<Vec<f64>> = normed.iter().map(|h| block.value.forward(h)).collect();
            let mut tape = BlockTape {
                start,
                ln_attn,
                normed,
                keys,
                values,
                queries: Vec::new(),
                probs: Vec::new(),
                mixed: Vec::new(),
                ln_ff: Vec::new(),
                ff_normed: Vec::new(),
                hidden: Vec::new(),
            };
            let mut next_rows = Vec::with_capacity(n - start);
            for i in start..n {
                let q = block.query.forward(&tape.normed[i]);
                let mut mixed = vec![0.0; self.width];
                let mut head_probs = Vec::with_capacity(self.heads);
                for h in 0..self.heads {
                    let cols = h * dh..(h + 1) * dh;
                    let scores: Vec<f64> =
                        (0..=i).map(|j| dot(&q[cols.clone()], &tape.keys[j][cols.clone()]) * scale).collect();
                    let p = softmax(&scores);
                    for (j, &pj) in p.iter().enumerate() {
                        for c in cols.clone() {
                            mixed[c] += pj * tape.values[j][c];
                        }
                    }
                    head_probs.push(p);
                }
                let attn_out = block.out.forward(&mixed);
                let mut x1: Vec<f64> = rows[i].clone();
                add_into(&mut x1, &attn_out);
                let (h2, c2) = block.ln_ff.forward(&x1);
                let hidden: Vec<f64> = block.ff_in.forward(&h2).into_iter().map(f64::tanh).collect();
                let ff = block.ff_out.forward(&hidden);
                add_into(&mut x1, &ff);
                next_rows.push(x1);
                tape.queries.push(q);
                tape.probs.push(head_probs);
                tape.mixed.push(mixed);
                tape.ln_ff.push(c2);
                tape.ff_normed.push(h2);
                tape.hidden.push(hidden);
            }
            tapes.push(tape);
            rows = next_rows;
        }
        let out = rows.pop().expect("encoder produced no rows");
        Ok((out, EncoderTape { len: n, blocks: tapes }))
    }

    /// Backpropagates `d_out` (gradient w.r.t. the encoding) and returns the
    /// gradient w.r.t. each input token, in input order.
    pub fn backward(&mut self, tape: &EncoderTape, d_out: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        if tape.blocks.len() != self.blocks.len() || d_out.len() != self.width {
            return Err(NnError::StaleTape);
        }
        let n = tape.len;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        // Gradient w.r.t. the outputs of the current block, rows start..n.
        let mut d_rows: Vec<Vec<f64>> = vec![d_out.to_vec()];
        for l in (0..self.blocks.len()).rev() {
            let bt = &tape.blocks[l];
            let block = &mut self.blocks[l];
            let start = bt.start;
            let mut d_in = vec![vec![0.0; self.width]; n];
            let mut d_keys = vec![vec![0.0; self.width]; n];
            let mut d_values = vec![vec![0.0; self.width]; n];
            let mut d_queries = Vec::with_capacity(n - start);
            for (r, dx2) in d_rows.iter().enumerate() {
                let i = start + r;
                // Feed-forward residual branch.
                let d_hidden = block.ff_out.backward(&bt.hidden[r], dx2);
                let d_pre: Vec<f64> = d_hidden.iter().zip(&bt.hidden[r]).map(|(g, a)| g * (1.0 - a * a)).collect();
                let d_h2 = block.ff_in.backward(&bt.ff_normed[r], &d_pre);
                let mut dx1 = dx2.clone();
                add_into(&mut dx1, &block.ln_ff.backward(&bt.ln_ff[r], &d_h2));
                // Attention residual branch.
                add_into(&mut d_in[i], &dx1);
                let d_mixed = block.out.backward(&bt.mixed[r], &dx1);
                let mut dq = vec![0.0; self.width];
                for h in 0..self.heads {
                    let cols = h * dh..(h + 1) * dh;
                    let p = &bt.probs[r][h];
                    let dp: Vec<f64> =
                        (0..=i).map(|j| dot(&d_mixed[cols.clone()], &bt.values[j][cols.clone()])).collect();
                    let weighted: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        let ds = p[j] * (dp[j] - weighted) * scale;
                        for c in cols.clone() {
                            d_values[j][c] += p[j] * d_mixed[c];
                            dq[c] += ds * bt.keys[j][c];
                            d_keys[j][c] += ds * bt.queries[r][c];
                        }
                    }
                }
                d_queries.push(dq);
            }
            for j in 0..n {
                let mut d_normed = block.key.backward(&bt.normed[j], &d_keys[j]);
                add_into(&mut d_normed, &block.value.backward(&bt.normed[j], &d_values[j]));
                if j >= start {
                    add_into(&mut d_normed, &block.query.backward(&bt.normed[j], &d_queries[j - start]));
                }
                add_into(&mut d_in[j], &block.ln_attn.backward(&bt.ln_attn[j], &d_normed));
            }
            d_rows = d_in;
        }
        let offset = self.window - n;
        for (j, d) in d_rows.iter().enumerate() {
            add_into(self.positions.grad_row_mut(offset + j), d);
        }
        Ok(d_rows)
    }
}

impl Parameterized for SeqEncoder {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.positions);
        self.blocks.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.positions);
        self.blocks.visit_mut(f);
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_param_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tokens(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn residual_only_single_token_adds_last_position() {
        let mut enc = SeqEncoder::new("e", 4, 2, 1, 3, 1);
        enc.zero_residual_branches();
        let tok = vec![0.3, -0.2, 1.0, 0.5];
        let (s, _) = enc.encode(&[tok.clone()]).unwrap();
        for k in 0..4 {
            assert!((s[k] - (tok[k] + enc.positions.row(2)[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_and_oversized_inputs_are_errors() {
        let enc = SeqEncoder::new("e", 4, 1, 1, 2, 1);
        assert!(matches!(enc.encode(&[]), Err(NnError::EmptySequence)));
        let toks = vec![vec![0.0; 4]; 3];
        assert!(matches!(enc.encode(&toks), Err(NnError::WindowOverflow { .. })));
    }

    #[test]
    fn attention_rows_are_distributions() {
        let enc = SeqEncoder::new("e", 6, 3, 2, 5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, tape) = enc.encode(&random_tokens(&mut rng, 5, 6)).unwrap();
        for b in 0..2 {
            for row in tape.attention(b) {
                for head in row {
                    assert!(head.iter().all(|&p| p >= 0.0));
                    assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ordering_of_earlier_tokens_matters() {
        let enc = SeqEncoder::new("e", 4, 1, 1, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tokens(&mut rng, 3, 4);
        let (a, _) = enc.encode(&t).unwrap();
        let (b, _) = enc.encode(&[t[1].clone(), t[0].clone(), t[2].clone()]).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let enc = SeqEncoder::new("e", 4, 2, 2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tokens(&mut rng, 4, 4);
        assert_eq!(enc.encode(&t).unwrap().0, enc.encode(&t).unwrap().0);
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let layers = 1 + (seed % 2) as usize;
            let heads = if seed % 3 == 0 { 2 } else { 1 };
            let mut enc = SeqEncoder::new("e", 4, heads, layers, 3, seed);
            // Non-trivial layer-norm parameters exercise every path.
            enc.visit_mut(&mut |b| {
                if b.name.contains("ln_") {
                    b.values.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
                }
            });
            let n = 1 + (seed % 3) as usize;
            let tokens = random_tokens(&mut rng, n, 4);
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let report = check_param_gradients(
                &mut enc,
                |e| {
                    let (_, tape) = e.encode(&tokens).unwrap();
                    e.backward(&tape, &w).unwrap();
                },
                |e| dot(&e.encode(&tokens).unwrap().0, &w),
            );
            assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");

            let (_, tape) = enc.encode(&tokens).unwrap();
            let d_tokens = enc.backward(&tape, &w).unwrap();
            for t in 0..n {
                for k in 0..4 {
                    let mut plus = tokens.clone();
                    plus[t][k] += 1e-5;
                    let mut minus = tokens.clone();
                    minus[t][k] -= 1e-5;
                    let numeric = (dot(&enc.encode(&plus).unwrap().0, &w) - dot(&enc.encode(&minus).unwrap().0, &w)) / 2e-5;
                    let err = crate::nn::gradcheck::rel_error(d_tokens[t][k], numeric);
                    assert!(err < 1e-4, "seed {seed} token {t}/{k}: {err}");
                }
            }
        }
    }
}
