use serde::{Deserialize, Serialize};

use super::param::{ParamBlock, Parameterized};
use super::NnError;

/// Affine map `y = W x + b` with `W` stored row-major as `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamBlock,
    pub bias: ParamBlock,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, seed: u64) -> Self {
        Self {
            weight: ParamBlock::glorot(format!("{name}.weight"), &[out_dim, in_dim], in_dim, out_dim, seed),
            bias: ParamBlock::zeros(format!("{name}.bias"), &[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim());
        let n_in = self.in_dim();
        self.weight
            .values
            .chunks_exact(n_in)
            .zip(&self.bias.values)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy` and returns `Wᵀ dy`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let n_in = self.in_dim();
        let mut dx = vec![0.0; n_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias.grad[o] += g;
            let row = &self.weight.values[o * n_in..(o + 1) * n_in];
            let grow = &mut self.weight.grad[o * n_in..(o + 1) * n_in];
            for j in 0..n_in {
                grow[j] += g * x[j];
                dx[j] += g * row[j];
            }
        }
        dx
    }

    /// Sets `W` to the (rectangular) identity and `b` to zero.
    pub fn set_identity(&mut self) {
        let n_in = self.in_dim();
        self.weight.values.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.out_dim().min(n_in) {
            self.weight.values[k * n_in + k] = 1.0;
        }
        self.bias.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn set_zero(&mut self) {
        self.weight.values.iter_mut().for_each(|v| *v = 0.0);
        self.bias.values.iter_mut().for_each(|v| *v = 0.0);
    }
}

impl Parameterized for Linear {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Multi-layer perceptron; the activation is applied to hidden layers only.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Everything `Mlp::backward` needs from a forward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    widths: Vec<usize>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(name: &str, widths: &[usize], activation: Activation, seed: u64) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Linear::new(&format!("{name}.l{k}"), w[0], w[1], seed))
            .collect();
        Self { layers, activation }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim()];
        w.extend(self.layers.iter().map(Linear::out_dim));
        w
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(Linear::out_dim).unwrap_or(0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape), NnError> {
        if x.len() != self.in_dim() {
            return Err(NnError::ShapeMismatch { expected: self.in_dim(), found: x.len() });
        }
        let last = self.layers.len() - 1;
        let mut tape = MlpTape { widths: self.widths(), ..Default::default() };
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            tape.inputs.push(std::mem::take(&mut h));
            if k == last {
                h = z;
            } else {
                h = z.iter().map(|&v| self.activation.apply(v)).collect();
                tape.pre.push(z);
            }
        }
        Ok((h, tape))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn backward(&mut self, tape: &MlpTape, dy: &[f64]) -> Result<Vec<f64>, NnError> {
        if tape.widths != self.widths() || dy.len() != self.out_dim() {
            return Err(NnError::StaleTape);
        }
        let mut grad = dy.to_vec();
        for k in (0..self.layers.len()).rev() {
            if k < self.layers.len() - 1 {
                for (g, &z) in grad.iter_mut().zip(&tape.pre[k]) {
                    *g *= self.activation.derivative(z);
                }
            }
            grad = self.layers[k].backward(&tape.inputs[k], &grad);
        }
        Ok(grad)
    }
}

impl Parameterized for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.layers.visit(f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.layers.visit_mut(f)
    }
}

const LN_EPS: f64 = 1e-5;

/// Per-vector layer normalisation with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamBlock,
    pub bias: ParamBlock,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gain = ParamBlock::zeros(format!("{name}.gain"), &[dim]);
        gain.values.iter_mut().for_each(|g| *g = 1.0);
        Self { gain, bias: ParamBlock::zeros(format!("{name}.bias"), &[dim]) }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let y = xhat
            .iter()
            .zip(self.gain.values.iter().zip(&self.bias.values))
            .map(|(h, (g, b))| h * g + b)
            .collect();
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &[f64]) -> Vec<f64> {
        let n = dy.len() as f64;
        let mut dxhat = vec![0.0; dy.len()];
        for k in 0..dy.len() {
            self.gain.grad[k] += dy[k] * cache.xhat[k];
            self.bias.grad[k] += dy[k];
            dxhat[k] = dy[k] * self.gain.values[k];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(&cache.xhat).map(|(d, h)| d * h).sum::<f64>() / n;
        dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(d, h)| cache.inv_std * (d - mean_d - h * mean_dx))
            .collect()
    }
}

impl Parameterized for LayerNorm {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.gain);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.gain);
        f(&mut self.bias);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_gradient, check_param_gradients};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear_passes_input_through() {
        let mut mlp = Mlp::new("m", &[2, 2], Activation::Tanh, 0);
        mlp.layers[0].set_identity();
        assert_eq!(mlp.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut mlp = Mlp::new("m", &[3, 4, 2], Activation::Tanh, 5);
        mlp.layers.iter_mut().for_each(Linear::set_zero);
        assert_eq!(mlp.predict(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn seeded_forward_matches_hand_evaluation() {
        let mlp = Mlp::new("m", &[2, 3, 1], Activation::Tanh, 3);
        let x = [0.5, -0.5];
        // Independent evaluation straight from the stored weights.
        let w0 = &mlp.layers[0].weight.values;
        let b0 = &mlp.layers[0].bias.values;
        let w1 = &mlp.layers[1].weight.values;
        let b1 = &mlp.layers[1].bias.values;
        let mut expected = b1[0];
        for h in 0..3 {
            let pre = w0[2 * h] * x[0] + w0[2 * h + 1] * x[1] + b0[h];
            expected += w1[h] * pre.tanh();
        }
        let y = mlp.predict(&x).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mlp = Mlp::new("m", &[3, 2], Activation::Tanh, 0);
        assert!(matches!(mlp.forward(&[1.0]), Err(NnError::ShapeMismatch { expected: 3, found: 1 })));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let a = Mlp::new("a", &[3, 2], Activation::Tanh, 0);
        let mut b = Mlp::new("b", &[3, 4, 2], Activation::Tanh, 0);
        let (_, tape) = a.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(b.backward(&tape, &[1.0, 1.0]), Err(NnError::StaleTape)));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut mlp = Mlp::new("m", &[3, 5, 2], Activation::Tanh, 1);
        let (_, tape) = mlp.forward(&[0.1, 0.2, 0.3]).unwrap();
        let dx = mlp.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(dx.iter().all(|&g| g == 0.0));
        assert!(mlp.flat_grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_weight_grad_is_outer_product() {
        let mut lin = Linear::new("l", 2, 2, 9);
        let x = [1.5, -2.0];
        let dy = [0.3, 0.7];
        lin.backward(&x, &dy);
        let expected = [0.45, -0.6, 1.05, -1.4];
        for (g, e) in lin.weight.grad.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
        assert_eq!(lin.bias.grad, vec![0.3, 0.7]);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mlp = Mlp::new("m", &[4, 6, 3], Activation::Tanh, seed);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |m: &Mlp, x: &[f64]| dot(&m.predict(x).unwrap(), &w);
            let report = check_param_gradients(
                &mut mlp,
                |m| {
                    let (_, tape) = m.forward(&x).unwrap();
                    m.backward(&tape, &w).unwrap();
                },
                |m| loss(m, &x),
            );
            assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
            let (_, tape) = mlp.forward(&x).unwrap();
            let dx = mlp.backward(&tape, &w).unwrap();
            let err = check_input_gradient(&x, &dx, |xi| loss(&mlp, xi));
            assert!(err < 1e-4, "seed {seed}: input grad err {err}");
        }
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        let mut ln = LayerNorm::new("ln", 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        ln.gain.values.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
        ln.bias.values.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = check_param_gradients(
            &mut ln,
            |m| {
                let (_, c) = m.forward(&x);
                m.backward(&c, &w);
            },
            |m| dot(&m.forward(&x).0, &w),
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        let (_, c) = ln.forward(&x);
        let dx = ln.backward(&c, &w);
        assert!(check_input_gradient(&x, &dx, |xi| dot(&ln.forward(xi).0, &w)) < 1e-4);
    }
}
