use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A named, dense block of trainable values with its gradient accumulator
/// and Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl ParamBlock {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; len],
            grad: vec![0.0; len],
            adam_m: vec![0.0; len],
            adam_v: vec![0.0; len],
            step_count: 0,
        }
    }

    /// Glorot-uniform initialisation from a stream derived from `seed` and the
    /// block name, so adding a block never perturbs the others.
    pub fn glorot(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Self {
        let mut block = Self::zeros(name, shape);
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let mut rng = named_rng(seed, &block.name);
        for v in &mut block.values {
            *v = rng.gen_range(-limit..=limit);
        }
        block
    }

    pub fn from_values(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Self {
        let mut block = Self::zeros(name, shape);
        assert_eq!(block.values.len(), values.len(), "value count does not match shape");
        block.values = values;
        block
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Row `r` of a 2-D block.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.values[r * cols..(r + 1) * cols]
    }

    pub fn grad_row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.grad[r * cols..(r + 1) * cols]
    }
}

/// Anything that owns parameter blocks.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |b| b.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |b| n += b.len());
        n
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |b| out.extend_from_slice(&b.values));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |b| out.extend_from_slice(&b.grad));
        out
    }

    /// Adds `delta` to the flat parameter at `index`.
    fn nudge(&mut self, index: usize, delta: f64) {
        let mut offset = 0;
        self.visit_mut(&mut |b| {
            if index >= offset && index < offset + b.len() {
                b.values[index - offset] += delta;
            }
            offset += b.len();
        });
    }
}

impl Parameterized for ParamBlock {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(self)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(self)
    }
}

impl<T: Parameterized> Parameterized for Vec<T> {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.iter().for_each(|p| p.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.iter_mut().for_each(|p| p.visit_mut(f));
    }
}

/// 64-bit FNV-1a, used to derive stable per-name RNG streams.
pub fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}
