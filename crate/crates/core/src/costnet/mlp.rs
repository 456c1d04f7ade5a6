//! Small fully-connected network with ReLU hidden layers, a linear output,
//! and a hand-written reverse pass. Shared by the cost head and the critic.

use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Layer<T: Real> {
    /// out x in
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
}

/// Feed-forward network; `sizes = [input, hidden.., output]`, hidden layers
/// use ReLU, the output layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp<T: Real> {
    pub layers: Vec<Layer<T>>,
    sizes: Vec<usize>,
}

/// Forward activations retained for the reverse pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    /// input to each layer (the network input, then each hidden activation)
    inputs: Vec<DVector<T>>,
    /// pre-activation of each hidden layer, for the ReLU mask
    pre: Vec<DVector<T>>,
}

impl<T: Real> Mlp<T> {
    /// Weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                        T::of(rng.gen_range(-scale..scale))
                    }),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self {
            layers,
            sizes: sizes.to_vec(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &DVector<T>) -> DVector<T> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &DVector<T>) -> (DVector<T>, MlpCache<T>) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        self.forward_cached_tail(0, x.clone())
    }

    /// Forward through layers `start..`, treating `act` as the input of
    /// layer `start`. The cache is indexed relative to `start`.
    pub fn forward_cached_tail(&self, start: usize, mut act: DVector<T>) -> (DVector<T>, MlpCache<T>) {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n - start);
        let mut pre = Vec::with_capacity(n - start);
        for (li, layer) in self.layers.iter().enumerate().skip(start) {
            inputs.push(act.clone());
            let z = &layer.weights * &act + &layer.bias;
            if li + 1 < n {
                pre.push(z.clone());
                act = z.map(|v| if v > T::zero() { v } else { T::zero() });
            } else {
                act = z;
            }
        }
        (act, MlpCache { inputs, pre })
    }

    /// Flat-parameter offset of each layer's block.
    pub fn layer_offset(&self, layer: usize) -> usize {
        self.layers[..layer]
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Reverse pass: accumulates parameter gradients into `grad_flat`
    /// (layout matching [`Mlp::flat_params`]) and returns the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        grad_output: &DVector<T>,
        grad_flat: &mut [T],
    ) -> DVector<T> {
        self.backward_tail(0, cache, grad_output, grad_flat)
    }

    /// Reverse pass through layers `start..` with a tail cache from
    /// [`Mlp::forward_cached_tail`]; returns the gradient with respect to
    /// layer `start`'s input.
    pub fn backward_tail(
        &self,
        start: usize,
        cache: &MlpCache<T>,
        grad_output: &DVector<T>,
        grad_flat: &mut [T],
    ) -> DVector<T> {
        assert_eq!(grad_flat.len(), self.param_count());
        let n = self.layers.len();
        let mut delta = grad_output.clone();
        for li in (start..n).rev() {
            let layer = &self.layers[li];
            if li + 1 < n {
                // mask through the ReLU that followed this layer
                let z = &cache.pre[li - start];
                for i in 0..delta.len() {
                    if z[i] <= T::zero() {
                        delta[i] = T::zero();
                    }
                }
            }
            let input = &cache.inputs[li - start];
            let base = self.layer_offset(li);
            let (rows, cols) = (layer.weights.nrows(), layer.weights.ncols());
            for r in 0..rows {
                let d = delta[r];
                if d != T::zero() {
                    let row_base = base + r * cols;
                    for c in 0..cols {
                        grad_flat[row_base + c] += d * input[c];
                    }
                }
                grad_flat[base + rows * cols + r] += d;
            }
            delta = layer.weights.transpose() * delta;
        }
        delta
    }

    /// Row-major weights then bias, layer by layer.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    out.push(l.weights[(r, c)]);
                }
            }
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.param_count());
        let mut i = 0;
        for l in &mut self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    l.weights[(r, c)] = params[i];
                    i += 1;
                }
            }
            for r in 0..l.bias.len() {
                l.bias[r] = params[i];
                i += 1;
            }
        }
    }

    /// Snaps every parameter to its nearest f32-representable value so the
    /// 32-bit checkpoint format round-trips bit-exactly.
    pub fn quantize_to_f32(&mut self) {
        let q = |v: &mut T| *v = T::of(v.to_f64_lossy() as f32 as f64);
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(q);
            l.bias.iter_mut().for_each(q);
        }
    }
}

/// Numerically stable logistic function and its derivative.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn sigmoid_derivative<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() - s)
}

/// First-moment/second-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    t: usize,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Adam<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t as i32);
        let b2t = T::one() - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    pub fn state(&self) -> (Vec<T>, Vec<T>, usize) {
        (self.m.clone(), self.v.clone(), self.t)
    }

    pub fn restore(&mut self, m: Vec<T>, v: Vec<T>, t: usize) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }
}

/// Scales `grad` in place so its Euclidean norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm<T: Real>(grad: &mut [T], max_norm: T) -> T {
    let norm = grad.iter().map(|g| *g * *g).sum::<T>().sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
