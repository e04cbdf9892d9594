//! Dense ReLU networks with exact reverse-mode gradients, Adam, soft target
//! updates, and Gumbel-softmax sampling for discrete actions.
//!
//! Networks work on row-major batches: one sample per row. Weights are stored
//! `out × in`, so a layer computes `z = a · Wᵀ + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Parameter gradients shaped like the network plus the gradient with respect to its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    /// `batch × input_dim`
    pub input: Array2<f64>,
}

impl Gradients {
    /// Euclidean norm over all parameter gradients (input gradient excluded).
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Parameter gradients in the same order as [`Mlp::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(contract("a network needs at least an input and an output layer"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(contract(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::with_rng(sizes, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = glorot_bound(fan_in, fan_out);
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    (rng.random::<f64>() * 2.0 - 1.0) * bound
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() || l.input_dim() == 0 || l.output_dim() == 0 {
                return Err(contract(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(contract(format!("layer {i} input does not match layer {} output", i - 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Dense> {
        self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut a = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &a);
            inputs.push(a);
            a = if i + 1 < self.layers.len() {
                z.mapv(relu)
            } else {
                z.clone()
            };
            preacts.push(z);
        }
        Ok((a, ForwardCache { inputs, preacts }))
    }

    /// Forward pass without retaining intermediates.
    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = affine(&self.layers[0], &input);
        for layer in &self.layers[1..] {
            a.mapv_inplace(relu);
            a = affine(layer, &a);
        }
        Ok(a)
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `Σ_rows output · grad_output` with respect to every
    /// parameter and to the input rows.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(a, l)| a.ncols() != l.input_dim())
        {
            return Err(contract("forward cache does not belong to this network"));
        }
        let batch = cache.batch_size();
        if grad_output.dim() != (batch, self.output_dim()) {
            return Err(contract(format!(
                "grad_output has shape {:?}, expected ({batch}, {})",
                grad_output.dim(),
                self.output_dim()
            )));
        }
        let mut delta = grad_output.to_owned();
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let weight = delta.t().dot(&cache.inputs[i]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            let mut upstream = delta.dot(&layer.weight);
            if i > 0 {
                Zip::from(&mut upstream)
                    .and(&cache.preacts[i - 1])
                    .for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            delta = upstream;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    pub fn backward_single(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients> {
        let g = ArrayView2::from_shape((1, grad_output.len()), grad_output)
            .map_err(|_| contract("grad_output shape"))?;
        self.backward(cache, g)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(contract(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn affine<S: ndarray::Data<Elem = f64>>(layer: &Dense, a: &ndarray::ArrayBase<S, ndarray::Ix2>) -> Array2<f64> {
    let mut z = a.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Half-width of the Glorot-uniform interval.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub timestep: u64,
    pub first_moment: Vec<Dense>,
    pub second_moment: Vec<Dense>,
}

impl Adam {
    pub fn new(params: &Mlp) -> Self {
        let zeros: Vec<Dense> = params
            .layers
            .iter()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            timestep: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        let n = params.layers.len();
        if grads.layers.len() != n
            || self.first_moment.len() != n
            || (0..n).any(|i| {
                !params.layers[i].same_shape(&grads.layers[i])
                    || !params.layers[i].same_shape(&self.first_moment[i])
            })
        {
            return Err(contract("optimizer, parameters and gradients disagree in shape"));
        }
        self.timestep += 1;
        let t = self.timestep as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for i in 0..n {
            let (p, g) = (&mut params.layers[i], &grads.layers[i]);
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            Zip::from(&mut p.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

/// `target ← τ·online + (1−τ)·target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(contract("soft update between networks of different shapes"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(contract(format!("tau must lie in [0, 1], got {tau}")));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = tau * o + keep * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + keep * *t);
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// A standard Gumbel variate, `−ln(−ln u)` with `u` uniform on (0, 1).
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// `softmax((logits + noise) / temperature)`.
pub fn relaxed_sample(logits: &[f64], noise: &[f64], temperature: f64) -> Vec<f64> {
    let z: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    softmax(&z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    /// Indicator of the arg-max of `relaxed`.
    pub hard: Vec<f64>,
    pub relaxed: Vec<f64>,
}

impl GumbelSample {
    pub fn index(&self) -> usize {
        argmax(&self.hard)
    }
}

pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<GumbelSample> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(contract(format!("temperature must be positive, got {temperature}")));
    }
    if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
        return Err(contract("logits must be nonempty and finite"));
    }
    let noise: Vec<f64> = logits.iter().map(|_| sample_gumbel(rng)).collect();
    let relaxed = relaxed_sample(logits, &noise, temperature);
    let hard = one_hot(argmax(&relaxed), logits.len());
    Ok(GumbelSample { hard, relaxed })
}

/// Noise-free evaluation mode: indicator of `argmax(logits)`.
pub fn greedy_one_hot(logits: &[f64]) -> Vec<f64> {
    one_hot(argmax(logits), logits.len())
}

/// Vector-Jacobian product of `p = softmax(z / T)`: returns `∂(p·grad_p)/∂z`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64], temperature: f64) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(grad_p)
        .map(|(&pk, &gk)| pk * (gk - dot) / temperature)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_input(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    /// Central finite differences of `f` at every coordinate of `x`.
    fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut x = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = x[i];
                x[i] = orig + h;
                let up = f(&x);
                x[i] = orig - h;
                let down = f(&x);
                x[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn init_is_deterministic_and_glorot_bounded() {
        let a = Mlp::new(&[4, 64, 1], 9).unwrap();
        assert_eq!(a, Mlp::new(&[4, 64, 1], 9).unwrap());
        assert_ne!(a, Mlp::new(&[4, 64, 1], 10).unwrap());
        assert_eq!(a.layer_sizes(), vec![4, 64, 1]);
        let b0 = (6.0f64 / 68.0).sqrt();
        let b1 = (6.0f64 / 65.0).sqrt();
        assert_eq!(glorot_bound(4, 64), b0);
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= b0));
        assert!(a.layers()[1].weight.iter().all(|w| w.abs() <= b1));
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(Mlp::new(&[4], 0).is_err());
        assert!(Mlp::new(&[4, 0, 1], 0).is_err());
        let net = Mlp::new(&[3, 2], 0).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 7, 3]).unwrap();
        let (out, _) = net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn relu_identity_chain() {
        let net = Mlp::from_layers(vec![
            Dense { weight: array![[1.0]], bias: array![0.0] },
            Dense { weight: array![[1.0]], bias: array![0.0] },
        ])
        .unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap().0, vec![2.0]);
        assert_eq!(net.forward(&[-2.0]).unwrap().0, vec![0.0]);
    }

    #[test]
    fn forward_is_pure() {
        let net = Mlp::new(&[6, 8, 8, 3], 1).unwrap();
        let x = [0.1, -0.3, 0.7, 0.0, 2.0, -1.0];
        let a = net.forward(&x).unwrap().0;
        let b = net.forward(&x).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(a, net.predict(&x).unwrap());
    }

    #[test]
    fn linear_layer_gradients() {
        let net = Mlp::from_layers(vec![Dense {
            weight: array![[2.0, -1.0, 0.5]],
            bias: array![0.3],
        }])
        .unwrap();
        let x = [1.5, -2.0, 4.0];
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward_single(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weight, array![[1.5, -2.0, 4.0]]);
        assert_eq!(g.layers[0].bias, array![1.0]);
        assert_eq!(g.input, array![[2.0, -1.0, 0.5]]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], 4).unwrap();
        let (_, cache) = net.forward(&[0.2, 0.4, -0.1]).unwrap();
        let g = net.backward_single(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let a = Mlp::new(&[3, 5, 2], 4).unwrap();
        let b = Mlp::new(&[4, 5, 2], 4).unwrap();
        let (_, cache) = b.forward(&[0.0; 4]).unwrap();
        assert!(a.backward_single(&cache, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..20 {
            let depth = rng.random_range(2..=4);
            let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
            let net = Mlp::new(&sizes, trial).unwrap();
            let x = random_input(sizes[0], &mut rng);
            let upstream = random_input(*sizes.last().unwrap(), &mut rng);
            let objective = |n: &Mlp, x: &[f64]| -> f64 {
                n.predict(x).unwrap().iter().zip(&upstream).map(|(o, u)| o * u).sum()
            };
            let (_, cache) = net.forward(&x).unwrap();
            let analytic = net.backward_single(&cache, &upstream).unwrap();

            let theta = net.to_flat();
            let numeric = numeric_gradient(&theta, 1e-5, |p| {
                let mut n = net.clone();
                n.set_flat(p).unwrap();
                objective(&n, &x)
            });
            for (a, n) in analytic.to_flat().iter().zip(&numeric) {
                assert!(rel_err(*a, *n) <= 1e-4, "trial {trial}: {a} vs {n}");
            }
            let numeric_x = numeric_gradient(&x, 1e-5, |xv| objective(&net, xv));
            for (a, n) in analytic.input.iter().zip(&numeric_x) {
                assert!(rel_err(*a, *n) <= 1e-4, "trial {trial} input: {a} vs {n}");
            }
        }
    }

    #[test]
    fn batched_backward_sums_rows() {
        let net = Mlp::new(&[3, 4, 2], 8).unwrap();
        let rows = [[0.1, 0.2, 0.3], [-0.5, 0.9, 0.0]];
        let up = [[1.0, -1.0], [0.5, 2.0]];
        let batch = Array2::from_shape_fn((2, 3), |(i, j)| rows[i][j]);
        let up_b = Array2::from_shape_fn((2, 2), |(i, j)| up[i][j]);
        let (_, cache) = net.forward_batch(batch.view()).unwrap();
        let g = net.backward(&cache, up_b.view()).unwrap().to_flat();
        let mut expected = vec![0.0; g.len()];
        for r in 0..2 {
            let (_, c) = net.forward(&rows[r]).unwrap();
            for (e, v) in expected.iter_mut().zip(net.backward_single(&c, &up[r]).unwrap().to_flat()) {
                *e += v;
            }
        }
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut net = Mlp::new(&[3, 4, 2], 1).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net);
        let zero = Gradients {
            layers: Mlp::zeros(&[3, 4, 2]).unwrap().layers,
            input: Array2::zeros((1, 3)),
        };
        adam.step(&mut net, &zero, 0.01).unwrap();
        assert_eq!(net, before);
        assert_eq!(adam.timestep, 1);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut net = Mlp::zeros(&[2, 1]).unwrap();
        let mut adam = Adam::new(&net);
        let grads = Gradients {
            layers: vec![Dense { weight: array![[0.3, -2.0]], bias: array![1e-3] }],
            input: Array2::zeros((1, 2)),
        };
        let lr = 0.01;
        adam.step(&mut net, &grads, lr).unwrap();
        // m̂ = g, v̂ = g², so Δ = −lr·g/(|g|+ε)
        for (p, g) in net.to_flat().iter().zip(grads.to_flat()) {
            let expected = -lr * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        }
    }

    #[test]
    fn adam_zero_lr_leaves_params() {
        let mut net = Mlp::new(&[2, 3, 1], 5).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net);
        let (_, cache) = net.forward(&[1.0, 2.0]).unwrap();
        let g = net.backward_single(&cache, &[1.0]).unwrap();
        adam.step(&mut net, &g, 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn soft_update_endpoints() {
        let online = Mlp::new(&[3, 4, 2], 1).unwrap();
        let target0 = Mlp::new(&[3, 4, 2], 2).unwrap();
        let mut t = target0.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, target0);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut zero = Mlp::zeros(&[1, 1]).unwrap();
        let mut one = Mlp::zeros(&[1, 1]).unwrap();
        one.set_flat(&[1.0, 1.0]).unwrap();
        soft_update(&mut zero, &one, 0.01).unwrap();
        assert_eq!(zero.to_flat(), vec![0.01, 0.01]);

        let other = Mlp::zeros(&[2, 1]).unwrap();
        assert!(soft_update(&mut zero, &other, 0.5).is_err());
        assert!(soft_update(&mut zero, &one, 1.5).is_err());
    }

    #[test]
    fn gumbel_sample_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let logits = random_input(4, &mut rng);
            let s = gumbel_softmax_sample(&logits, 1.0, &mut rng).unwrap();
            assert!((s.relaxed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.relaxed.iter().all(|&p| p > 0.0 && p < 1.0));
            assert_eq!(s.hard.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(s.hard.iter().filter(|&&v| v == 0.0).count(), 3);
            assert_eq!(argmax(&s.hard), argmax(&s.relaxed));
        }
        assert!(gumbel_softmax_sample(&[0.0; 4], 0.0, &mut rng).is_err());
    }

    #[test]
    fn dominant_logit_is_almost_always_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let hits = (0..10_000)
            .filter(|_| {
                gumbel_softmax_sample(&[1000.0, 0.0, 0.0, 0.0], 1.0, &mut rng)
                    .unwrap()
                    .index()
                    == 0
            })
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn gumbel_is_deterministic_given_rng() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let l = [0.3, -0.2, 1.0, 0.0];
        assert_eq!(
            gumbel_softmax_sample(&l, 0.5, &mut a).unwrap(),
            gumbel_softmax_sample(&l, 0.5, &mut b).unwrap()
        );
    }

    #[test]
    fn greedy_picks_largest_logit() {
        assert_eq!(greedy_one_hot(&[3.0, 1.0, 0.0, -1.0]), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(greedy_one_hot(&[0.0, 0.0, 2.0, 2.0]), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z = [0.4, -1.2, 0.9, 0.1];
        let noise = [0.3, 0.0, -0.7, 1.1];
        let up = [1.0, -0.5, 2.0, 0.25];
        let t = 0.7;
        let p = relaxed_sample(&z, &noise, t);
        let analytic = softmax_backward(&p, &up, t);
        let numeric = numeric_gradient(&z, 1e-6, |zz| {
            relaxed_sample(zz, &noise, t).iter().zip(&up).map(|(a, b)| a * b).sum()
        });
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-6);
        }
    }
}
