//! Dense multilayer perceptrons with a recorded forward pass and exact
//! reverse-mode gradients.
//!
//! Parameters live in one flat buffer. Layer `l` occupies a row-major weight
//! block of shape `(out, in)` followed by its bias of length `out`. Gradients
//! use the same layout, so optimisers and Polyak averaging work on plain
//! slices.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{config, Result};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// How the raw output vector is interpreted by the consumer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Head {
    /// Plain linear output.
    Linear,
    /// `[mean; log_std]` halves, log-std hard-clamped to `[log_std_min, log_std_max]`
    /// and actions squashed through `tanh`.
    SquashedGaussian { log_std_min: f64, log_std_max: f64 },
    /// `[mean; log_var]` halves, log-variance soft-clamped to `(log_var_min, log_var_max)`.
    MeanLogVar { log_var_min: f64, log_var_max: f64 },
}

impl Head {
    pub(crate) fn tag(&self) -> u8 {
        match self {
            Head::Linear => 0,
            Head::SquashedGaussian { .. } => 1,
            Head::MeanLogVar { .. } => 2,
        }
    }

    pub(crate) fn bounds(&self) -> (f64, f64) {
        match *self {
            Head::Linear => (0.0, 0.0),
            Head::SquashedGaussian {
                log_std_min,
                log_std_max,
            } => (log_std_min, log_std_max),
            Head::MeanLogVar {
                log_var_min,
                log_var_max,
            } => (log_var_min, log_var_max),
        }
    }

    pub(crate) fn from_tag(tag: u8, lo: f64, hi: f64) -> Option<Head> {
        match tag {
            0 => Some(Head::Linear),
            1 => Some(Head::SquashedGaussian {
                log_std_min: lo,
                log_std_max: hi,
            }),
            2 => Some(Head::MeanLogVar {
                log_var_min: lo,
                log_var_max: hi,
            }),
            _ => None,
        }
    }

    /// Policy head defaults: log-std in `[-20, 2]`.
    pub fn squashed_gaussian() -> Head {
        Head::SquashedGaussian {
            log_std_min: -20.0,
            log_std_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
    activation: Activation,
    head: Head,
}

/// Activations recorded during a batched forward pass.
///
/// `acts[0]` is the input batch, `acts[l]` the post-activation output of layer
/// `l`; the last entry is the raw (linear) network output.
#[derive(Clone, Debug)]
pub struct Tape {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

/// Result of a backward pass: parameter gradients in the flat layout of
/// [`MlpParams`] and the gradient with respect to the input batch.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl MlpParams {
    /// All-zero network with the given layer sizes `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        if sizes.len() < 2 {
            return config("an MLP needs at least an input and an output size");
        }
        if sizes.contains(&0) {
            return config(format!("layer sizes must be positive, got {sizes:?}"));
        }
        let (offsets, total) = layer_offsets(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            offsets,
            data: vec![0.0; total],
            activation: Activation::Relu,
            head,
        })
    }

    /// Uniform fan-in initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes, head)?;
        for l in 0..p.num_layers() {
            let (fan_in, fan_out) = (p.sizes[l], p.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = p.offsets[l];
            for w in &mut p.data[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    /// Builds sizes `[input, hidden; layers, output]`.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden_layers: usize,
        hidden_nodes: usize,
        output: usize,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden_nodes, hidden_layers));
        sizes.push(output);
        Self::new(&sizes, head, rng)
    }

    pub(crate) fn from_parts(sizes: Vec<usize>, head: Head, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(&sizes, head)?;
        if data.len() != p.data.len() {
            return config(format!(
                "parameter count {} does not match sizes {:?} (expected {})",
                data.len(),
                sizes,
                p.data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return config("non-finite parameter value");
        }
        p.data = data;
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.data
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        ArrayView2::from_shape((o, i), &self.data[off..off + o * i]).unwrap()
    }

    fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l] + o * i;
        &self.data[off..off + o]
    }

    /// Weight block of layer `l`, row-major `(out, in)`.
    pub fn layer_weight(&self, l: usize) -> &[f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        &self.data[off..off + o * i]
    }

    pub fn layer_bias(&self, l: usize) -> &[f64] {
        self.bias(l)
    }

    pub fn layer_weight_mut(&mut self, l: usize) -> &mut [f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        &mut self.data[off..off + o * i]
    }

    pub fn layer_bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l] + o * i;
        &mut self.data[off..off + o]
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || input.len() != batch * self.input_dim() {
            return config(format!(
                "input of length {} does not hold {} rows of width {}",
                input.len(),
                batch,
                self.input_dim()
            ));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let bias = self.bias(l);
        let mut y = Vec::with_capacity(batch * o);
        for _ in 0..batch {
            y.extend_from_slice(bias);
        }
        let xv = ArrayView2::from_shape((batch, i), x).unwrap();
        let mut yv = ArrayViewMut2::from_shape((batch, o), &mut y[..]).unwrap();
        general_mat_mul(1.0, &xv, &self.weight(l).t(), 1.0, &mut yv);
        if l + 1 < self.num_layers() {
            match self.activation {
                Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
            }
        }
        y
    }

    /// Single-sample forward pass returning the raw output vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_batch(input, 1)
    }

    /// Batched forward pass without recording (`input` is `batch × input_dim`, row-major).
    pub fn predict_batch(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_input(input, batch)?;
        let mut x = self.layer_forward(0, input, batch);
        for l in 1..self.num_layers() {
            x = self.layer_forward(l, &x, batch);
        }
        Ok(x)
    }

    /// Batched forward pass that records every activation for [`MlpParams::backward`].
    pub fn forward_tape(&self, input: &[f64], batch: usize) -> Result<Tape> {
        self.check_input(input, batch)?;
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(input.to_vec());
        for l in 0..self.num_layers() {
            let y = self.layer_forward(l, acts.last().unwrap(), batch);
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    fn check_grad(&self, tape: &Tape, grad_output: &[f64]) -> Result<()> {
        if tape.acts.len() != self.num_layers() + 1 {
            return config("tape was recorded on a network of different depth");
        }
        if grad_output.len() != tape.batch * self.output_dim() {
            return config(format!(
                "loss gradient has length {}, expected {} (a scalar loss differentiated w.r.t. each of the {} outputs)",
                grad_output.len(),
                tape.batch * self.output_dim(),
                tape.batch * self.output_dim()
            ));
        }
        Ok(())
    }

    /// Reverse pass. `grad_output` is the derivative of a scalar loss with
    /// respect to each recorded network output.
    pub fn backward(&self, tape: &Tape, grad_output: &[f64]) -> Result<Gradients> {
        self.check_grad(tape, grad_output)?;
        let mut params = vec![0.0; self.data.len()];
        let input = self.backprop(tape, grad_output, Some(&mut params));
        Ok(Gradients { params, input })
    }

    /// Reverse pass for the input gradient only; parameter gradients are skipped.
    pub fn input_gradient(&self, tape: &Tape, grad_output: &[f64]) -> Result<Vec<f64>> {
        self.check_grad(tape, grad_output)?;
        Ok(self.backprop(tape, grad_output, None))
    }

    fn backprop(&self, tape: &Tape, grad_output: &[f64], mut params: Option<&mut [f64]>) -> Vec<f64> {
        let b = tape.batch;
        let mut delta = grad_output.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let x = &tape.acts[l];
            if let Some(g) = params.as_deref_mut() {
                let off = self.offsets[l];
                let (gw, gb) = g[off..off + o * i + o].split_at_mut(o * i);
                let dv = ArrayView2::from_shape((b, o), &delta[..]).unwrap();
                let xv = ArrayView2::from_shape((b, i), &x[..]).unwrap();
                let mut gwv = ArrayViewMut2::from_shape((o, i), gw).unwrap();
                general_mat_mul(1.0, &dv.t(), &xv, 0.0, &mut gwv);
                for row in delta.chunks_exact(o) {
                    for (acc, d) in gb.iter_mut().zip(row) {
                        *acc += d;
                    }
                }
            }
            let mut dx = vec![0.0; b * i];
            {
                let dv = ArrayView2::from_shape((b, o), &delta[..]).unwrap();
                let mut dxv = ArrayViewMut2::from_shape((b, i), &mut dx[..]).unwrap();
                general_mat_mul(1.0, &dv, &self.weight(l), 0.0, &mut dxv);
            }
            if l > 0 {
                // x is the post-ReLU activation of the previous layer.
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..p.num_layers() {
            let (i, o) = (p.sizes()[l], p.sizes()[l + 1]);
            let w = p.layer_weight(l);
            let b = p.layer_bias(l);
            let mut y = vec![0.0; o];
            for r in 0..o {
                let mut s = b[r];
                for c in 0..i {
                    s += w[r * i + c] * h[c];
                }
                y[r] = if l + 1 < p.num_layers() { s.max(0.0) } else { s };
            }
            h = y;
        }
        h
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[3, 4, 2], Head::Linear).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut p = MlpParams::zeros(&[3, 3], Head::Linear).unwrap();
        for k in 0..3 {
            p.layer_weight_mut(0)[k * 3 + k] = 1.0;
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(p.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = MlpParams::new(&[5, 16, 16, 3], Head::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = p.forward(&x).unwrap();
        let slow = naive_forward(&p, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn batched_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MlpParams::new(&[4, 8, 2], Head::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = p.predict_batch(&x, 3).unwrap();
        for r in 0..3 {
            let single = naive_forward(&p, &x[r * 4..r * 4 + 4]);
            for c in 0..2 {
                assert!((batch[r * 2 + c] - single[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = MlpParams::zeros(&[3, 2], Head::Linear).unwrap();
        assert!(matches!(p.forward(&[1.0, 2.0]), Err(crate::Error::Config(_))));
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::new(&[3, 6, 2], Head::Linear, &mut rng).unwrap();
        let tape = p.forward_tape(&[0.1, 0.2, 0.3], 1).unwrap();
        let g = p.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|v| *v == 0.0));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_weight_gradient_is_input() {
        let mut p = MlpParams::zeros(&[1, 1], Head::Linear).unwrap();
        p.layer_weight_mut(0)[0] = 0.7;
        let x = 2.5;
        let tape = p.forward_tape(&[x], 1).unwrap();
        let g = p.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g.params[0], x);
        assert_eq!(g.params[1], 1.0);
        assert_eq!(g.input[0], 0.7);
    }

    #[test]
    fn non_scalar_loss_gradient_rejected() {
        let p = MlpParams::zeros(&[2, 3], Head::Linear).unwrap();
        let tape = p.forward_tape(&[1.0, 1.0], 1).unwrap();
        assert!(matches!(p.backward(&tape, &[1.0]), Err(crate::Error::Config(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut p = MlpParams::new(&[4, 8, 8, 3], Head::Linear, &mut rng).unwrap();
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            // loss = sum_k c_k * y_k^2 over a batch of two
            let loss = |p: &MlpParams| -> f64 {
                let y = p.predict_batch(&x, 2).unwrap();
                y.iter().zip(&c).map(|(y, c)| c * y * y).sum()
            };
            let tape = p.forward_tape(&x, 2).unwrap();
            let dy: Vec<f64> = tape.output().iter().zip(&c).map(|(y, c)| 2.0 * c * y).collect();
            let g = p.backward(&tape, &dy).unwrap();
            let h = 1e-5;
            let mut fd = vec![0.0; p.num_params()];
            for k in 0..p.num_params() {
                let orig = p.params()[k];
                p.params_mut()[k] = orig + h;
                let up = loss(&p);
                p.params_mut()[k] = orig - h;
                let down = loss(&p);
                p.params_mut()[k] = orig;
                fd[k] = (up - down) / (2.0 * h);
            }
            let num: f64 = g.params.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = g.params.iter().map(|a| a * a).sum::<f64>().sqrt()
                + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num / den.max(1e-12) < 1e-4, "relative error {}", num / den);
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MlpParams::new(&[6, 32, 32, 4], Head::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = p.predict_batch(&x, 10).unwrap();
        let b = p.predict_batch(&x, 10).unwrap();
        assert_eq!(a, b);
    }
}
