//! A small rectifier MLP with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the last layer emits logits, and the per-sample
//! loss is softmax cross-entropy with the target probability clamped at
//! [`MIN_PROBABILITY`] before the log.

use rand::Rng;

use crate::data::GroupTag;
use crate::error::{DroError, Result};
use crate::rng::{self, Stream};

pub const MIN_PROBABILITY: f64 = 1e-12;

/// Upper bound of [`per_sample_loss`]: `-ln(1e-12) ≈ 27.63`.
pub fn max_sample_loss() -> f64 {
    -MIN_PROBABILITY.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Dense layer; `weights` is `out_dim × in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

/// Parameters of the network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: usize,
    pub group: GroupTag,
}

impl Mlp {
    /// All-zero network with the given layer sizes `[input, hidden.., classes]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                Layer::zeros(w[0], w[1], act)
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Layer sizes `[input, hidden.., classes]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim, l.activation))
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    /// Parameters in storage order: per layer, weights then bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(DroError::invalid("parameter structures differ"));
        }
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += scale * g;
        }
        Ok(())
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        Ok(self.forward_unchecked(features))
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(DroError::invalid(format!(
                "expected {} features, got {}",
                self.input_dim(),
                features.len()
            )));
        }
        Ok(())
    }

    fn forward_unchecked(&self, features: &[f64]) -> Vec<f64> {
        let mut x = features.to_vec();
        for layer in &self.layers {
            x = layer.affine(&x);
            if layer.activation == Activation::Relu {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        x
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward(features)?))
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(DroError::invalid("need at least input and output sizes"));
    }
    if dims.contains(&0) {
        return Err(DroError::invalid(format!("layer sizes must be positive: {dims:?}")));
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    crate::robust::softmax_scaled(logits, 1.0)
}

/// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6/(fan_in + fan_out))`;
/// zero biases.
pub fn init_params(dims: &[usize], seed: u64) -> Result<Mlp> {
    let mut mlp = Mlp::zeros(dims)?;
    let mut rng = rng::seeded(seed, Stream::Init);
    for layer in &mut mlp.layers {
        let s = glorot_bound(layer.in_dim, layer.out_dim);
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-s..=s));
    }
    Ok(mlp)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn check_sample(params: &Mlp, sample: &Sample) -> Result<()> {
    params.check_input(&sample.features)?;
    if sample.target >= params.num_classes() {
        return Err(DroError::invalid(format!(
            "target {} out of range for {} classes",
            sample.target,
            params.num_classes()
        )));
    }
    Ok(())
}

fn clamped_nll(p_target: f64) -> f64 {
    -p_target.max(MIN_PROBABILITY).ln()
}

/// Softmax cross-entropy of the network output against `sample.target`.
pub fn per_sample_loss(params: &Mlp, sample: &Sample) -> Result<f64> {
    check_sample(params, sample)?;
    let p = softmax(&params.forward_unchecked(&sample.features));
    Ok(clamped_nll(p[sample.target]))
}

/// Probability the network assigns to the correct class.
pub fn correct_class_probability(params: &Mlp, sample: &Sample) -> Result<f64> {
    check_sample(params, sample)?;
    Ok(softmax(&params.forward_unchecked(&sample.features))[sample.target])
}

/// `1 − p(correct class)`, a loss-like soft score in `[0, 1]`.
pub fn soft_error(params: &Mlp, sample: &Sample) -> Result<f64> {
    Ok(1.0 - correct_class_probability(params, sample)?)
}

/// Loss and its exact gradient with respect to every parameter.
///
/// Where the clamp is active the loss is locally constant and the gradient
/// is zero.
pub fn per_sample_gradient(params: &Mlp, sample: &Sample) -> Result<(f64, Mlp)> {
    check_sample(params, sample)?;
    // activations[k] is the input of layer k
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(sample.features.clone());
    for layer in &params.layers {
        let mut z = layer.affine(activations.last().unwrap());
        if layer.activation == Activation::Relu {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        activations.push(z);
    }
    let p = softmax(activations.last().unwrap());
    let loss = clamped_nll(p[sample.target]);
    let mut grad = params.zeros_like();
    if p[sample.target] < MIN_PROBABILITY {
        return Ok((loss, grad));
    }

    let mut delta = p;
    delta[sample.target] -= 1.0;
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let input = &activations[k];
        let g = &mut grad.layers[k];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] = d;
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            row.iter_mut().zip(input).for_each(|(w, &x)| *w = d * x);
        }
        if k == 0 {
            break;
        }
        let below = params.layers[k - 1].activation;
        let mut next = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            next.iter_mut().zip(row).for_each(|(acc, &w)| *acc += w * d);
        }
        if below == Activation::Relu {
            // the stored activation is post-ReLU; zero means the unit is off
            next.iter_mut().zip(input).for_each(|(v, &a)| {
                if a <= 0.0 {
                    *v = 0.0
                }
            });
        }
        delta = next;
    }
    Ok((loss, grad))
}

/// `params − learning_rate · gradient`.
pub fn sgd_step(params: &Mlp, gradient: &Mlp, learning_rate: f64) -> Result<Mlp> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(DroError::invalid(format!("learning rate must be positive, got {learning_rate}")));
    }
    let mut next = params.clone();
    next.add_scaled(gradient, -learning_rate)?;
    Ok(next)
}
