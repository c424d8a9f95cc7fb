//! A small fully connected softmax classifier with exact input gradients.
//!
//! The model is intentionally tiny: the influence measure needs exact
//! derivatives of `log P(y | x + w)` with respect to the perturbed pixels,
//! and a multilayer perceptron with a smooth activation provides them via a
//! handful of backward passes.

mod checkpoint;
mod train;

pub use checkpoint::{load, save, CHECKPOINT_VERSION};
pub use train::{accuracy, finetune, train, TrainConfig, TrainingSummary};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = apply(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Dense layer `a = act(W x + b)` with `W` stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::input("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::input(format!(
                "layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::input("layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn glorot<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }

    /// Maps `d loss / d output` to `d loss / d input`, given the layer output.
    fn backward_input(&self, output: &[f64], grad_out: &[f64], grad_in: &mut Vec<f64>) {
        grad_in.clear();
        grad_in.resize(self.inputs, 0.0);
        for ((row, &a), &g) in self.weights.chunks_exact(self.inputs).zip(output).zip(grad_out) {
            let d = g * self.activation.derivative_from_output(a);
            if d != 0.0 {
                for (gi, w) in grad_in.iter_mut().zip(row) {
                    *gi += d * w;
                }
            }
        }
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Architecture description used to build a fresh model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Tanh,
        }
    }
}

/// Softmax probabilities over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Wraps a vector that is already a probability distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::input("a probability vector needs at least two classes"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input("probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Classes ordered by descending probability; ties go to the lower index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        order
    }

    /// Most probable class `y1`.
    pub fn argmax(&self) -> usize {
        self.top2().0
    }

    /// `(y1, y2)`: the most and second-most probable classes.
    pub fn top2(&self) -> (usize, usize) {
        let (mut first, mut second) = if self.0[1] > self.0[0] { (1, 0) } else { (0, 1) };
        for (k, &p) in self.0.iter().enumerate().skip(2) {
            if p > self.0[first] {
                second = first;
                first = k;
            } else if p > self.0[second] {
                second = k;
            }
        }
        (first, second)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-layer outputs from one forward pass; `activations[0]` is the input.
pub(crate) struct ForwardTrace {
    activations: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    layers: Vec<Layer>,
    num_classes: usize,
    input_dim: usize,
    #[serde(default)]
    pub training: Option<TrainingSummary>,
}

impl ClassifierModel {
    /// Assembles a model from explicit layers. The last layer's output width
    /// is the class count.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::input("a model needs at least one layer"))?;
        let input_dim = first.inputs;
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::input(format!(
                    "layer output width {} does not feed input width {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        let num_classes = layers.last().unwrap().outputs;
        if num_classes < 2 {
            return Err(Error::input("a classifier needs at least two classes"));
        }
        Ok(Self {
            layers,
            num_classes,
            input_dim,
            training: None,
        })
    }

    /// Single linear layer with all-zero parameters: a constant, uniform classifier.
    pub fn constant(input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::from_layers(vec![Layer::zeros(input_dim, num_classes, Activation::Identity)])
    }

    /// Randomly initialised network for `spec`.
    pub fn random<R: Rng>(spec: &ModelSpec, input_dim: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::input("input dimension must be positive"));
        }
        let mut widths = vec![input_dim];
        widths.extend(&spec.hidden);
        widths.push(num_classes);
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::input("layer widths must be positive"));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { spec.activation };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    fn check_input(&self, pixels: &[f64]) -> Result<()> {
        if pixels.len() != self.input_dim {
            return Err(Error::input(format!(
                "image has {} coordinates, model expects {}",
                pixels.len(),
                self.input_dim
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("pixel {i} is not finite")));
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, pixels: &[f64]) -> ForwardTrace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(pixels.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(activations.last().unwrap(), &mut out);
            activations.push(out);
        }
        let probs = softmax(activations.last().unwrap());
        ForwardTrace { activations, probs }
    }

    /// Softmax class probabilities for a raw pixel vector.
    pub fn predict_pixels(&self, pixels: &[f64]) -> Result<ProbVector> {
        self.check_input(pixels)?;
        Ok(ProbVector(self.forward_trace(pixels).probs))
    }

    pub fn predict(&self, image: &Image) -> Result<ProbVector> {
        self.predict_pixels(&image.pixels)
    }

    /// Gradient of `sum_k seed[k] * logit_k` with respect to the input.
    fn backprop_to_input(&self, trace: &ForwardTrace, seed: &[f64]) -> Vec<f64> {
        let mut grad = seed.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.backward_input(&trace.activations[i + 1], &grad, &mut next);
            std::mem::swap(&mut grad, &mut next);
        }
        grad
    }

    /// Full `K x p` Jacobian of the class log-probabilities with respect to
    /// the input, together with the probabilities at that input.
    ///
    /// Row `y` comes from one backward pass seeded with `e_y - P`, the
    /// gradient of `log softmax_y` with respect to the logits.
    pub fn logprob_jacobian_full(&self, image: &Image) -> Result<(ProbVector, DMatrix<f64>)> {
        self.check_input(&image.pixels)?;
        let trace = self.forward_trace(&image.pixels);
        let k = self.num_classes;
        let mut jac = DMatrix::zeros(k, self.input_dim);
        let mut seed = vec![0.0; k];
        for y in 0..k {
            for (c, s) in seed.iter_mut().enumerate() {
                *s = if c == y { 1.0 } else { 0.0 } - trace.probs[c];
            }
            let row = self.backprop_to_input(&trace, &seed);
            for (j, v) in row.into_iter().enumerate() {
                jac[(y, j)] = v;
            }
        }
        Ok((ProbVector(trace.probs), jac))
    }

    /// `K x m` Jacobian of `log P(y | x + w)` at `w = 0`, restricted to `coords`.
    pub fn logprob_jacobian(&self, image: &Image, coords: &[usize]) -> Result<DMatrix<f64>> {
        validate_coords(coords, self.input_dim)?;
        let (_, full) = self.logprob_jacobian_full(image)?;
        Ok(select_columns(&full, coords))
    }
}

pub(crate) fn select_columns(full: &DMatrix<f64>, coords: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(full.nrows(), coords.len(), |r, c| full[(r, coords[c])])
}

/// Checks that `coords` is a nonempty list of distinct indices below `dim`.
pub fn validate_coords(coords: &[usize], dim: usize) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::input("at least one coordinate is required"));
    }
    let mut seen = vec![false; dim];
    for &c in coords {
        if c >= dim {
            return Err(Error::input(format!("coordinate {c} out of range for {dim} pixels")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::input(format!("coordinate {c} listed twice")));
        }
    }
    Ok(())
}
