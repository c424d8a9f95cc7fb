use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, ModelSpec};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};

/// Mini-batch SGD with classical momentum on the mean cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the data held out for validation accuracy.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub train_size: usize,
    pub validation_size: usize,
}

/// Fraction of items whose most probable class equals the label.
pub fn accuracy(model: &ClassifierModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (im, &label) in data.images.iter().zip(&data.labels) {
        if model.predict(im)?.argmax() == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn check_data(model: &ClassifierModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("training data is empty"));
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::input(format!(
            "data has {} coordinates per image, model expects {}",
            data.input_dim(),
            model.input_dim()
        )));
    }
    if data.num_classes != model.num_classes() {
        return Err(Error::input(format!(
            "data has {} classes, model has {}",
            data.num_classes,
            model.num_classes()
        )));
    }
    Ok(())
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::input("learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.momentum) || cfg.weight_decay < 0.0 {
        return Err(Error::input("momentum must be in [0, 1) and weight decay nonnegative"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::input("batch size and epoch count must be positive"));
    }
    Ok(())
}

/// Trains a fresh network. The model seed, the validation split and the batch
/// order all derive from `cfg.seed`.
pub fn train(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    if data.is_empty() {
        return Err(Error::input("training data is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = ClassifierModel::random(spec, data.input_dim(), data.num_classes, &mut rng)?;
    fit(model, data, cfg)
}

/// Continues training from the given weights, e.g. on clean plus adversarial data.
pub fn finetune(model: &ClassifierModel, combined: &Dataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    fit(model.clone(), combined, cfg)
}

fn fit(mut model: ClassifierModel, data: &Dataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    check_config(cfg)?;
    check_data(&model, data)?;
    let (train_set, val_set) = if cfg.validation_fraction > 0.0 {
        split(data, cfg.validation_fraction, cfg.seed ^ 0x5EED_5A17)?
    } else {
        (data.clone(), data.subset(&[], "empty"))
    };
    if train_set.is_empty() {
        return Err(Error::input("validation fraction leaves no training items"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = model
        .layers()
        .iter()
        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
        .collect();
    let mut grads = velocity.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for (gw, gb) in grads.iter_mut() {
                gw.iter_mut().for_each(|g| *g = 0.0);
                gb.iter_mut().for_each(|g| *g = 0.0);
            }
            for &i in batch {
                total += accumulate_gradient(&model, &train_set.images[i].pixels, train_set.labels[i], &mut grads);
            }
            if !total.is_finite() {
                return Err(Error::TrainingDiverged { epoch: epoch + 1 });
            }
            let scale = 1.0 / batch.len() as f64;
            for (layer, ((vw, vb), (gw, gb))) in model.layers_mut().iter_mut().zip(velocity.iter_mut().zip(&grads)) {
                for ((w, v), g) in layer.weights.iter_mut().zip(vw.iter_mut()).zip(gw) {
                    *v = cfg.momentum * *v - cfg.learning_rate * (g * scale + cfg.weight_decay * *w);
                    *w += *v;
                }
                for ((b, v), g) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *b += *v;
                }
            }
        }
        epoch_loss = total / train_set.len() as f64;
        if !epoch_loss.is_finite() || model.layers().iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
            return Err(Error::TrainingDiverged { epoch: epoch + 1 });
        }
        log::debug!("epoch {}: mean loss {epoch_loss:.6}", epoch + 1);
    }

    let train_accuracy = accuracy(&model, &train_set)?;
    let validation_accuracy = if val_set.is_empty() {
        None
    } else {
        Some(accuracy(&model, &val_set)?)
    };
    model.training = Some(TrainingSummary {
        epochs: cfg.epochs,
        final_loss: epoch_loss,
        train_accuracy,
        validation_accuracy,
        train_size: train_set.len(),
        validation_size: val_set.len(),
    });
    Ok(model)
}

/// Adds the cross-entropy parameter gradient of one sample into `grads` and
/// returns the sample loss.
fn accumulate_gradient(
    model: &ClassifierModel,
    pixels: &[f64],
    label: usize,
    grads: &mut [(Vec<f64>, Vec<f64>)],
) -> f64 {
    let trace = model.forward_trace(pixels);
    let loss = -trace.probs[label].ln();
    let mut delta: Vec<f64> = trace.probs.clone();
    delta[label] -= 1.0;
    let mut next = Vec::new();
    for (i, layer) in model.layers().iter().enumerate().rev() {
        let input = &trace.activations[i];
        let output = &trace.activations[i + 1];
        let (gw, gb) = &mut grads[i];
        let pre: Vec<f64> = delta
            .iter()
            .zip(output)
            .map(|(d, &a)| d * layer.activation.derivative_from_output(a))
            .collect();
        for (o, &d) in pre.iter().enumerate() {
            gb[o] += d;
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, x) in row.iter_mut().zip(input) {
                *g += d * x;
            }
        }
        if i > 0 {
            next.clear();
            next.resize(layer.inputs, 0.0);
            for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&pre) {
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
    }
    loss
}
