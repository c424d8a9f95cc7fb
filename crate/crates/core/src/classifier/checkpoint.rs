//! Checkpoint layout: one line of JSON metadata terminated by `\n`, followed
//! by every parameter as a little-endian `f64`, layer by layer, weights
//! (row-major) before biases.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, ClassifierModel, Layer, TrainingSummary};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "mfi-pso-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    input_dim: usize,
    num_classes: usize,
    parameter_count: usize,
    layers: Vec<LayerHeader>,
    #[serde(default)]
    training: Option<TrainingSummary>,
}

pub(crate) fn to_bytes(model: &ClassifierModel) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT_TAG.to_owned(),
        version: CHECKPOINT_VERSION,
        input_dim: model.input_dim(),
        num_classes: model.num_classes(),
        parameter_count: model.parameter_count(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerHeader {
                inputs: l.inputs,
                outputs: l.outputs,
                activation: l.activation,
            })
            .collect(),
        training: model.training.clone(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(model.parameter_count() * 8);
    for layer in model.layers() {
        for v in layer.weights.iter().chain(&layer.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<ClassifierModel> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!("unknown format tag {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    let blob = &bytes[newline + 1..];
    if blob.len() != header.parameter_count * 8 {
        return Err(Error::Checkpoint(format!(
            "weight blob has {} bytes, header declares {} parameters",
            blob.len(),
            header.parameter_count
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in &header.layers {
        let weights: Vec<f64> = values.by_ref().take(lh.inputs * lh.outputs).collect();
        let bias: Vec<f64> = values.by_ref().take(lh.outputs).collect();
        layers.push(
            Layer::new(lh.inputs, lh.outputs, weights, bias, lh.activation)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    if values.next().is_some() {
        return Err(Error::Checkpoint("parameter count does not match layer shapes".into()));
    }
    let mut model = ClassifierModel::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if model.input_dim() != header.input_dim || model.num_classes() != header.num_classes {
        return Err(Error::Checkpoint("header dimensions disagree with layer shapes".into()));
    }
    model.training = header.training;
    Ok(model)
}

pub fn save(model: &ClassifierModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ClassifierModel> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
