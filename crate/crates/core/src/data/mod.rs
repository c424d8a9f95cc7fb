//! Dataset containers and loaders.
//!
//! Every load path normalizes pixels into `[0, 1]`. Multi-channel rasters are
//! flattened channel-minor per spatial pixel (see [`Image`]).

mod idx;
mod image_dir;
mod synth;

pub use idx::{load_idx, write_idx};
pub use image_dir::load_image_dir;
pub use synth::{synth_blobs, BlobParams};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    /// Builds a dataset, stamping each image with its label.
    pub fn new(
        name: impl Into<String>,
        images: Vec<Image>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::input("a dataset needs at least two classes"));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::input(format!(
                "label {l} of item {i} is out of range for {num_classes} classes"
            )));
        }
        if let Some(first) = images.first() {
            let shape = first.shape();
            if let Some(i) = images.iter().position(|im| im.shape() != shape) {
                return Err(Error::input(format!(
                    "image {i} has shape {:?}, expected {shape:?}",
                    images[i].shape()
                )));
            }
        }
        let images = images
            .into_iter()
            .zip(&labels)
            .map(|(im, &l)| im.with_label(l))
            .collect();
        Ok(Self {
            images,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(width, height, channels)` shared by all images, if any.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Image::shape)
    }

    pub fn input_dim(&self) -> usize {
        self.images.first().map_or(0, Image::len)
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            name: name.into(),
        }
    }

    /// Concatenation of two datasets with matching class count and shape.
    pub fn concat(&self, other: &Dataset, name: impl Into<String>) -> Result<Dataset> {
        if self.num_classes != other.num_classes {
            return Err(Error::input("cannot concatenate datasets with different class counts"));
        }
        let mut images = self.images.clone();
        images.extend(other.images.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend(&other.labels);
        Dataset::new(name, images, labels, self.num_classes)
    }
}

/// Seeded random split into `(train, validation)` where the validation part
/// holds `round(fraction * n)` items.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::input(format!("split fraction {fraction} not in [0, 1]")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * fraction).round() as usize;
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((
        dataset.subset(&train, format!("{}-train", dataset.name)),
        dataset.subset(&val, format!("{}-validation", dataset.name)),
    ))
}
