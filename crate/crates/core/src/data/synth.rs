use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            num_classes: 3,
            per_class: 200,
            side: 8,
            noise_sd: 0.1,
            seed: 0,
        }
    }
}

// Intensity range of the class patch; samples near the low end overlap the
// background noise and give the classifier genuinely uncertain inputs.
const PATCH_MIN: f64 = 0.25;
const PATCH_MAX: f64 = 0.9;
const BACKGROUND: f64 = 0.15;

/// Class `k` template: a square patch on a ring around the image centre,
/// one patch per class at evenly spaced angles.
fn template(k: usize, num_classes: usize, side: usize) -> Vec<bool> {
    let patch = (side / 4).max(1);
    let centre = (side as f64 - patch as f64) / 2.0;
    let radius = side as f64 / 4.0;
    let angle = std::f64::consts::TAU * k as f64 / num_classes as f64;
    let r0 = (centre - radius * angle.cos()).round().clamp(0.0, (side - patch) as f64) as usize;
    let c0 = (centre + radius * angle.sin()).round().clamp(0.0, (side - patch) as f64) as usize;
    let mut mask = vec![false; side * side];
    for r in r0..r0 + patch {
        for c in c0..c0 + patch {
            mask[r * side + c] = true;
        }
    }
    mask
}

/// Synthetic grayscale dataset: `num_classes` bright patches at distinct
/// positions on a `side x side` grid, with per-sample patch brightness and
/// clipped Gaussian pixel noise. Items are interleaved by class.
pub fn synth_blobs(params: BlobParams) -> Result<Dataset> {
    let BlobParams {
        num_classes,
        per_class,
        side,
        noise_sd,
        seed,
    } = params;
    if num_classes < 2 || per_class == 0 || side < 2 {
        return Err(Error::input(format!("degenerate blob parameters {params:?}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::input("noise standard deviation must be finite and nonnegative"));
    }
    let templates: Vec<Vec<bool>> = (0..num_classes).map(|k| template(k, num_classes, side)).collect();
    for i in 0..num_classes {
        for j in 0..i {
            if templates[i] == templates[j] {
                return Err(Error::input(format!(
                    "grid side {side} is too small to hold {num_classes} distinct patches"
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut images = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for (k, mask) in templates.iter().enumerate() {
            let amplitude = rng.gen_range(PATCH_MIN..=PATCH_MAX);
            let pixels = mask
                .iter()
                .map(|&on| {
                    let base = if on { amplitude } else { BACKGROUND };
                    let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (base + eps).clamp(0.0, 1.0)
                })
                .collect();
            images.push(Image::new(pixels, side, side, 1)?);
            labels.push(k);
        }
    }
    Dataset::new(format!("blobs-k{num_classes}-s{side}-seed{seed}"), images, labels, num_classes)
}
