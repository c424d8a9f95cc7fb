//! Dataset-level attack generation: score every correctly classified image,
//! keep the vulnerable ones, attack each of them independently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_adversarial, AdversarialResult, AttackSpec};
use crate::classifier::ClassifierModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mfi::image_mfi;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetAttackSpec {
    /// Minimum image-level mFI for an image to be attacked.
    pub mfi_img: f64,
    /// Minimum clean probability of the target class.
    pub p_target: f64,
    /// Per-pixel threshold deciding `m` for each image when `m` is absent.
    pub mfi_pixel: Option<f64>,
    /// Per-image quantile of the pixel map used as threshold when neither
    /// `m` nor `mfi_pixel` is given.
    pub mfi_pixel_quantile: Option<f64>,
    pub m: Option<usize>,
    pub p_err: Option<f64>,
    /// Per-image target classes; defaults to each image's second most probable class.
    pub targets: Option<Vec<usize>>,
    /// Shared hyperparameters (epsilon, a, b, swarm, delta). Its `m`,
    /// `pixel_indices`, `p_err`, `y_target`, `mfi_pixel` and
    /// `mfi_pixel_quantile` are ignored.
    pub attack: AttackSpec,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for DatasetAttackSpec {
    fn default() -> Self {
        Self {
            mfi_img: 0.0,
            p_target: 0.0,
            mfi_pixel: None,
            mfi_pixel_quantile: None,
            m: None,
            p_err: None,
            targets: None,
            attack: AttackSpec::default(),
            workers: None,
        }
    }
}

impl DatasetAttackSpec {
    fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.mfi_img >= 0.0) || !(0.0..=1.0).contains(&self.p_target) {
            return Err(Error::input("need mfi_img >= 0 and p_target in [0, 1]"));
        }
        if self.mfi_pixel.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::input("mfi_pixel must be nonnegative"));
        }
        if self.mfi_pixel_quantile.is_some_and(|q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::input("mfi_pixel_quantile must be in [0, 1]"));
        }
        if let Some(t) = &self.targets {
            if t.len() != data.len() {
                return Err(Error::input(format!("{} targets for {} images", t.len(), data.len())));
            }
            if t.iter().any(|&c| c >= data.num_classes) {
                return Err(Error::input("target class out of range"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::input("worker count must be positive"));
        }
        Ok(())
    }

    /// The single-image spec used for item `index`.
    pub fn image_spec(&self, index: usize, y_target: usize) -> AttackSpec {
        let mut spec = self.attack.clone();
        spec.m = self.m;
        spec.pixel_indices = None;
        spec.p_err = self.p_err;
        spec.y_target = Some(y_target);
        spec.mfi_pixel = self.mfi_pixel;
        spec.mfi_pixel_quantile = self.mfi_pixel_quantile;
        spec.swarm.seed = image_seed(self.attack.swarm.seed, index);
        spec
    }
}

/// Per-image swarm seed, independent of scheduling order.
fn image_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub index: usize,
    pub y_true: usize,
    pub y_pred: usize,
    pub correct: bool,
    /// Image-level mFI; only computed for correctly classified images.
    pub image_mfi: Option<f64>,
    pub y_target: usize,
    /// Clean probability of `y_target`.
    pub p_target: f64,
}

/// Classifies every image and computes image-level mFI for the correct ones.
pub fn score_dataset(model: &ClassifierModel, data: &Dataset, targets: Option<&[usize]>) -> Result<Vec<ImageScore>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let image = &data.images[i];
            let probs = model.predict(image)?;
            let (y1, y2) = probs.top2();
            let y_true = data.labels[i];
            let correct = y1 == y_true;
            let y_target = targets.map_or(y2, |t| t[i]);
            let image_mfi = if correct { Some(image_mfi(model, image)?) } else { None };
            Ok(ImageScore {
                index: i,
                y_true,
                y_pred: y1,
                correct,
                image_mfi,
                y_target,
                p_target: probs.get(y_target),
            })
        })
        .collect()
}

/// Indices of correctly classified images with `mFI >= mfi_img` and
/// `P(y_target) >= p_target`, ascending.
pub fn select_vulnerable(scores: &[ImageScore], mfi_img: f64, p_target: f64) -> Vec<usize> {
    scores
        .iter()
        .filter(|s| s.correct && s.image_mfi.is_some_and(|v| v >= mfi_img) && s.p_target >= p_target)
        .map(|s| s.index)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub total: usize,
    pub correctly_classified: usize,
    pub selected: usize,
    pub successes: usize,
    /// `successes / selected`, absent when nothing was selected.
    pub success_rate: Option<f64>,
    pub mfi_img: f64,
    pub p_target: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetAttackOutcome {
    /// Adversarial images labelled with their true class, in source order.
    pub adversarial: Dataset,
    pub results: Vec<AdversarialResult>,
    pub scores: Vec<ImageScore>,
    pub summary: AttackSummary,
}

/// Attacks every vulnerable image of `data`. An empty selection is not an
/// error; the summary then reports zero selected images.
pub fn generate_adversarial_set(
    model: &ClassifierModel,
    data: &Dataset,
    dspec: &DatasetAttackSpec,
) -> Result<DatasetAttackOutcome> {
    dspec.validate(data)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(dspec.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let scores = score_dataset(model, data, dspec.targets.as_deref())?;
        let selected = select_vulnerable(&scores, dspec.mfi_img, dspec.p_target);
        let correctly_classified = scores.iter().filter(|s| s.correct).count();
        log::info!(
            "{} of {} images correctly classified, {} selected",
            correctly_classified,
            data.len(),
            selected.len()
        );

        let results = selected
            .par_iter()
            .map(|&i| {
                let spec = dspec.image_spec(i, scores[i].y_target);
                let mut r = generate_adversarial(model, &data.images[i], &spec)?;
                r.image_index = Some(i);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;

        let successes = results.iter().filter(|r| r.success).count();
        let adversarial = Dataset::new(
            format!("{}-adversarial", data.name),
            results.iter().map(|r| r.adversarial.clone()).collect(),
            selected.iter().map(|&i| data.labels[i]).collect(),
            data.num_classes,
        )?;
        let summary = AttackSummary {
            total: data.len(),
            correctly_classified,
            selected: selected.len(),
            successes,
            success_rate: (!selected.is_empty()).then(|| successes as f64 / selected.len() as f64),
            mfi_img: dspec.mfi_img,
            p_target: dspec.p_target,
        };
        Ok(DatasetAttackOutcome {
            adversarial,
            results,
            scores,
            summary,
        })
    })
}
