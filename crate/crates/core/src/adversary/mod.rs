//! The attack: pixel selection by per-pixel mFI, then a particle swarm
//! search over an epsilon box around the selected pixels for the perturbation
//! minimizing `f_A(w) = a * f0(w) + b * ||w||_2`.

mod dataset;
mod loss;

pub use dataset::{
    generate_adversarial_set, score_dataset, select_vulnerable, AttackSummary, DatasetAttackOutcome,
    DatasetAttackSpec, ImageScore,
};
pub use loss::{f0_perr, f0_targeted, f0_targeted_perr, f0_untargeted, Loss, LossKind, SuccessCriteria};

use serde::{Deserialize, Serialize};

use crate::classifier::{validate_coords, ClassifierModel, ProbVector};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mfi::{pixel_mfi_map, top_m_pixels};
use crate::pso::{optimize_gated, Bounds, SwarmConfig};

pub const DEFAULT_EPSILON: f64 = 0.15;
pub const DEFAULT_LOSS_WEIGHT: f64 = 100.0;
pub const DEFAULT_NORM_WEIGHT: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const RESULT_VERSION: u32 = 1;

/// User options for a single-image attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSpec {
    /// Number of pixels to perturb, chosen by descending per-pixel mFI.
    pub m: Option<usize>,
    /// Explicit coordinates to perturb; excludes `m`.
    pub pixel_indices: Option<Vec<usize>>,
    /// Target misclassification probability, at least 0.5.
    pub p_err: Option<f64>,
    pub y_target: Option<usize>,
    pub epsilon: f64,
    /// Weight of the misclassification loss.
    pub a: f64,
    /// Weight of the perturbation norm.
    pub b: f64,
    pub swarm: SwarmConfig,
    /// When `m` is absent: perturb every pixel whose mFI reaches this value.
    pub mfi_pixel: Option<f64>,
    /// When `m` and `mfi_pixel` are absent: perturb every pixel whose mFI
    /// reaches this quantile of the image's own pixel map.
    pub mfi_pixel_quantile: Option<f64>,
    /// Half-width of the accepted band around `p_err`.
    pub delta: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            m: None,
            pixel_indices: None,
            p_err: None,
            y_target: None,
            epsilon: DEFAULT_EPSILON,
            a: DEFAULT_LOSS_WEIGHT,
            b: DEFAULT_NORM_WEIGHT,
            swarm: SwarmConfig::default(),
            mfi_pixel: None,
            mfi_pixel_quantile: None,
            delta: DEFAULT_DELTA,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self, input_dim: usize, num_classes: usize) -> Result<()> {
        if self.m.is_some() && self.pixel_indices.is_some() {
            return Err(Error::input("`m` and `pixel_indices` are mutually exclusive"));
        }
        if let Some(m) = self.m {
            if m == 0 || m > input_dim {
                return Err(Error::input(format!("m = {m} must be in 1..={input_dim}")));
            }
        }
        if let Some(idx) = &self.pixel_indices {
            validate_coords(idx, input_dim)?;
        }
        if let Some(p) = self.p_err {
            if !(0.5..1.0).contains(&p) {
                return Err(Error::input(format!("p_err = {p} must be in [0.5, 1)")));
            }
        }
        if let Some(t) = self.y_target {
            if t >= num_classes {
                return Err(Error::input(format!("target class {t} out of range for {num_classes} classes")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::input(format!("epsilon = {} must be in (0, 1]", self.epsilon)));
        }
        if !(self.a > 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::input("loss weights need a > 0 and b >= 0"));
        }
        if let Some(t) = self.mfi_pixel {
            if !(t >= 0.0) {
                return Err(Error::input("mFI pixel threshold must be nonnegative"));
            }
        }
        if let Some(q) = self.mfi_pixel_quantile {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::input(format!("mFI pixel quantile {q} must be in [0, 1]")));
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::input("success band delta must be nonnegative"));
        }
        self.swarm.validate()
    }
}

/// `epsilon * [0 - x_i, 1 - x_i]` for every perturbed coordinate.
pub fn perturbation_bounds(image: &Image, coords: &[usize], epsilon: f64) -> Result<Bounds> {
    let lower = coords.iter().map(|&c| -epsilon * image.pixels[c]).collect();
    let upper = coords.iter().map(|&c| epsilon * (1.0 - image.pixels[c])).collect();
    Bounds::new(lower, upper)
}

fn next_toward(v: f64, target: f64) -> f64 {
    // v and target are in [0, 1], so bit increments step through adjacent floats.
    if v > target {
        f64::from_bits(v.to_bits() - 1)
    } else {
        f64::from_bits(v.to_bits() + 1)
    }
}

/// `x + zero-padded w`, clipped to `[0, 1]` and to `|adv - x| <= epsilon`.
pub fn apply_perturbation(image: &Image, coords: &[usize], omega: &[f64], epsilon: f64) -> Image {
    let mut out = image.clone();
    for (&c, &w) in coords.iter().zip(omega) {
        let x = image.pixels[c];
        let mut v = (x + w).clamp(x - epsilon, x + epsilon).clamp(0.0, 1.0);
        // Rounding in `x +- epsilon` can overshoot by a few ulps.
        while (v - x).abs() > epsilon {
            v = next_toward(v, x);
        }
        out.pixels[c] = v;
    }
    out
}

/// The attack objective for a fixed image and coordinate set.
pub struct AdversarialObjective<'a> {
    model: &'a ClassifierModel,
    image: &'a Image,
    coords: &'a [usize],
    loss: Loss,
    a: f64,
    b: f64,
}

impl<'a> AdversarialObjective<'a> {
    pub fn new(model: &'a ClassifierModel, image: &'a Image, coords: &'a [usize], loss: Loss, a: f64, b: f64) -> Self {
        Self {
            model,
            image,
            coords,
            loss,
            a,
            b,
        }
    }

    /// Probabilities at `x + zero-padded w`; `None` if the model rejects the input.
    pub fn probs(&self, omega: &[f64]) -> Option<ProbVector> {
        let mut pixels = self.image.pixels.clone();
        for (&c, &w) in self.coords.iter().zip(omega) {
            pixels[c] = (pixels[c] + w).clamp(0.0, 1.0);
        }
        self.model.predict_pixels(&pixels).ok()
    }

    pub fn f0(&self, omega: &[f64]) -> f64 {
        self.probs(omega).map_or(f64::NAN, |p| self.loss.eval(&p))
    }

    /// `a * f0(w) + b * ||w||_2`; NaN if the prediction fails.
    pub fn value(&self, omega: &[f64]) -> f64 {
        let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
        self.a * self.f0(omega) + self.b * norm
    }
}

/// Stand-alone evaluation of `f_A` for a spec, with the loss selected from
/// the spec's `p_err` and `y_target`.
pub fn adversarial_objective(
    omega: &[f64],
    model: &ClassifierModel,
    image: &Image,
    coords: &[usize],
    spec: &AttackSpec,
) -> Result<f64> {
    if omega.len() != coords.len() {
        return Err(Error::input("perturbation and coordinate lists differ in length"));
    }
    validate_coords(coords, image.len())?;
    let loss = Loss::new(image.label, spec.y_target, spec.p_err)
        .ok_or_else(|| Error::input("untargeted attacks need the true label"))?;
    let value = AdversarialObjective::new(model, image, coords, loss, spec.a, spec.b).value(omega);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical("attack objective is not finite".into()))
    }
}

/// Output of one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    pub version: u32,
    /// Position in the source dataset, for dataset-level runs.
    pub image_index: Option<usize>,
    pub original: Image,
    pub adversarial: Image,
    /// Perturbed coordinates, in pixel-selection order.
    pub coords: Vec<usize>,
    /// Applied perturbation `adversarial - original`, aligned with `coords`.
    pub omega: Vec<f64>,
    pub loss: LossKind,
    pub criteria: SuccessCriteria,
    pub success: bool,
    pub probs_before: Vec<f64>,
    pub probs_after: Vec<f64>,
    pub label_before: usize,
    pub label_after: usize,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub l0_norm: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `f0` and `f_A` re-evaluated at the applied perturbation.
    pub f0: f64,
    pub objective: f64,
}

/// Re-evaluates the success predicate on the stored adversarial image.
pub fn success(model: &ClassifierModel, result: &AdversarialResult) -> Result<bool> {
    Ok(result.criteria.holds(&model.predict(&result.adversarial)?))
}

fn choose_coords(model: &ClassifierModel, image: &Image, spec: &AttackSpec) -> Result<Vec<usize>> {
    if let Some(idx) = &spec.pixel_indices {
        return Ok(idx.clone());
    }
    let map = pixel_mfi_map(model, image, spec.y_target)?;
    let threshold = match (spec.mfi_pixel, spec.mfi_pixel_quantile) {
        (Some(t), _) => Some(t),
        (None, Some(q)) => Some(map.quantile(q)?),
        (None, None) => None,
    };
    let m = match (spec.m, threshold) {
        (Some(m), _) => m,
        (None, Some(threshold)) => match map.count_at_least(threshold) {
            0 => {
                log::warn!("no pixel reaches the mFI threshold {threshold}; attacking the single most influential pixel");
                1
            }
            n => n,
        },
        (None, None) => image.len(),
    };
    top_m_pixels(&map, m)
}

/// Runs one attack on `image`.
pub fn generate_adversarial(model: &ClassifierModel, image: &Image, spec: &AttackSpec) -> Result<AdversarialResult> {
    spec.validate(model.input_dim(), model.num_classes())?;
    if image.len() != model.input_dim() {
        return Err(Error::input(format!(
            "image has {} coordinates, model expects {}",
            image.len(),
            model.input_dim()
        )));
    }
    if let Some(y) = image.label {
        if y >= model.num_classes() {
            return Err(Error::input(format!("label {y} out of range")));
        }
    }
    let loss = Loss::new(image.label, spec.y_target, spec.p_err)
        .ok_or_else(|| Error::input("an attack without a target class needs the true label"))?;
    let criteria = SuccessCriteria {
        y_true: image.label,
        y_target: spec.y_target,
        p_err: spec.p_err,
        delta: spec.delta,
    };
    let before = model.predict(image)?;

    if loss.kind == LossKind::Untargeted && criteria.holds(&before) {
        log::info!("image is already misclassified; returning it unperturbed");
        return Ok(finish(model, image, spec, loss, criteria, &before, Vec::new(), Vec::new(), 0, true));
    }

    let coords = choose_coords(model, image, spec)?;
    let bounds = perturbation_bounds(image, &coords, spec.epsilon)?;
    let objective = AdversarialObjective::new(model, image, &coords, loss, spec.a, spec.b);
    let origin = vec![0.0; coords.len()];
    let optimum = optimize_gated(
        |w: &[f64]| objective.value(w),
        &bounds,
        &spec.swarm,
        Some(&origin),
        |w: &[f64]| objective.probs(w).is_some_and(|p| criteria.holds(&p)),
    )?;
    log::debug!(
        "loss {}: f_A = {:.6} after {} iterations",
        loss.kind.name(),
        optimum.value,
        optimum.iterations
    );
    Ok(finish(
        model,
        image,
        spec,
        loss,
        criteria,
        &before,
        coords,
        optimum.position,
        optimum.iterations,
        optimum.converged,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &ClassifierModel,
    image: &Image,
    spec: &AttackSpec,
    loss: Loss,
    criteria: SuccessCriteria,
    before: &ProbVector,
    coords: Vec<usize>,
    omega: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> AdversarialResult {
    let adversarial = apply_perturbation(image, &coords, &omega, spec.epsilon);
    let applied: Vec<f64> = coords.iter().map(|&c| adversarial.pixels[c] - image.pixels[c]).collect();
    let after = model.predict(&adversarial).expect("adversarial image keeps the model's input shape");
    let f0 = loss.eval(&after);
    let l2_norm = applied.iter().map(|w| w * w).sum::<f64>().sqrt();
    let linf_norm = applied.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let l0_norm = applied.iter().filter(|w| **w != 0.0).count();
    AdversarialResult {
        version: RESULT_VERSION,
        image_index: None,
        original: image.clone(),
        success: criteria.holds(&after),
        label_before: before.argmax(),
        label_after: after.argmax(),
        probs_before: before.as_slice().to_vec(),
        probs_after: after.into_vec(),
        adversarial,
        coords,
        omega: applied,
        loss: loss.kind,
        criteria,
        l2_norm,
        linf_norm,
        l0_norm,
        epsilon: spec.epsilon,
        iterations,
        converged,
        f0,
        objective: spec.a * f0 + spec.b * l2_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{Activation, Layer};

    /// Two-pixel linear model: class 0 likes pixel 0, class 1 likes pixel 1.
    fn toy() -> ClassifierModel {
        let layer = Layer::new(2, 2, vec![8.0, 0.0, 0.0, 8.0], vec![0.0, 0.0], Activation::Identity).unwrap();
        ClassifierModel::from_layers(vec![layer]).unwrap()
    }

    #[test]
    fn spec_validation() {
        let ok = AttackSpec::default();
        assert!(ok.validate(4, 3).is_ok());
        let both = AttackSpec { m: Some(1), pixel_indices: Some(vec![0]), ..ok.clone() };
        assert!(both.validate(4, 3).is_err());
        assert!(AttackSpec { m: Some(0), ..ok.clone() }.validate(4, 3).is_err());
        assert!(AttackSpec { m: Some(5), ..ok.clone() }.validate(4, 3).is_err());
        assert!(AttackSpec { p_err: Some(0.4), ..ok.clone() }.validate(4, 3).is_err());
        assert!(AttackSpec { y_target: Some(3), ..ok.clone() }.validate(4, 3).is_err());
        assert!(AttackSpec { epsilon: 0.0, ..ok.clone() }.validate(4, 3).is_err());
        assert!(AttackSpec { pixel_indices: Some(vec![1, 1]), ..ok }.validate(4, 3).is_err());
    }

    #[test]
    fn bounds_follow_pixel_values() {
        let img = Image::from_vec(vec![0.0, 0.4, 1.0]).unwrap();
        let b = perturbation_bounds(&img, &[2, 1, 0], 0.15).unwrap();
        assert_eq!(b.lower(), &[-0.15, -0.15 * 0.4, -0.0]);
        assert_eq!(b.upper(), &[0.0, 0.15 * 0.6, 0.15]);
    }

    #[test]
    fn applied_perturbation_respects_epsilon_exactly() {
        let img = Image::from_vec(vec![1.0, 0.0, 0.3]).unwrap();
        let adv = apply_perturbation(&img, &[0, 1, 2], &[-0.15, 0.15, 0.0], 0.15);
        for (a, x) in adv.pixels.iter().zip(&img.pixels) {
            assert!((a - x).abs() <= 0.15);
            assert!((0.0..=1.0).contains(a));
        }
        assert_eq!(adv.pixels[2], 0.3);
    }

    #[test]
    fn zero_perturbation_reproduces_prediction() {
        let model = toy();
        let img = Image::from_vec(vec![0.6, 0.5]).unwrap().with_label(0);
        let obj = AdversarialObjective::new(&model, &img, &[0, 1], Loss::new(Some(0), None, None).unwrap(), 100.0, 1.0);
        assert_eq!(obj.probs(&[0.0, 0.0]).unwrap(), model.predict(&img).unwrap());
    }

    #[test]
    fn already_misclassified_returns_unperturbed() {
        let model = toy();
        let img = Image::from_vec(vec![0.2, 0.9]).unwrap().with_label(0);
        let r = generate_adversarial(&model, &img, &AttackSpec::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.adversarial, img);
        assert_eq!(r.l0_norm, 0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn one_pixel_attack_flips_a_near_tie() {
        let model = toy();
        let img = Image::from_vec(vec![0.55, 0.5]).unwrap().with_label(0);
        let spec = AttackSpec {
            m: Some(1),
            swarm: SwarmConfig { particles: 30, max_iterations: 100, ..Default::default() },
            ..Default::default()
        };
        let r = generate_adversarial(&model, &img, &spec).unwrap();
        assert!(r.success, "{r:?}");
        assert_eq!(r.l0_norm, 1);
        assert!(r.linf_norm <= 0.15);
        assert_eq!(r.label_after, 1);
        assert!(success(&model, &r).unwrap());
    }

    #[test]
    fn untargeted_without_label_is_rejected() {
        let model = toy();
        let img = Image::from_vec(vec![0.55, 0.5]).unwrap();
        assert!(matches!(generate_adversarial(&model, &img, &AttackSpec::default()), Err(Error::Input(_))));
        let targeted = AttackSpec { y_target: Some(1), m: Some(2), ..Default::default() };
        assert!(generate_adversarial(&model, &img, &targeted).is_ok());
    }

    #[test]
    fn objective_dispatch_uses_the_selected_loss() {
        let model = toy();
        let img = Image::from_vec(vec![0.6, 0.5]).unwrap().with_label(0);
        let spec = AttackSpec { y_target: Some(1), p_err: Some(0.9), ..Default::default() };
        let v = adversarial_objective(&[0.0], &model, &img, &[1], &spec).unwrap();
        let p = model.predict(&img).unwrap();
        assert!((v - 100.0 * (p.get(1) - 0.9).abs()).abs() < 1e-12);
    }
}
