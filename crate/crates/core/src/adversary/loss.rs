//! Misclassification losses `f0` and the success predicate.

use serde::{Deserialize, Serialize};

use crate::classifier::ProbVector;

/// `|P(y1) - P(y2)|` while the top class is still `y_true`, else 0.
pub fn f0_untargeted(probs: &ProbVector, y_true: usize) -> f64 {
    let (y1, y2) = probs.top2();
    if y1 == y_true {
        (probs.get(y1) - probs.get(y2)).abs()
    } else {
        0.0
    }
}

/// Drives the most probable wrong class to probability `p_err`:
/// `|P(y2) - p_err|` while `y1 = y_true`, else `|P(y1) - p_err|`.
pub fn f0_perr(probs: &ProbVector, y_true: usize, p_err: f64) -> f64 {
    let (y1, y2) = probs.top2();
    if y1 == y_true {
        (probs.get(y2) - p_err).abs()
    } else {
        (probs.get(y1) - p_err).abs()
    }
}

/// `|P(y1) - P(y_target)|` until the target is the top class, then 0.
pub fn f0_targeted(probs: &ProbVector, y_target: usize) -> f64 {
    let y1 = probs.argmax();
    if y1 == y_target {
        0.0
    } else {
        (probs.get(y1) - probs.get(y_target)).abs()
    }
}

/// `|P(y_target) - p_err|`.
pub fn f0_targeted_perr(probs: &ProbVector, y_target: usize, p_err: f64) -> f64 {
    (probs.get(y_target) - p_err).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Untargeted,
    MisclassificationProbability,
    Targeted,
    TargetedProbability,
}

impl LossKind {
    pub fn select(p_err: Option<f64>, y_target: Option<usize>) -> Self {
        match (p_err.is_some(), y_target.is_some()) {
            (false, false) => LossKind::Untargeted,
            (true, false) => LossKind::MisclassificationProbability,
            (false, true) => LossKind::Targeted,
            (true, true) => LossKind::TargetedProbability,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Untargeted => "untargeted",
            LossKind::MisclassificationProbability => "p_err",
            LossKind::Targeted => "targeted",
            LossKind::TargetedProbability => "targeted_p_err",
        }
    }
}

/// A resolved loss: which `f0` variant and the classes it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub kind: LossKind,
    pub y_true: Option<usize>,
    pub y_target: Option<usize>,
    pub p_err: Option<f64>,
}

impl Loss {
    /// Exactly one variant is active; untargeted variants need `y_true`.
    pub fn new(y_true: Option<usize>, y_target: Option<usize>, p_err: Option<f64>) -> Option<Self> {
        let kind = LossKind::select(p_err, y_target);
        if y_target.is_none() && y_true.is_none() {
            return None;
        }
        Some(Self {
            kind,
            y_true,
            y_target,
            p_err,
        })
    }

    pub fn eval(&self, probs: &ProbVector) -> f64 {
        // Fields are guaranteed by `new` for the selected kind.
        match self.kind {
            LossKind::Untargeted => f0_untargeted(probs, self.y_true.unwrap()),
            LossKind::MisclassificationProbability => f0_perr(probs, self.y_true.unwrap(), self.p_err.unwrap()),
            LossKind::Targeted => f0_targeted(probs, self.y_target.unwrap()),
            LossKind::TargetedProbability => f0_targeted_perr(probs, self.y_target.unwrap(), self.p_err.unwrap()),
        }
    }
}

/// What counts as a successful attack:
/// untargeted means `argmax != y_true`, targeted means `argmax == y_target`,
/// and with `p_err` additionally `|P(argmax) - p_err| <= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessCriteria {
    pub y_true: Option<usize>,
    pub y_target: Option<usize>,
    pub p_err: Option<f64>,
    pub delta: f64,
}

impl SuccessCriteria {
    pub fn holds(&self, probs: &ProbVector) -> bool {
        let top = probs.argmax();
        let class_ok = match (self.y_target, self.y_true) {
            (Some(t), _) => top == t,
            (None, Some(y)) => top != y,
            (None, None) => false,
        };
        class_ok && self.p_err.map_or(true, |p| (probs.get(top) - p).abs() <= self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn untargeted_examples() {
        assert!(close(f0_untargeted(&pv(&[0.6, 0.4]), 0), 0.2));
        assert_eq!(f0_untargeted(&pv(&[0.4, 0.6]), 0), 0.0);
        let third = 1.0 / 3.0;
        assert_eq!(f0_untargeted(&pv(&[third, third, 1.0 - 2.0 * third]), 0), 0.0);
    }

    #[test]
    fn perr_examples() {
        assert!(close(f0_perr(&pv(&[0.7, 0.3]), 0, 0.75), 0.45));
        assert_eq!(f0_perr(&pv(&[0.25, 0.75]), 0, 0.75), 0.0);
        assert!(close(f0_perr(&pv(&[0.1, 0.9]), 0, 0.5), 0.4));
    }

    #[test]
    fn targeted_examples() {
        assert!(close(f0_targeted(&pv(&[0.5, 0.3, 0.2]), 2), 0.3));
        assert_eq!(f0_targeted(&pv(&[0.2, 0.3, 0.5]), 2), 0.0);
        assert!(close(f0_targeted(&pv(&[0.34, 0.33, 0.33]), 1), 0.01));
    }

    #[test]
    fn targeted_perr_examples() {
        assert_eq!(f0_targeted_perr(&pv(&[0.2, 0.8]), 1, 0.8), 0.0);
        assert!(close(f0_targeted_perr(&pv(&[0.6, 0.4]), 1, 0.9), 0.5));
        assert!(close(f0_targeted_perr(&pv(&[0.25; 4]), 3, 0.75), 0.5));
    }

    #[test]
    fn loss_selection_is_exclusive() {
        assert_eq!(LossKind::select(None, None), LossKind::Untargeted);
        assert_eq!(LossKind::select(Some(0.8), None), LossKind::MisclassificationProbability);
        assert_eq!(LossKind::select(None, Some(2)), LossKind::Targeted);
        assert_eq!(LossKind::select(Some(0.9), Some(2)), LossKind::TargetedProbability);
        assert_eq!(LossKind::TargetedProbability.name(), "targeted_p_err");
        assert!(Loss::new(None, None, Some(0.6)).is_none());
    }

    #[test]
    fn success_predicates() {
        let untargeted = SuccessCriteria { y_true: Some(0), y_target: None, p_err: None, delta: 0.05 };
        assert!(untargeted.holds(&pv(&[0.4, 0.6])));
        assert!(!untargeted.holds(&pv(&[0.6, 0.4])));
        let banded = SuccessCriteria { p_err: Some(0.75), ..untargeted };
        assert!(banded.holds(&pv(&[0.22, 0.78])));
        assert!(!banded.holds(&pv(&[0.1, 0.9])));
        let targeted = SuccessCriteria { y_true: Some(0), y_target: Some(2), p_err: None, delta: 0.05 };
        assert!(targeted.holds(&pv(&[0.1, 0.3, 0.6])));
        assert!(!targeted.holds(&pv(&[0.1, 0.6, 0.3])));
    }
}
