//! Manifold-based first-order influence (mFI).
//!
//! For a perturbation `w` of selected input coordinates, with
//! `l_y(w) = log P(y | x + w)` and an objective `f(w) = -log P(c | x + w)`,
//! the metric tensor at `w = 0` is
//!
//! ```text
//! G = sum_y P(y) * grad l_y * grad l_y^T = L^T D L
//! ```
//!
//! where `L` is the `K x m` log-probability Jacobian and `D = diag(P)`. The
//! influence is `g^T G^+ g` with `g = grad f` and `G^+` the Moore-Penrose
//! pseudoinverse. Because `sum_y P(y) grad l_y = 0`, `G` has rank at most
//! `K - 1`, so image-level scores never materialise the `p x p` metric: they
//! go through the `K x K` Gram matrix of `A = D^{1/2} L` instead.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::classifier::{select_columns, validate_coords, ClassifierModel, ProbVector};
use crate::error::{Error, Result};
use crate::image::Image;

/// Relative cutoff on metric singular values: `s_j` is kept iff
/// `s_j > RANK_TOLERANCE * s_max`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Which class's negative log-probability is the objective `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Objective {
    /// `f = -log P(y_true | x + w)`.
    Untargeted(usize),
    /// `f = -log P(y_target | x + w)`.
    Targeted(usize),
}

impl Objective {
    /// The per-pixel objective used for pixel selection: targeted when a
    /// target is given, otherwise anchored on the true label.
    pub fn for_pixel_selection(y_true: Option<usize>, y_target: Option<usize>) -> Result<Self> {
        match (y_target, y_true) {
            (Some(t), _) => Ok(Objective::Targeted(t)),
            (None, Some(y)) => Ok(Objective::Untargeted(y)),
            (None, None) => Err(Error::input("an untargeted mFI map needs the true label")),
        }
    }

    pub fn class(self) -> usize {
        match self {
            Objective::Untargeted(c) | Objective::Targeted(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub coords: Vec<usize>,
    pub objective: Objective,
}

impl PerturbationSpec {
    pub fn new(coords: Vec<usize>, objective: Objective) -> Self {
        Self { coords, objective }
    }

    /// Every coordinate of a `p`-dimensional image.
    pub fn all(p: usize, objective: Objective) -> Self {
        Self::new((0..p).collect(), objective)
    }

    fn validate(&self, model: &ClassifierModel) -> Result<()> {
        validate_coords(&self.coords, model.input_dim())?;
        if self.objective.class() >= model.num_classes() {
            return Err(Error::input(format!(
                "objective class {} out of range for {} classes",
                self.objective.class(),
                model.num_classes()
            )));
        }
        Ok(())
    }
}

/// A symmetric PSD metric with its compact decomposition `G = U0 diag(L0) U0^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub matrix: DMatrix<f64>,
    /// `m x r0`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// `r0` retained positive singular values, descending.
    pub values: DVector<f64>,
    /// Smallest eigenvalue of the full matrix (PSD diagnostic).
    pub min_eigenvalue: f64,
}

impl MetricTensor {
    /// Decomposes a symmetric matrix, retaining singular values above the
    /// relative [`RANK_TOLERANCE`]. Diagonal inputs are decomposed exactly.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || matrix.ncols() != m {
            return Err(Error::input("metric tensor must be a nonempty square matrix"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("metric tensor has non-finite entries".into()));
        }

        let mut pairs: Vec<(f64, DVector<f64>)> = if is_diagonal(&matrix) {
            (0..m)
                .map(|i| {
                    let mut e = DVector::zeros(m);
                    e[i] = 1.0;
                    (matrix[(i, i)], e)
                })
                .collect()
        } else {
            let eig = SymmetricEigen::new(matrix.clone());
            eig.eigenvalues
                .iter()
                .zip(eig.eigenvectors.column_iter())
                .map(|(&v, col)| (v, col.into_owned()))
                .collect()
        };
        // Stable sort keeps index order among equal eigenvalues.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let min_eigenvalue = pairs.last().map_or(0.0, |p| p.0);
        let max = pairs.first().map_or(0.0, |p| p.0).max(0.0);
        let kept: Vec<&(f64, DVector<f64>)> = pairs
            .iter()
            .filter(|(v, _)| *v > 0.0 && *v > RANK_TOLERANCE * max)
            .collect();
        let basis = DMatrix::from_fn(m, kept.len(), |r, c| kept[c].1[r]);
        let values = DVector::from_iterator(kept.len(), kept.iter().map(|p| p.0));
        Ok(Self {
            matrix,
            basis,
            values,
            min_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Numerical rank `r0`.
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `g^T G^+ g` through the compact decomposition.
    pub fn influence(&self, gradient: &[f64]) -> Result<f64> {
        self.check_len(gradient.len())?;
        let g = DVector::from_column_slice(gradient);
        let proj = self.basis.tr_mul(&g);
        Ok(proj.iter().zip(self.values.iter()).map(|(c, s)| c * c / s).sum())
    }

    /// Intrinsic coordinates `v = L0^{1/2} U0^T w`.
    pub fn intrinsic_transform(&self, omega: &[f64]) -> Result<Vec<f64>> {
        self.check_len(omega.len())?;
        let w = DVector::from_column_slice(omega);
        let proj = self.basis.tr_mul(&w);
        Ok(proj.iter().zip(self.values.iter()).map(|(c, s)| c * s.sqrt()).collect())
    }

    /// Inverse of [`Self::intrinsic_transform`] on the row space:
    /// `w = U0 L0^{-1/2} v`.
    pub fn from_intrinsic(&self, nu: &[f64]) -> Result<Vec<f64>> {
        if nu.len() != self.rank() {
            return Err(Error::input(format!(
                "intrinsic vector has length {}, metric rank is {}",
                nu.len(),
                self.rank()
            )));
        }
        let scaled = DVector::from_iterator(nu.len(), nu.iter().zip(self.values.iter()).map(|(v, s)| v / s.sqrt()));
        Ok((&self.basis * scaled).iter().copied().collect())
    }

    /// Gradient of `f` with respect to the intrinsic coordinates,
    /// `L0^{-1/2} U0^T g`; its squared norm is the influence.
    pub fn intrinsic_gradient(&self, gradient: &[f64]) -> Result<Vec<f64>> {
        self.check_len(gradient.len())?;
        let g = DVector::from_column_slice(gradient);
        let proj = self.basis.tr_mul(&g);
        Ok(proj.iter().zip(self.values.iter()).map(|(c, s)| c / s.sqrt()).collect())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::input(format!("vector has length {n}, metric is {0}x{0}", self.dim())));
        }
        Ok(())
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == 0.0))
}

/// `L^T diag(P) L` for a `K x m` log-probability Jacobian.
pub fn metric_from_jacobian(jac: &DMatrix<f64>, probs: &[f64]) -> DMatrix<f64> {
    let weighted = DMatrix::from_fn(jac.nrows(), jac.ncols(), |r, c| jac[(r, c)] * probs[r]);
    let g = jac.tr_mul(&weighted);
    // exact symmetry for the eigensolver
    DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| 0.5 * (g[(r, c)] + g[(c, r)]))
}

/// Gradient of the objective `-log P(c)`: the negated Jacobian row `c`.
fn objective_gradient(jac: &DMatrix<f64>, objective: Objective) -> Vec<f64> {
    jac.row(objective.class()).iter().map(|v| -v).collect()
}

pub fn metric_tensor(model: &ClassifierModel, image: &Image, spec: &PerturbationSpec) -> Result<MetricTensor> {
    spec.validate(model)?;
    let (probs, full) = model.logprob_jacobian_full(image)?;
    let jac = select_columns(&full, &spec.coords);
    MetricTensor::from_matrix(metric_from_jacobian(&jac, probs.as_slice()))
}

/// Objective gradient `grad f` at `w = 0` for the given spec.
pub fn objective_gradient_at(model: &ClassifierModel, image: &Image, spec: &PerturbationSpec) -> Result<Vec<f64>> {
    spec.validate(model)?;
    let jac = model.logprob_jacobian(image, &spec.coords)?;
    Ok(objective_gradient(&jac, spec.objective))
}

/// Influence from a log-probability Jacobian without forming the `m x m`
/// metric: with `A = D^{1/2} L` and `A A^T = V diag(s) V^T`,
/// `g^T G^+ g = sum_j (v_j^T A g)^2 / s_j^2` over retained `s_j`.
pub fn influence_from_jacobian(jac: &DMatrix<f64>, probs: &ProbVector, objective: Objective) -> Result<f64> {
    let k = jac.nrows();
    let a = DMatrix::from_fn(k, jac.ncols(), |r, c| probs.get(r).sqrt() * jac[(r, c)]);
    let g = DVector::from_vec(objective_gradient(jac, objective));
    let ag = &a * g;
    let gram = &a * a.transpose();
    let gram = DMatrix::from_fn(k, k, |r, c| 0.5 * (gram[(r, c)] + gram[(c, r)]));
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut total = 0.0;
    for (j, &s) in eig.eigenvalues.iter().enumerate() {
        if s > 0.0 && s > RANK_TOLERANCE * max {
            let c = eig.eigenvectors.column(j).dot(&ag);
            total += (c / s) * (c / s);
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "influence evaluated to {total} (objective class {}, {} coordinates)",
            objective.class(),
            jac.ncols()
        )));
    }
    Ok(total)
}

/// The mFI of `spec.objective` for an additive perturbation of `spec.coords`.
pub fn mfi(model: &ClassifierModel, image: &Image, spec: &PerturbationSpec) -> Result<f64> {
    spec.validate(model)?;
    let (probs, full) = model.logprob_jacobian_full(image)?;
    let jac = select_columns(&full, &spec.coords);
    influence_from_jacobian(&jac, &probs, spec.objective)
}

/// Image-level mFI: all coordinates perturbed, objective `-log P(y_true)`.
pub fn image_mfi(model: &ClassifierModel, image: &Image) -> Result<f64> {
    let y = image
        .label
        .ok_or_else(|| Error::input("image-level mFI needs the true label"))?;
    image_mfi_for(model, image, Objective::Untargeted(y))
}

pub fn image_mfi_for(model: &ClassifierModel, image: &Image, objective: Objective) -> Result<f64> {
    if objective.class() >= model.num_classes() {
        return Err(Error::input(format!("class {} out of range", objective.class())));
    }
    let (probs, full) = model.logprob_jacobian_full(image)?;
    influence_from_jacobian(&full, &probs, objective)
}

/// Per-coordinate vulnerability map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfiMap {
    pub values: Vec<f64>,
    pub objective: Objective,
}

impl MfiMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of coordinates whose value is at least `threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }

    /// The `q`-quantile of this map's values.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile(&self.values, q)
    }
}

/// Linearly interpolated `q`-quantile (`q` in `[0, 1]`) of finite values.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::input("quantile of an empty set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::input(format!("quantile level {q} must be in [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("quantile of non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Single-coordinate mFI for every pixel. For one coordinate the metric is
/// the scalar `G_i = sum_y P(y) (d l_y / d x_i)^2`, so each entry is
/// `(d f / d x_i)^2 / G_i`, or 0 when `G_i` vanishes.
pub fn pixel_mfi_map(model: &ClassifierModel, image: &Image, y_target: Option<usize>) -> Result<MfiMap> {
    let objective = Objective::for_pixel_selection(image.label, y_target)?;
    if objective.class() >= model.num_classes() {
        return Err(Error::input(format!("class {} out of range", objective.class())));
    }
    let (probs, jac) = model.logprob_jacobian_full(image)?;
    let c = objective.class();
    let values = (0..jac.ncols())
        .map(|i| {
            let metric: f64 = (0..jac.nrows()).map(|y| probs.get(y) * jac[(y, i)] * jac[(y, i)]).sum();
            if metric > 0.0 {
                jac[(c, i)] * jac[(c, i)] / metric
            } else {
                0.0
            }
        })
        .collect::<Vec<f64>>();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("pixel {i} has a non-finite mFI value")));
    }
    Ok(MfiMap { values, objective })
}

/// Indices of the `m` largest map values in descending order; ties go to
/// the lower index.
pub fn top_m_pixels(map: &MfiMap, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > map.len() {
        return Err(Error::input(format!("m = {m} must be in 1..={}", map.len())));
    }
    let mut order: Vec<usize> = (0..map.len()).collect();
    order.sort_by(|&a, &b| map.values[b].total_cmp(&map.values[a]).then(a.cmp(&b)));
    order.truncate(m);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f64>) -> MfiMap {
        MfiMap {
            values,
            objective: Objective::Untargeted(0),
        }
    }

    #[test]
    fn top_m_orders_and_breaks_ties() {
        assert_eq!(top_m_pixels(&map(vec![0.5, 0.1, 0.9]), 2).unwrap(), vec![2, 0]);
        assert_eq!(top_m_pixels(&map(vec![0.3; 5]), 3).unwrap(), vec![0, 1, 2]);
        let mut all = top_m_pixels(&map(vec![0.2, 0.7, 0.1, 0.7]), 4).unwrap();
        assert_eq!(all, vec![1, 3, 0, 2]);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(top_m_pixels(&map(vec![1.0]), 0).is_err());
        assert!(top_m_pixels(&map(vec![1.0]), 2).is_err());
    }

    #[test]
    fn identity_metric_reduces_to_squared_norm() {
        let metric = MetricTensor::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let g = [0.3, -1.7, 2.25, 1e-3];
        let norm2: f64 = g.iter().map(|v| v * v).sum();
        assert_eq!(metric.influence(&g).unwrap(), norm2);
    }

    #[test]
    fn zero_metric_has_zero_rank_and_influence() {
        let metric = MetricTensor::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(metric.rank(), 0);
        assert_eq!(metric.influence(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(metric.intrinsic_transform(&[1.0, 0.0, 0.0]).unwrap().is_empty());
    }

    #[test]
    fn constant_classifier_is_flat() {
        let model = ClassifierModel::constant(5, 3).unwrap();
        let img = Image::from_vec(vec![0.2, 0.4, 0.6, 0.8, 1.0]).unwrap().with_label(1);
        let spec = PerturbationSpec::all(5, Objective::Untargeted(1));
        let g = metric_tensor(&model, &img, &spec).unwrap();
        assert_eq!(g.rank(), 0);
        assert!(g.matrix.iter().all(|&v| v == 0.0));
        assert_eq!(mfi(&model, &img, &spec).unwrap(), 0.0);
        assert_eq!(image_mfi(&model, &img).unwrap(), 0.0);
        assert!(pixel_mfi_map(&model, &img, None).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untargeted_map_requires_label() {
        let model = ClassifierModel::constant(2, 2).unwrap();
        let img = Image::from_vec(vec![0.2, 0.4]).unwrap();
        assert!(matches!(pixel_mfi_map(&model, &img, None), Err(Error::Input(_))));
        assert!(pixel_mfi_map(&model, &img, Some(1)).is_ok());
        assert!(image_mfi(&model, &img).is_err());
    }
}
