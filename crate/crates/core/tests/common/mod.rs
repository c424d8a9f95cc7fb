//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's metric or influence code.
#![allow(dead_code)]

use mfi_pso::classifier::{Activation, ClassifierModel, ModelSpec};
use mfi_pso::Image;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

/// A random tanh MLP with `k` classes and a random image in `[0.1, 0.9]`.
pub fn random_case<R: Rng>(rng: &mut R, k: usize) -> (ClassifierModel, Image) {
    let side = rng.gen_range(2..=4);
    let channels = if rng.gen_bool(0.5) { 1 } else { 3 };
    let p = side * side * channels;
    let hidden = match rng.gen_range(0..3) {
        0 => vec![],
        1 => vec![rng.gen_range(3..=12)],
        _ => vec![rng.gen_range(3..=8), rng.gen_range(3..=8)],
    };
    let spec = ModelSpec { hidden, activation: Activation::Tanh };
    let model = ClassifierModel::random(&spec, p, k, rng).unwrap();
    let pixels = (0..p).map(|_| rng.gen_range(0.1..0.9)).collect();
    (model, Image::new(pixels, side, side, channels).unwrap())
}

/// `log P(y | pixels)` for every class, straight from the forward pass.
pub fn log_probs(model: &ClassifierModel, pixels: &[f64]) -> Vec<f64> {
    model.predict_pixels(pixels).unwrap().as_slice().iter().map(|p| p.ln()).collect()
}

/// Central finite-difference Jacobian of the log-probabilities (K x p).
pub fn fd_jacobian(model: &ClassifierModel, image: &Image, h: f64) -> DMatrix<f64> {
    let p = image.len();
    let k = model.num_classes();
    let mut jac = DMatrix::zeros(k, p);
    let mut x = image.pixels.clone();
    for i in 0..p {
        let orig = x[i];
        x[i] = orig + h;
        let up = log_probs(model, &x);
        x[i] = orig - h;
        let down = log_probs(model, &x);
        x[i] = orig;
        for y in 0..k {
            jac[(y, i)] = (up[y] - down[y]) / (2.0 * h);
        }
    }
    jac
}

/// `G = sum_y P(y) l_y l_y^T` by explicit outer products.
pub fn dense_metric(jac: &DMatrix<f64>, probs: &[f64]) -> DMatrix<f64> {
    let m = jac.ncols();
    let mut g = DMatrix::zeros(m, m);
    for (y, &p) in probs.iter().enumerate() {
        for r in 0..m {
            for c in 0..m {
                g[(r, c)] += p * jac[(y, r)] * jac[(y, c)];
            }
        }
    }
    g
}

/// Moore-Penrose pseudoinverse of a symmetric matrix from its full
/// eigendecomposition, dropping eigenvalues below `rel_tol * |lambda|_max`.
/// (An SVD-based pseudoinverse was measured to lose ~1e-5 relative accuracy
/// on rank-deficient metrics, so the symmetric solver is used.)
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.amax();
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rel_tol * max && l > 0.0 {
            let v = eig.eigenvectors.column(j);
            out += v * v.transpose() / l;
        }
    }
    out
}

/// `g^T G^+ g` with `g` the gradient of `-log P(class)`, via the dense
/// pseudoinverse of the explicitly formed metric.
pub fn dense_mfi(jac: &DMatrix<f64>, probs: &[f64], class: usize) -> f64 {
    let g = -jac.row(class).transpose();
    let gp = pinv(&dense_metric(jac, probs), 1e-10);
    (g.transpose() * gp * &g)[(0, 0)]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Distinct random coordinates out of `p`.
pub fn random_coords<R: Rng>(rng: &mut R, p: usize, m: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, p, m).into_vec()
}
