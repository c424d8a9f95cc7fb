//! Box-constrained particle swarm optimization.
//!
//! Each iteration moves every particle with
//!
//! ```text
//! v <- w v + c1 r1 (p_best - x) + c2 r2 (g_best - x)
//! x <- x + v
//! ```
//!
//! then clamps velocity and position, evaluates the objective at every new
//! position and refreshes personal and global bests. All random draws for an
//! iteration are taken in particle order before any objective call, so
//! results do not depend on whether evaluation runs in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Per-dimension velocity limit as a fraction of the box width.
    pub velocity_clamp: f64,
    /// Minimum global-best improvement that resets the patience counter.
    pub tolerance: f64,
    pub patience: usize,
    /// Draw `r1`, `r2` per dimension; `false` draws one scalar pair per particle.
    pub per_dimension_random: bool,
    /// Evaluate the particles of an iteration on the rayon pool.
    pub parallel: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 200,
            max_iterations: 500,
            inertia: 0.6,
            cognitive: 2.0,
            social: 2.0,
            seed: 0,
            velocity_clamp: 0.5,
            tolerance: 1e-8,
            patience: 20,
            per_dimension_random: true,
            parallel: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.max_iterations == 0 {
            return Err(Error::input("particle count and iteration limit must be positive"));
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(Error::input(format!("inertia {} must lie in (0, 1)", self.inertia)));
        }
        if !(self.cognitive > 0.0 && self.social > 0.0) {
            return Err(Error::input("acceleration coefficients must be positive"));
        }
        if !(self.velocity_clamp > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::input("velocity clamp must be positive and tolerance nonnegative"));
        }
        Ok(())
    }
}

/// Per-dimension closed intervals `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::input("bounds need matching, nonempty lower and upper vectors"));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::input(format!("invalid interval [{lo}, {hi}] in dimension {j}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    /// True when every interval is a single point.
    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwarmState {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub personal_best: Vec<Vec<f64>>,
    pub personal_best_values: Vec<f64>,
    pub global_best: Vec<f64>,
    pub global_best_value: f64,
    /// Completed update steps; 0 right after initialization.
    pub iteration: usize,
    bounds: Bounds,
    config: SwarmConfig,
    rng: ChaCha8Rng,
}

fn evaluate<F>(objective: &F, positions: &[Vec<f64>], parallel: bool, iteration: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = if parallel {
        positions.par_iter().map(|x| objective(x)).collect()
    } else {
        positions.iter().map(|x| objective(x)).collect()
    };
    match values.iter().position(|v| !v.is_finite()) {
        Some(particle) => Err(Error::NonFiniteObjective { particle, iteration }),
        None => Ok(values),
    }
}

impl SwarmState {
    /// Places particles uniformly in the box (particle 0 at `anchor` when it
    /// is feasible), zeroes velocities and evaluates the starting positions.
    pub fn initialize<F>(bounds: &Bounds, config: &SwarmConfig, anchor: Option<&[f64]>, objective: &F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dim = bounds.dim();
        let mut positions: Vec<Vec<f64>> = (0..config.particles)
            .map(|_| {
                bounds
                    .lower
                    .iter()
                    .zip(&bounds.upper)
                    .map(|(&lo, &hi)| {
                        let u: f64 = rng.gen();
                        (lo + u * (hi - lo)).clamp(lo, hi)
                    })
                    .collect()
            })
            .collect();
        if let Some(a) = anchor {
            if bounds.contains(a) {
                positions[0] = a.to_vec();
            } else {
                log::warn!("swarm anchor lies outside the bounds and is ignored");
            }
        }
        let values = evaluate(objective, &positions, config.parallel, 0)?;
        let best = argmin(&values);
        Ok(Self {
            velocities: vec![vec![0.0; dim]; config.particles],
            personal_best: positions.clone(),
            personal_best_values: values.clone(),
            global_best: positions[best].clone(),
            global_best_value: values[best],
            positions,
            iteration: 0,
            bounds: bounds.clone(),
            config: config.clone(),
            rng,
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// One synchronous update of all particles.
    pub fn step<F>(&mut self, objective: &F) -> Result<()>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let cfg = &self.config;
        let dim = self.bounds.dim();
        let n_draws = if cfg.per_dimension_random { dim } else { 1 };
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.particles)
            .map(|_| {
                let r1 = (0..n_draws).map(|_| self.rng.gen::<f64>()).collect();
                let r2 = (0..n_draws).map(|_| self.rng.gen::<f64>()).collect();
                (r1, r2)
            })
            .collect();

        for (i, (r1, r2)) in draws.iter().enumerate() {
            let x = &mut self.positions[i];
            let v = &mut self.velocities[i];
            let pb = &self.personal_best[i];
            for j in 0..dim {
                let (a, b) = if cfg.per_dimension_random { (r1[j], r2[j]) } else { (r1[0], r2[0]) };
                let limit = cfg.velocity_clamp * (self.bounds.upper[j] - self.bounds.lower[j]);
                let vj = cfg.inertia * v[j]
                    + cfg.cognitive * a * (pb[j] - x[j])
                    + cfg.social * b * (self.global_best[j] - x[j]);
                v[j] = vj.clamp(-limit, limit);
                x[j] += v[j];
            }
            self.bounds.clamp(x);
        }

        self.iteration += 1;
        let values = evaluate(objective, &self.positions, cfg.parallel, self.iteration)?;
        for (i, &val) in values.iter().enumerate() {
            if val < self.personal_best_values[i] {
                self.personal_best_values[i] = val;
                self.personal_best[i].clone_from(&self.positions[i]);
            }
        }
        let best = argmin(&self.personal_best_values);
        if self.personal_best_values[best] < self.global_best_value {
            self.global_best_value = self.personal_best_values[best];
            self.global_best.clone_from(&self.personal_best[best]);
        }
        Ok(())
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub position: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Global-best value after initialization, then after every iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Minimizes `objective` over `bounds`. Stops after `max_iterations` steps or
/// once the global best has improved by less than `tolerance` for `patience`
/// consecutive steps.
pub fn optimize<F>(objective: F, bounds: &Bounds, config: &SwarmConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_from(objective, bounds, config, None)
}

/// [`optimize`] with an optional starting point for particle 0.
pub fn optimize_from<F>(objective: F, bounds: &Bounds, config: &SwarmConfig, anchor: Option<&[f64]>) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_gated(objective, bounds, config, anchor, |_: &[f64]| true)
}

/// Like [`optimize_from`], but stalled iterations only count towards
/// convergence while `ready(global_best)` holds.
pub fn optimize_gated<F, G>(
    objective: F,
    bounds: &Bounds,
    config: &SwarmConfig,
    anchor: Option<&[f64]>,
    ready: G,
) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> bool,
{
    let mut state = SwarmState::initialize(bounds, config, anchor, &objective)?;
    let mut trace = Vec::with_capacity(config.max_iterations.min(1 << 16) + 1);
    trace.push(state.global_best_value);
    let mut stalled = 0usize;
    let mut converged = false;
    while state.iteration < config.max_iterations {
        let before = state.global_best_value;
        state.step(&objective)?;
        trace.push(state.global_best_value);
        if bounds.is_point() {
            converged = true;
            break;
        }
        if before - state.global_best_value < config.tolerance && ready(&state.global_best) {
            stalled += 1;
            if stalled >= config.patience {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(Optimum {
        position: state.global_best,
        value: state.global_best_value,
        iterations: state.iteration,
        trace,
        converged,
    })
}
