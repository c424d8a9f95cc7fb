//! Adversarial image generation driven by a manifold-based first-order
//! influence measure (mFI) and a box-constrained particle swarm optimizer.
//!
//! The pipeline is:
//!
//! 1. [`classifier`]: a small softmax network with exact log-probability
//!    Jacobians with respect to its input pixels.
//! 2. [`mfi`]: the metric tensor of the perturbation manifold, its compact
//!    decomposition, and the influence measure built from its pseudoinverse.
//! 3. [`pso`]: a seeded, deterministic particle swarm optimizer.
//! 4. [`adversary`]: loss functions, single-image attacks, and dataset-level
//!    attack generation.
//! 5. [`data`] and [`report`]: ingestion and emission of datasets, tables,
//!    heatmaps and result records.
//!
//! The [`cli`] module backs the `mfi-pso` binary.

pub mod adversary;
pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod image;
pub mod mfi;
pub mod pso;
pub mod report;

pub use crate::error::{Error, Result};
pub use crate::image::Image;
