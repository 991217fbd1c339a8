//! Geometry-aware training for conditional generative models, with a
//! Riemannian evaluation suite that verifies the geometric claims on
//! synthetic multimodal tasks.
//!
//! The crate is organized bottom-up:
//! - [`numerics`]: matrices, deterministic RNG, reverse-mode autodiff,
//!   finite-difference oracles;
//! - [`linalg`]: random projection, series log-determinant, hyper-power
//!   inverse, spectral radius;
//! - [`models`]: generator / discriminator MLPs with exact Jacobians;
//! - [`geometry`]: pullback metrics, geodesic integration and shooting,
//!   curve lengths, bi-lipschitz diagnostics;
//! - [`losses`]: adversarial, reconstruction, curve-length and
//!   moment-matching KL losses plus ablation variants;
//! - [`data`]: synthetic conditional datasets with analytic ground truth;
//! - [`training`]: the two-phase training loop and Adam;
//! - [`evaluation`]: experiment protocols (median/mean convergence,
//!   geodesic sweeps, interpolation velocity, mode coverage, ablations);
//! - [`config`], [`checkpoint`], [`runlog`], [`driver`]: run configuration,
//!   persistence and the CLI-facing entry points.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod driver;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod runlog;
pub mod training;

pub use error::{Error, Result};
