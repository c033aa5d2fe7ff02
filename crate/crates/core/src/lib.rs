//! Riemannian geometry of the noise space of a small diffusion model.
//!
//! The crate trains an MLP noise predictor on a synthetic C-shaped 2D
//! distribution, maps samples into the noise space by deterministic DDIM
//! inversion, and interpolates there along geodesics of the pullback metric
//! `G = J^T J` of the score Jacobian. Linear, spherical and density-weighted
//! conformal interpolation are provided as baselines, together with the
//! harness that compares them by the spread of the data density along each
//! decoded path.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
