//! Conformal prediction sets for linear Gaussian imaging inverse problems.
//!
//! Given measurements `y = A x + noise` with a known circulant operator `A`
//! and known Gaussian noise level, this crate calibrates prediction sets for
//! the reconstruction error of an estimator in two ways: the supervised route
//! scores held-out ground-truth images, and the self-supervised route scores
//! the same measurements with Stein's unbiased risk estimate, which needs no
//! ground truth at all. The experiment harness runs both on synthetic data so
//! the resulting coverage curves can be compared.

pub mod config;
pub mod conformal;
pub mod estimators;
mod fft;
pub mod formats;
pub mod harness;
pub mod image;
pub mod operators;
pub mod plot;
pub mod rng;
pub mod sure;
pub mod synth;

pub use rustfft::num_complex::Complex64;

pub use image::{Image, ImageError};
pub use rng::{GaussianRng, RngSeed};
