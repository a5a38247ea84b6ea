//! Reconstruction rules x̂(y).
//!
//! Three built-in estimators cover the linear/nonlinear and
//! denoising/deblurring quadrants: a Wiener filter (linear, any circulant
//! operator), a truncated Neumann-series deblur polynomial (linear), and a
//! pixelwise soft-threshold denoiser (nonlinear, identity operator only).
//! Arbitrary black-box estimators plug in through [`Estimator::from_fn`].
//!
//! Each built-in also exposes the exact divergence of y ↦ A x̂(y), the trace
//! term that risk estimation needs. For the linear estimators that trace is
//! a closed-form sum over the Fourier grid; for soft thresholding it is the
//! count of pixels past the threshold (the estimator is differentiable
//! except on the measure-zero set where |y_i - 0.5| = threshold).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::fft::Fft2;
use crate::image::Image;
use crate::operators::CirculantOperator;

/// Soft-threshold pivot: deviations are shrunk toward mid-gray, not black,
/// because intensities live in [0,1].
const MID_GRAY: f64 = 0.5;

/// Largest accepted Neumann-series truncation degree.
pub const MAX_POLYNOMIAL_DEGREE: usize = 5;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("polynomial degree {0} exceeds the supported maximum {MAX_POLYNOMIAL_DEGREE}")]
    BadDegree(usize),
    #[error("prior power {0} must be positive and finite")]
    BadPriorPower(f64),
    #[error("noise standard deviation {0} must be positive and finite")]
    BadSigma(f64),
    #[error("threshold {0} must be nonnegative and finite")]
    BadThreshold(f64),
    #[error("estimator expects {want_width}x{want_height} images, got {got_width}x{got_height}")]
    DimensionMismatch {
        want_width: usize,
        want_height: usize,
        got_width: usize,
        got_height: usize,
    },
    #[error("estimator {name:?} is only valid with the identity operator")]
    NonIdentityOperator { name: String },
    #[error("estimator {name:?} has no closed-form divergence")]
    NoClosedForm { name: String },
    #[error("imaginary residue {residue:e} exceeds 1e-9 of result norm {norm:e}")]
    ImaginaryResidue { residue: f64, norm: f64 },
}

enum Kind {
    /// x̂(y) = F y with F circulant; `filter` is F's Fourier symbol.
    LinearFilter {
        width: usize,
        height: usize,
        filter: Vec<Complex64>,
        fft: Arc<Fft2>,
    },
    /// Pixelwise shrinkage of |y_i - 0.5| by `threshold`.
    SoftThreshold { threshold: f64 },
    /// Caller-supplied reconstruction with no divergence closed form.
    BlackBox {
        #[allow(clippy::type_complexity)]
        f: Arc<dyn Fn(&Image) -> Image + Send + Sync>,
    },
}

/// A deterministic reconstruction rule, optionally with an exact divergence.
pub struct Estimator {
    name: String,
    kind: Kind,
}

impl std::fmt::Debug for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Estimator")
            .field("name", &self.name)
            .finish()
    }
}

impl Estimator {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Wrap an arbitrary reconstruction function. No exact divergence; risk
    /// estimation must fall back to the stochastic backend.
    pub fn from_fn(
        name: impl Into<String>,
        f: impl Fn(&Image) -> Image + Send + Sync + 'static,
    ) -> Estimator {
        Estimator {
            name: name.into(),
            kind: Kind::BlackBox { f: Arc::new(f) },
        }
    }

    /// Compute x̂(y).
    pub fn reconstruct(&self, y: &Image) -> Result<Image, EstimatorError> {
        match &self.kind {
            Kind::LinearFilter {
                width,
                height,
                filter,
                fft,
            } => {
                if y.width() != *width || y.height() != *height {
                    return Err(EstimatorError::DimensionMismatch {
                        want_width: *width,
                        want_height: *height,
                        got_width: y.width(),
                        got_height: y.height(),
                    });
                }
                let mut spectrum = fft.forward(y.pixels());
                for (c, s) in spectrum.iter_mut().zip(filter) {
                    *c *= *s;
                }
                let (pixels, max_imag) = fft.inverse_real(spectrum);
                let norm = pixels.iter().map(|v| v * v).sum::<f64>().sqrt();
                if max_imag > 1e-9 * norm.max(f64::MIN_POSITIVE) {
                    return Err(EstimatorError::ImaginaryResidue {
                        residue: max_imag,
                        norm,
                    });
                }
                Ok(Image::from_pixels(*width, *height, pixels).expect("shape preserved"))
            }
            Kind::SoftThreshold { threshold } => {
                let pixels = y
                    .pixels()
                    .iter()
                    .map(|&v| {
                        let d = v - MID_GRAY;
                        d.signum() * (d.abs() - threshold).max(0.0) + MID_GRAY
                    })
                    .collect();
                Ok(Image::from_pixels(y.width(), y.height(), pixels).expect("shape preserved"))
            }
            Kind::BlackBox { f } => Ok(f(y)),
        }
    }

    pub fn has_exact_divergence(&self) -> bool {
        !matches!(self.kind, Kind::BlackBox { .. })
    }

    /// Closed-form divergence of y ↦ A x̂(y) at `y`, where A is `op`.
    ///
    /// For a linear x̂ = Fy this is trace(AF) = Σ_k Re(λ_k φ_k), independent
    /// of y. For soft thresholding (valid only with A = identity) it is the
    /// number of pixels whose deviation from mid-gray strictly exceeds the
    /// threshold.
    pub fn exact_divergence(
        &self,
        op: &CirculantOperator,
        y: &Image,
    ) -> Result<f64, EstimatorError> {
        match &self.kind {
            Kind::LinearFilter { filter, .. } => Ok(filter
                .iter()
                .zip(op.symbol())
                .map(|(phi, lambda)| (lambda * phi).re)
                .sum()),
            Kind::SoftThreshold { threshold } => {
                if !op.is_identity() {
                    return Err(EstimatorError::NonIdentityOperator {
                        name: self.name.clone(),
                    });
                }
                Ok(y.pixels()
                    .iter()
                    .filter(|&&v| (v - MID_GRAY).abs() > *threshold)
                    .count() as f64)
            }
            Kind::BlackBox { .. } => Err(EstimatorError::NoClosedForm {
                name: self.name.clone(),
            }),
        }
    }
}

/// Wiener filter for y = Ax + noise under a flat signal prior of power
/// `prior_power`: X̂_k = conj(λ_k) Y_k / (|λ_k|² + sigma²/prior_power).
pub fn wiener_estimator(
    op: &CirculantOperator,
    sigma: f64,
    prior_power: f64,
) -> Result<Estimator, EstimatorError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(EstimatorError::BadSigma(sigma));
    }
    if !(prior_power > 0.0 && prior_power.is_finite()) {
        return Err(EstimatorError::BadPriorPower(prior_power));
    }
    let regularizer = sigma * sigma / prior_power;
    let filter = op
        .symbol()
        .iter()
        .map(|lambda| lambda.conj() / (lambda.norm_sqr() + regularizer))
        .collect();
    Ok(Estimator {
        name: "wiener".to_string(),
        kind: Kind::LinearFilter {
            width: op.width(),
            height: op.height(),
            filter,
            fft: op.fft(),
        },
    })
}

/// Truncated Neumann-series deblur: x̂(y) = p(A) y with
/// p(A) = Σ_{j=0}^{degree} (I - A)^j, the degree-`degree` approximation of
/// A⁻¹. Degree 0 is the identity map.
pub fn polynomial_deblur_estimator(
    op: &CirculantOperator,
    degree: usize,
) -> Result<Estimator, EstimatorError> {
    if degree > MAX_POLYNOMIAL_DEGREE {
        return Err(EstimatorError::BadDegree(degree));
    }
    let one = Complex64::new(1.0, 0.0);
    let filter = op
        .symbol()
        .iter()
        .map(|lambda| {
            // Horner form of Σ_{j=0}^{degree} (1-λ)^j.
            let mut p = one;
            for _ in 0..degree {
                p = one + (one - lambda) * p;
            }
            p
        })
        .collect();
    Ok(Estimator {
        name: format!("polynomial_deblur(degree={degree})"),
        kind: Kind::LinearFilter {
            width: op.width(),
            height: op.height(),
            filter,
            fft: op.fft(),
        },
    })
}

/// Pixelwise soft shrinkage of deviations from mid-gray. Nonlinear,
/// 1-Lipschitz, valid only for pure denoising (A = identity).
pub fn soft_threshold_denoiser(threshold: f64) -> Result<Estimator, EstimatorError> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(EstimatorError::BadThreshold(threshold));
    }
    Ok(Estimator {
        name: format!("soft_threshold(t={threshold})"),
        kind: Kind::SoftThreshold { threshold },
    })
}
