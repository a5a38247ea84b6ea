//! Synthetic test images: smooth Gaussian random fields.
//!
//! White noise is low-pass filtered in the Fourier domain with a Gaussian
//! transfer function whose width is set by `correlation_length` (pixels),
//! then affinely rescaled so the minimum is exactly 0.0 and the maximum
//! exactly 1.0. The result is a reproducible stand-in for natural-image crops
//! at experiment scale.

use thiserror::Error;

use crate::fft::{angular_frequency, Fft2};
use crate::image::Image;
use crate::rng::{GaussianRng, RngSeed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("image dimensions {width}x{height} are below the 8x8 minimum")]
    DimensionTooSmall { width: usize, height: usize },
    #[error("correlation length {0} must be positive and finite")]
    BadCorrelationLength(f64),
    #[error("filtered field is constant, cannot rescale to span [0,1]")]
    DegenerateField,
}

/// Generate a smooth random image, deterministic in `seed`.
pub fn generate_smooth_image(
    width: usize,
    height: usize,
    correlation_length: f64,
    seed: RngSeed,
) -> Result<Image, SynthError> {
    if width < 8 || height < 8 {
        return Err(SynthError::DimensionTooSmall { width, height });
    }
    if !(correlation_length > 0.0 && correlation_length.is_finite()) {
        return Err(SynthError::BadCorrelationLength(correlation_length));
    }

    let mut rng = GaussianRng::new(seed);
    let mut noise = vec![0.0; width * height];
    rng.fill_standard_normal(&mut noise);

    let fft = Fft2::new(width, height);
    let mut spectrum = fft.forward(&noise);
    for ky in 0..height {
        let wy = angular_frequency(ky, height);
        for kx in 0..width {
            let wx = angular_frequency(kx, width);
            let gain = (-0.5 * correlation_length * correlation_length * (wx * wx + wy * wy)).exp();
            spectrum[ky * width + kx] *= gain;
        }
    }
    let (field, _imag) = fft.inverse_real(spectrum);

    // f64::min/max skip NaN operands, so min and max are ordinary numbers
    // whenever any pixel is, and the <= test is a complete ordering test.
    let min = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(SynthError::DegenerateField);
    }
    // (v-min)/(max-min) lands in [0,1] exactly: subtraction and division are
    // monotone under IEEE round-to-nearest, and (max-min)/(max-min) == 1.
    let range = max - min;
    let pixels: Vec<f64> = field.iter().map(|&v| (v - min) / range).collect();
    Ok(Image::from_pixels(width, height, pixels).expect("shape preserved"))
}
