//! Linear forward operators with periodic boundary, plus the Gaussian noise
//! model.
//!
//! Every operator here is circulant: a convolution with periodic wrap,
//! diagonalized by the 2-D DFT. The operator is stored as its Fourier symbol
//! (the kernel's DFT coefficients), so apply/adjoint are pointwise products
//! in the frequency domain and traces of the induced filters are exact sums
//! over the grid. Construction floors |symbol| at `rank_floor` (phase kept),
//! which keeps the operator full rank even when the blur response decays to
//! nothing at high frequencies.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::fft::Fft2;
use crate::image::Image;
use crate::rng::{GaussianRng, RngSeed};

/// Relative bound on the imaginary residue left after the inverse FFT in
/// [`CirculantOperator::apply`]. Real symbol times real input must come back
/// real to rounding error; anything above this signals a corrupted symbol.
const IMAG_RESIDUE_REL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("operator dimensions {width}x{height} must be nonzero")]
    BadDimensions { width: usize, height: usize },
    #[error("bandwidth {0} must be positive and finite")]
    BadBandwidth(f64),
    #[error("rank floor {0} must lie in [0, 1)")]
    BadRankFloor(f64),
    #[error("kernel length {got} does not match grid {width}x{height}")]
    KernelLength {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("operator is {op_width}x{op_height} but image is {img_width}x{img_height}")]
    DimensionMismatch {
        op_width: usize,
        op_height: usize,
        img_width: usize,
        img_height: usize,
    },
    #[error(
        "imaginary residue {residue:e} exceeds {IMAG_RESIDUE_REL:e} of result norm {norm:e}; \
         the operator symbol is not conjugate-symmetric"
    )]
    ImaginaryResidue { residue: f64, norm: f64 },
    #[error("noise standard deviation {0} must be positive and finite")]
    BadSigma(f64),
}

/// Circulant linear operator on `width x height` grids, held as its Fourier
/// symbol. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct CirculantOperator {
    width: usize,
    height: usize,
    symbol: Vec<Complex64>,
    fft: Arc<Fft2>,
}

impl CirculantOperator {
    fn from_symbol(width: usize, height: usize, symbol: Vec<Complex64>) -> Self {
        debug_assert_eq!(symbol.len(), width * height);
        CirculantOperator {
            width,
            height,
            symbol,
            fft: Arc::new(Fft2::new(width, height)),
        }
    }

    /// Build from an explicit real convolution kernel laid out on the grid
    /// with its origin at index (0,0) and periodic wrap. `rank_floor` lifts
    /// any symbol magnitude below it, preserving phase.
    pub fn from_kernel(
        width: usize,
        height: usize,
        kernel: &[f64],
        rank_floor: f64,
    ) -> Result<Self, OperatorError> {
        if width == 0 || height == 0 {
            return Err(OperatorError::BadDimensions { width, height });
        }
        if !(0.0..1.0).contains(&rank_floor) {
            return Err(OperatorError::BadRankFloor(rank_floor));
        }
        if kernel.len() != width * height {
            return Err(OperatorError::KernelLength {
                width,
                height,
                got: kernel.len(),
            });
        }
        let fft = Fft2::new(width, height);
        let mut symbol = fft.forward(kernel);
        for s in symbol.iter_mut() {
            let mag = s.norm();
            if mag < rank_floor {
                // Zero has no phase; lift it along the real axis.
                if mag == 0.0 {
                    *s = Complex64::new(rank_floor, 0.0);
                } else {
                    let mut lifted = *s * (rank_floor / mag);
                    // Rescaling can round a hair under the floor; nudge up so
                    // the min-magnitude invariant holds exactly.
                    while lifted.norm() < rank_floor {
                        lifted *= 1.0 + f64::EPSILON;
                    }
                    *s = lifted;
                }
            }
        }
        Ok(CirculantOperator {
            width,
            height,
            symbol,
            fft: Arc::new(fft),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Measurement dimension m = width * height.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fourier symbol (eigenvalues on the DFT basis), row-major frequency
    /// grid matching the image layout.
    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    /// True when the symbol is exactly all-ones (as built by
    /// [`identity_operator`]); used to gate estimators that are only valid
    /// for pure denoising.
    pub fn is_identity(&self) -> bool {
        self.symbol.iter().all(|s| s.re == 1.0 && s.im == 0.0)
    }

    pub(crate) fn fft(&self) -> Arc<Fft2> {
        Arc::clone(&self.fft)
    }

    pub fn min_symbol_magnitude(&self) -> f64 {
        self.symbol
            .iter()
            .map(|s| s.norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_symbol_magnitude(&self) -> f64 {
        self.symbol.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// max|symbol| / min|symbol|.
    pub fn condition_number(&self) -> f64 {
        self.max_symbol_magnitude() / self.min_symbol_magnitude()
    }

    fn check_shape(&self, x: &Image) -> Result<(), OperatorError> {
        if x.width() == self.width && x.height() == self.height {
            Ok(())
        } else {
            Err(OperatorError::DimensionMismatch {
                op_width: self.width,
                op_height: self.height,
                img_width: x.width(),
                img_height: x.height(),
            })
        }
    }

    fn apply_symbol(&self, x: &Image, conjugate: bool) -> Result<Image, OperatorError> {
        self.check_shape(x)?;
        let mut spectrum = self.fft.forward(x.pixels());
        for (c, s) in spectrum.iter_mut().zip(&self.symbol) {
            *c *= if conjugate { s.conj() } else { *s };
        }
        let (pixels, max_imag) = self.fft.inverse_real(spectrum);
        let norm = pixels.iter().map(|v| v * v).sum::<f64>().sqrt();
        if max_imag > IMAG_RESIDUE_REL * norm.max(f64::MIN_POSITIVE) {
            return Err(OperatorError::ImaginaryResidue {
                residue: max_imag,
                norm,
            });
        }
        Ok(Image::from_pixels(self.width, self.height, pixels).expect("shape preserved"))
    }

    /// y = A x via FFT, pointwise symbol product, inverse FFT.
    pub fn apply(&self, x: &Image) -> Result<Image, OperatorError> {
        self.apply_symbol(x, false)
    }

    /// y = Aᵀ x; same product with the conjugated symbol.
    pub fn apply_adjoint(&self, x: &Image) -> Result<Image, OperatorError> {
        self.apply_symbol(x, true)
    }
}

/// Identity operator: all-ones symbol.
pub fn identity_operator(width: usize, height: usize) -> Result<CirculantOperator, OperatorError> {
    if width == 0 || height == 0 {
        return Err(OperatorError::BadDimensions { width, height });
    }
    let symbol = vec![Complex64::new(1.0, 0.0); width * height];
    Ok(CirculantOperator::from_symbol(width, height, symbol))
}

/// Anisotropic Gaussian blur with periodic boundary.
///
/// The kernel is a rotated Gaussian with standard deviations
/// `bandwidth_major`/`bandwidth_minor` (pixels) along its principal axes,
/// `angle` radians between the major axis and the x axis. It is evaluated on
/// the whole grid, periodized by summing wrapped copies, and normalized to
/// unit sum (DC gain 1).
pub fn gaussian_blur_operator(
    width: usize,
    height: usize,
    bandwidth_major: f64,
    bandwidth_minor: f64,
    angle: f64,
    rank_floor: f64,
) -> Result<CirculantOperator, OperatorError> {
    if width == 0 || height == 0 {
        return Err(OperatorError::BadDimensions { width, height });
    }
    for b in [bandwidth_major, bandwidth_minor] {
        if !(b > 0.0 && b.is_finite()) {
            return Err(OperatorError::BadBandwidth(b));
        }
    }
    let kernel = periodized_gaussian_kernel(width, height, bandwidth_major, bandwidth_minor, angle);
    CirculantOperator::from_kernel(width, height, &kernel, rank_floor)
}

/// Rotated anisotropic Gaussian on the periodic grid, origin at (0,0),
/// normalized to unit sum. Wrapped copies one period out in each direction
/// are included; farther copies are below f64 resolution for any bandwidth
/// small enough to make blurring meaningful.
pub(crate) fn periodized_gaussian_kernel(
    width: usize,
    height: usize,
    bandwidth_major: f64,
    bandwidth_minor: f64,
    angle: f64,
) -> Vec<f64> {
    let (sin, cos) = angle.sin_cos();
    let mut kernel = vec![0.0; width * height];
    for gy in 0..height {
        for gx in 0..width {
            let mut acc = 0.0;
            for wrap_y in -1..=1i64 {
                for wrap_x in -1..=1i64 {
                    // Signed displacement of this periodic copy from the origin.
                    let dx = signed_offset(gx, width) + (wrap_x * width as i64) as f64;
                    let dy = signed_offset(gy, height) + (wrap_y * height as i64) as f64;
                    let along = cos * dx + sin * dy;
                    let across = -sin * dx + cos * dy;
                    let quad =
                        (along / bandwidth_major).powi(2) + (across / bandwidth_minor).powi(2);
                    acc += (-0.5 * quad).exp();
                }
            }
            kernel[gy * width + gx] = acc;
        }
    }
    let sum: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    kernel
}

/// Shortest signed displacement of grid index `i` from the origin on a
/// periodic axis of length `n`.
fn signed_offset(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Additive white Gaussian noise of known standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self, OperatorError> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(NoiseModel { sigma })
        } else {
            Err(OperatorError::BadSigma(sigma))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// clean + sigma * z with z i.i.d. standard normal, deterministic in seed.
    pub fn add_noise(&self, clean_measurement: &Image, seed: RngSeed) -> Image {
        let mut rng = GaussianRng::new(seed);
        let mut out = clean_measurement.clone();
        for v in out.pixels_mut() {
            *v += self.sigma * rng.standard_normal();
        }
        out
    }
}
