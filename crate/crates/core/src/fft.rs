//! Two-dimensional FFT helpers on row-major `f64` grids.
//!
//! Thin wrapper around `rustfft`: rows are transformed in place, the grid is
//! transposed, columns (now rows) are transformed, and the grid is transposed
//! back. Forward and inverse are unnormalized in `rustfft`, so the inverse
//! here applies the 1/(width*height) factor. Plans are created once per grid
//! shape and are cheap to share across threads.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse 2-D FFT for a fixed grid shape.
pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2 {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "FFT grid must be nonempty");
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn len(&self) -> usize {
        self.width * self.height
    }

    /// out[x * height + y] = data[y * width + x]
    fn transpose(&self, data: &[Complex64], rows: usize, cols: usize, out: &mut [Complex64]) {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert_eq!(out.len(), rows * cols);
        for y in 0..rows {
            for x in 0..cols {
                out[x * rows + y] = data[y * cols + x];
            }
        }
    }

    fn transform(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        for chunk in buf.chunks_mut(self.width) {
            row.process(chunk);
        }
        let mut t = vec![Complex64::default(); self.len()];
        self.transpose(buf, self.height, self.width, &mut t);
        for chunk in t.chunks_mut(self.height) {
            col.process(chunk);
        }
        self.transpose(&t, self.width, self.height, buf);
    }

    /// Unnormalized forward 2-D DFT of a real grid.
    pub(crate) fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(real.len(), self.len());
        let mut buf: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.row_fwd, &self.col_fwd);
        buf
    }

    /// Inverse 2-D DFT with 1/(width*height) normalization, returning the
    /// real part plus the largest |imaginary part| seen (the caller decides
    /// how much residue to tolerate).
    pub(crate) fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> (Vec<f64>, f64) {
        debug_assert_eq!(spectrum.len(), self.len());
        self.transform(&mut spectrum, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        let mut max_imag = 0.0f64;
        let real = spectrum
            .iter()
            .map(|c| {
                max_imag = max_imag.max((c.im * scale).abs());
                c.re * scale
            })
            .collect();
        (real, max_imag)
    }
}

/// Angular frequency (radians per sample) of DFT bin `k` on a length-`n`
/// grid, using the signed convention: bins above n/2 map to negatives.
pub(crate) fn angular_frequency(k: usize, n: usize) -> f64 {
    debug_assert!(k < n);
    let signed = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * std::f64::consts::PI * signed / n as f64
}
