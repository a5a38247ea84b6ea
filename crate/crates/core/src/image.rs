//! Grayscale image container.
//!
//! Pixels are `f64` in row-major order. The nominal intensity range is
//! [0, 1], but intermediate results (residuals, noisy measurements) may fall
//! outside it; only the synthetic-image generator and the 8/16-bit writers
//! enforce the range.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions {width}x{height} must be nonzero")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer has {got} samples, expected {expected} for {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("images have mismatched shapes {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("pixel value {value} at index {index} is not finite")]
    NonFinite { index: usize, value: f64 },
}

/// Row-major grayscale image with `f64` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Wrap a row-major pixel buffer. Fails on empty dimensions or a buffer
    /// whose length is not `width * height`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width
            .checked_mul(height)
            .ok_or(ImageError::EmptyDimensions { width, height })?;
        if pixels.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                expected,
                got: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// All-zero image of the given shape.
    pub fn zeros(width: usize, height: usize) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        Ok(Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels (`width * height`).
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn check_shape(&self, other: &Image) -> Result<(), ImageError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(ImageError::ShapeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    /// Error if any pixel is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), ImageError> {
        for (index, &value) in self.pixels.iter().enumerate() {
            if !value.is_finite() {
                return Err(ImageError::NonFinite { index, value });
            }
        }
        Ok(())
    }

    /// Pixel-wise difference `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image, ImageError> {
        self.check_shape(other)?;
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            pixels,
        })
    }

    /// Pixel-wise sum `self + other`.
    pub fn add(&self, other: &Image) -> Result<Image, ImageError> {
        self.check_shape(other)?;
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            pixels,
        })
    }

    /// Sum of squared pixel values.
    pub fn norm_sq(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    /// Mean squared difference `(1/n) * sum((a_i - b_i)^2)`.
    pub fn mean_sq_diff(&self, other: &Image) -> Result<f64, ImageError> {
        self.check_shape(other)?;
        let n = self.pixels.len() as f64;
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / n)
    }

    /// Largest absolute pixel value.
    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Extract a centered `width x height` window. Fails if the source is
    /// smaller than the requested crop in either dimension.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Image, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if width > self.width || height > self.height {
            return Err(ImageError::ShapeMismatch(
                self.width,
                self.height,
                width,
                height,
            ));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let row = (y0 + y) * self.width + x0;
            pixels.extend_from_slice(&self.pixels[row..row + width]);
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }
}
