//! Oracles shared by the integration suites. Each one recomputes a quantity
//! the library produces, through an independent route: direct O(n²) DFT
//! instead of FFT, plane summation instead of wrapped offsets, central
//! finite differences instead of closed forms, exact rational arithmetic
//! instead of dyadic floats. Agreement between the two routes is the
//! evidence; none of these call into the code paths they check.

#![allow(dead_code)]

use num::{BigInt, BigRational, ToPrimitive};
use sureform::image::Image;
use sureform::rng::{GaussianRng, RngSeed};
use sureform::Complex64;

/// Direct discrete Fourier transform of a real row-major grid:
/// X[ky·w + kx] = Σ_{y,x} v[y·w + x] · exp(−2πi(kx·x/w + ky·y/h)).
/// Quadratic cost, no FFT anywhere.
pub fn dense_dft(pixels: &[f64], width: usize, height: usize) -> Vec<Complex64> {
    assert_eq!(pixels.len(), width * height);
    let mut out = Vec::with_capacity(pixels.len());
    for ky in 0..height {
        for kx in 0..width {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..height {
                for x in 0..width {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * (kx as f64 * x as f64 / width as f64
                            + ky as f64 * y as f64 / height as f64);
                    let (sin, cos) = phase.sin_cos();
                    acc += Complex64::new(cos, sin) * pixels[y * width + x];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Rotated anisotropic Gaussian, periodized by summing the whole plane into
/// the grid (two periods out in every direction, far past f64 underflow),
/// normalized to unit sum. Uses the explicit inverse-covariance quadratic
/// form rather than rotated coordinates.
pub fn dense_gaussian_kernel(
    width: usize,
    height: usize,
    sigma_major: f64,
    sigma_minor: f64,
    angle: f64,
) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    // Σ⁻¹ for Σ = R diag(σ0², σ1²) Rᵀ with R = [[c, −s], [s, c]].
    let a = c * c / (sigma_major * sigma_major) + s * s / (sigma_minor * sigma_minor);
    let b = s * c * (1.0 / (sigma_major * sigma_major) - 1.0 / (sigma_minor * sigma_minor));
    let d = s * s / (sigma_major * sigma_major) + c * c / (sigma_minor * sigma_minor);
    let w = width as i64;
    let h = height as i64;
    let mut kernel = vec![0.0; width * height];
    for dy in -2 * h..=2 * h {
        for dx in -2 * w..=2 * w {
            let (fx, fy) = (dx as f64, dy as f64);
            let quad = a * fx * fx + 2.0 * b * fx * fy + d * fy * fy;
            let weight = (-0.5 * quad).exp();
            let gx = dx.rem_euclid(w) as usize;
            let gy = dy.rem_euclid(h) as usize;
            kernel[gy * width + gx] += weight;
        }
    }
    let sum: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    kernel
}

/// Divergence of `h` at `y` by coordinate-wise central differences:
/// Σ_i [h(y + δe_i) − h(y − δe_i)]_i / (2δ). Exact up to O(δ²) curvature,
/// affordable only on small grids.
pub fn central_fd_divergence(h: impl Fn(&Image) -> Image, y: &Image, step: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..y.pixels().len() {
        let mut plus = y.clone();
        plus.pixels_mut()[i] += step;
        let mut minus = y.clone();
        minus.pixels_mut()[i] -= step;
        total += (h(&plus).pixels()[i] - h(&minus).pixels()[i]) / (2.0 * step);
    }
    total
}

/// k = ⌈n·(1−α)⌉ with α given as the exact rational num/den.
pub fn quantile_k_exact_rational(n: u64, alpha_num: u64, alpha_den: u64) -> u64 {
    let alpha = BigRational::new(BigInt::from(alpha_num), BigInt::from(alpha_den));
    quantile_k(n, &alpha)
}

/// k = ⌈n·(1−α)⌉ with α taken as the exact binary value of the given f64,
/// i.e. the quantity the library's dyadic integer arithmetic must reproduce.
pub fn quantile_k_from_f64(n: u64, alpha: f64) -> u64 {
    let alpha = BigRational::from_float(alpha).expect("finite alpha");
    quantile_k(n, &alpha)
}

fn quantile_k(n: u64, alpha: &BigRational) -> u64 {
    let one = BigRational::from_integer(BigInt::from(1));
    let level = &one - alpha;
    let k = (BigRational::from_integer(BigInt::from(n)) * level).ceil();
    k.to_integer().to_u64().expect("k fits in u64")
}

/// Minimal XML well-formedness scan: tags balance, attribute quotes close,
/// and no raw '&' appears (the chart writer never emits entities).
pub fn assert_svg_well_formed(text: &str) {
    assert!(!text.contains('&'), "raw ampersand in SVG text");
    let bytes = text.as_bytes();
    let mut stack: Vec<String> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        if let Some(stripped) = rest.strip_prefix("<!--") {
            let end = stripped.find("-->").expect("unterminated comment");
            i += 4 + end + 3;
            continue;
        }
        if rest.starts_with("<?") {
            let end = rest.find("?>").expect("unterminated declaration");
            i += end + 2;
            continue;
        }
        // Find the matching '>' outside quoted attribute values.
        let mut j = i + 1;
        let mut quote: Option<u8> = None;
        loop {
            assert!(j < bytes.len(), "unterminated tag");
            match (quote, bytes[j]) {
                (Some(q), b) if b == q => quote = None,
                (None, b'"') | (None, b'\'') => quote = Some(bytes[j]),
                (None, b'>') => break,
                _ => {}
            }
            j += 1;
        }
        let tag = &text[i + 1..j];
        if let Some(name) = tag.strip_prefix('/') {
            let open = stack.pop().unwrap_or_else(|| panic!("stray </{name}>"));
            assert_eq!(open, name.trim(), "mismatched close tag");
        } else if !tag.ends_with('/') {
            let name: String = tag
                .split_whitespace()
                .next()
                .expect("empty tag")
                .to_string();
            stack.push(name);
        }
        i = j + 1;
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}

/// Deterministic image with i.i.d. uniform [0,1) pixels, for operator and
/// score oracles where smoothness is irrelevant.
pub fn random_uniform_image(width: usize, height: usize, seed: RngSeed) -> Image {
    let mut rng = GaussianRng::new(seed);
    let pixels = (0..width * height).map(|_| rng.uniform()).collect();
    Image::from_pixels(width, height, pixels).unwrap()
}

/// Deterministic zero-mean image with i.i.d. standard normal pixels.
pub fn random_normal_image(width: usize, height: usize, seed: RngSeed) -> Image {
    let mut rng = GaussianRng::new(seed);
    let pixels = (0..width * height).map(|_| rng.standard_normal()).collect();
    Image::from_pixels(width, height, pixels).unwrap()
}

/// Sample mean and unbiased sample variance.
pub fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// |a − b| relative to the larger magnitude.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
