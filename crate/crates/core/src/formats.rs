//! File formats: binary PGM, the "IMGF64" flat-float image format, and CSV
//! tables.
//!
//! PGM is for interoperability with real photographs (8/16-bit, lossy through
//! quantization). IMGF64 is the fixture format: magic `IMGF64\n`, an ASCII
//! `width height\n` line, then width*height little-endian IEEE-754 doubles,
//! so write-then-read reproduces every finite pixel bit-identically. Tables
//! are RFC-4180-style CSV with LF line endings; floats are printed with
//! Rust's shortest round-trip formatting, so parsing the text recovers the
//! exact f64.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::image::{Image, ImageError};

const FLAT_MAGIC: &[u8] = b"IMGF64\n";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: ASCII PGM (P2) is not supported, convert to binary P5")]
    AsciiPgm { path: String },
    #[error("{path}: not a recognized image format (expected P5 PGM or IMGF64)")]
    UnknownFormat { path: String },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("{path}: payload truncated: expected {expected} bytes, found {got}")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: ImageError,
    },
    #[error("table row {row} has {got} fields, expected {expected}")]
    RowArity {
        row: usize,
        expected: usize,
        got: usize,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn header_err(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedHeader {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Read an image, detecting the format from the file's magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(FLAT_MAGIC) {
        read_flat_bytes(path, &bytes)
    } else if bytes.starts_with(b"P5") {
        read_pgm_bytes(path, &bytes)
    } else if bytes.starts_with(b"P2") {
        Err(FormatError::AsciiPgm {
            path: path.display().to_string(),
        })
    } else {
        Err(FormatError::UnknownFormat {
            path: path.display().to_string(),
        })
    }
}

/// Write an image, choosing the format by extension: `.pgm` writes 16-bit
/// binary PGM (quantized), anything else writes lossless IMGF64.
pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<(), FormatError> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => write_pgm(path, image, PgmDepth::Sixteen),
        _ => write_flat(path, image),
    }
}

/// Bit depth for PGM output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Write binary PGM. Pixels are clamped to [0,1] and quantized to the
/// requested maxval; this is the only lossy writer in the crate.
pub fn write_pgm(
    path: impl AsRef<Path>,
    image: &Image,
    depth: PgmDepth,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    image.check_finite().map_err(|source| FormatError::Image {
        path: path.display().to_string(),
        source,
    })?;
    let maxval = depth.maxval();
    let mut out = Vec::with_capacity(32 + image.len() * 2);
    out.extend_from_slice(
        format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).as_bytes(),
    );
    for &v in image.pixels() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn read_pgm_bytes(path: &Path, bytes: &[u8]) -> Result<Image, FormatError> {
    // Header: "P5", width, height, maxval as whitespace-separated tokens,
    // with '#' comments running to end of line, then ONE whitespace byte
    // before the binary payload.
    let mut pos = 2; // past "P5"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(header_err(path, "unexpected end of header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(header_err(path, "expected a decimal integer"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ASCII");
        *field = text
            .parse()
            .map_err(|e| header_err(path, format!("bad integer {text:?}: {e}")))?;
    }
    let [width, height, maxval] = fields;
    if !(1..=65535).contains(&maxval) {
        return Err(header_err(
            path,
            format!("maxval {maxval} out of range 1..=65535"),
        ));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(header_err(path, "missing whitespace before payload")),
    }

    let n = width
        .checked_mul(height)
        .ok_or_else(|| header_err(path, "dimensions overflow"))?;
    let wide = maxval > 255;
    let expected = n * if wide { 2 } else { 1 };
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            path: path.display().to_string(),
            expected,
            got: payload.len(),
        });
    }
    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = if wide {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        payload[..expected]
            .iter()
            .map(|&b| b as f64 * scale)
            .collect()
    };
    Image::from_pixels(width, height, pixels).map_err(|source| FormatError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Write the lossless flat-float format.
pub fn write_flat(path: impl AsRef<Path>, image: &Image) -> Result<(), FormatError> {
    let path = path.as_ref();
    image.check_finite().map_err(|source| FormatError::Image {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::with_capacity(FLAT_MAGIC.len() + 24 + image.len() * 8);
    out.extend_from_slice(FLAT_MAGIC);
    out.extend_from_slice(format!("{} {}\n", image.width(), image.height()).as_bytes());
    for &v in image.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn read_flat_bytes(path: &Path, bytes: &[u8]) -> Result<Image, FormatError> {
    let rest = &bytes[FLAT_MAGIC.len()..];
    let line_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_err(path, "missing dimension line"))?;
    let line = std::str::from_utf8(&rest[..line_end])
        .map_err(|_| header_err(path, "dimension line is not UTF-8"))?;
    let mut parts = line.split_ascii_whitespace();
    let width: usize = parts
        .next()
        .ok_or_else(|| header_err(path, "missing width"))?
        .parse()
        .map_err(|e| header_err(path, format!("bad width: {e}")))?;
    let height: usize = parts
        .next()
        .ok_or_else(|| header_err(path, "missing height"))?
        .parse()
        .map_err(|e| header_err(path, format!("bad height: {e}")))?;
    if parts.next().is_some() {
        return Err(header_err(path, "trailing tokens on dimension line"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| header_err(path, "dimensions overflow"))?;
    let payload = &rest[line_end + 1..];
    if payload.len() < n * 8 {
        return Err(FormatError::Truncated {
            path: path.display().to_string(),
            expected: n * 8,
            got: payload.len(),
        });
    }
    let pixels: Vec<f64> = payload[..n * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size 8")))
        .collect();
    let image = Image::from_pixels(width, height, pixels).map_err(|source| FormatError::Image {
        path: path.display().to_string(),
        source,
    })?;
    image.check_finite().map_err(|source| FormatError::Image {
        path: path.display().to_string(),
        source,
    })?;
    Ok(image)
}

/// Format one CSV field. Rust's shortest round-trip float formatting keeps
/// text-to-f64 parsing exact; infinities print as "inf"/"-inf".
fn csv_float(v: f64) -> String {
    format!("{v}")
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Write a CSV table: header row, then one line per data row. Every row must
/// match the header arity.
pub fn write_table(
    path: impl AsRef<Path>,
    column_names: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), FormatError> {
    let path = path.as_ref();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != column_names.len() {
            return Err(FormatError::RowArity {
                row: i,
                expected: column_names.len(),
                got: row.len(),
            });
        }
    }
    let mut out = Vec::new();
    let header: Vec<String> = column_names.iter().map(|c| csv_escape(c)).collect();
    writeln!(out, "{}", header.join(",")).map_err(|e| io_err(path, e))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| csv_float(v)).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| io_err(path, e))?;
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
