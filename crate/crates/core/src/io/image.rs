//! Image file formats.
//!
//! Two carriers with different fidelity:
//! - binary PPM (`P6`, maxval 255) for interoperability and eyeballing;
//!   exact only on the 256-point byte grid;
//! - `CIAF1`, a trivial float container, as the canonical adversarial
//!   artifact — 8-bit quantization could erase perturbation structure finer
//!   than 1/255.
//!
//! CIAF1 layout: the 5 magic bytes `CIAF1`, then height, width, channels as
//! 32-bit little-endian unsigned integers, then height·width·channels
//! 32-bit little-endian floats in row-major (y, x, channel) order. Loaders
//! validate that every value lies in [0,1], matching the image invariant.

use crate::error::{CiaError, Result};
use crate::image::{ImageTensor, CHANNELS};
use std::fs;
use std::path::Path;

const CIAF1_MAGIC: &[u8; 5] = b"CIAF1";

fn format_err(path: &Path, message: impl Into<String>) -> CiaError {
    CiaError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Pull the next whitespace-delimited unsigned integer out of a PPM header,
/// skipping `#` comments (which run to end of line).
fn next_header_int(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(format_err(path, "expected an integer in the PPM header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, "unreadable integer in the PPM header"))
}

/// Load a binary PPM (`P6`, maxval 255); bytes map to floats as b/255.
pub fn load_image_ppm(path: impl AsRef<Path>) -> Result<ImageTensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(format_err(path, "not a binary PPM: magic 'P6' missing"));
    }
    let mut pos = 2;
    let width = next_header_int(&bytes, &mut pos, path)?;
    let height = next_header_int(&bytes, &mut pos, path)?;
    let maxval = next_header_int(&bytes, &mut pos, path)?;
    if maxval != 255 {
        return Err(format_err(path, format!("unsupported maxval {maxval} (need 255)")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(path, "missing whitespace after the PPM header"));
    }
    pos += 1;
    let expected = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(CHANNELS))
        .ok_or_else(|| format_err(path, "image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(format_err(
            path,
            format!("truncated pixel data: need {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(format_err(
            path,
            format!("trailing bytes after pixel data: expected {expected}, found {}", payload.len()),
        ));
    }
    let values: Vec<f32> = payload.iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::new(height, width, values)
}

/// Save as binary PPM; floats map to bytes as round(v·255), clamped.
pub fn save_image_ppm(image: &ImageTensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.values().iter().map(|&v| {
        let scaled = (v as f64 * 255.0).round();
        scaled.clamp(0.0, 255.0) as u8
    }));
    fs::write(path, out).map_err(|e| CiaError::io(path.display().to_string(), e))
}

/// Load the lossless CIAF1 float carrier; the round trip with
/// [`save_image_f32`] is bitwise.
pub fn load_image_f32(path: impl AsRef<Path>) -> Result<ImageTensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    if bytes.len() < CIAF1_MAGIC.len() + 12 {
        return Err(format_err(path, "file too short for a CIAF1 header"));
    }
    if &bytes[..5] != CIAF1_MAGIC {
        return Err(format_err(path, "magic 'CIAF1' missing"));
    }
    let word = |i: usize| -> u32 {
        u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap())
    };
    let (height, width, channels) = (word(0) as usize, word(1) as usize, word(2) as usize);
    if channels != CHANNELS {
        return Err(format_err(path, format!("expected {CHANNELS} channels, header says {channels}")));
    }
    let count = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| format_err(path, "image dimensions overflow"))?;
    let payload = &bytes[17..];
    if payload.len() != count * 4 {
        return Err(format_err(
            path,
            format!("payload is {} bytes, header demands {}", payload.len(), count * 4),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(format_err(path, format!("value {v} at index {i} outside [0,1]")));
        }
    }
    ImageTensor::new(height, width, values)
}

/// Save in the lossless CIAF1 float carrier.
pub fn save_image_f32(image: &ImageTensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(17 + image.values().len() * 4);
    out.extend_from_slice(CIAF1_MAGIC);
    for dim in [image.height(), image.width(), image.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in image.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| CiaError::io(path.display().to_string(), e))
}
