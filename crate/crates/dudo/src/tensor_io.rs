//! Binary tensor files and PGM previews.
//!
//! A tensor file is the 4-byte magic `DDUT`, then the bytes
//! `version = 1`, `dtype` (0 for f32, 1 for f64), `ndim` and a zero
//! reserved byte, then `ndim` little-endian `u32` dimensions and the
//! row-major little-endian payload.

use std::fs;
use std::path::Path;

use dudo_core::mri::magnitude;
use dudo_core::{DType, Real, Tensor};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"DDUT";
pub const VERSION: u8 = 1;

fn width(d: DType) -> usize {
    match d {
        DType::F32 => 4,
        DType::F64 => 8,
    }
}

pub fn encode<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let width = width(T::DTYPE);
    let mut out = Vec::with_capacity(8 + 4 * t.ndim() + width * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, T::DTYPE as u8, t.ndim() as u8, 0]);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        match T::DTYPE {
            DType::F32 => out.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
            DType::F64 => out.extend_from_slice(&v.f64().to_le_bytes()),
        }
    }
    out
}

/// Stored element type of an encoded tensor.
pub fn peek_dtype(bytes: &[u8]) -> Result<DType, String> {
    header(bytes).map(|(d, _)| d)
}

fn header(bytes: &[u8]) -> Result<(DType, Vec<usize>), String> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err("not a DDUT tensor file".into());
    }
    if bytes[4] != VERSION {
        return Err(format!("unsupported tensor file version {}", bytes[4]));
    }
    let dtype = match bytes[5] {
        0 => DType::F32,
        1 => DType::F64,
        c => return Err(format!("unknown dtype code {c}")),
    };
    if bytes[7] != 0 {
        return Err("reserved header byte must be zero".into());
    }
    let ndim = bytes[6] as usize;
    let dims_end = 8 + 4 * ndim;
    if bytes.len() < dims_end {
        return Err("truncated shape".into());
    }
    let shape = bytes[8..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    Ok((dtype, shape))
}

/// Decodes a tensor, converting the stored element type to `T`.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Tensor<T>, String> {
    let (dtype, shape) = header(bytes)?;
    let numel: usize = shape.iter().product();
    let start = 8 + 4 * shape.len();
    let payload = &bytes[start..];
    if payload.len() != numel * width(dtype) {
        return Err(format!("payload has {} bytes, expected {}", payload.len(), numel * width(dtype)));
    }
    let data: Vec<T> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect(),
    };
    Tensor::new(&shape, data).map_err(|e| e.to_string())
}

pub fn save_tensor<T: Real>(path: &Path, t: &Tensor<T>) -> CliResult<()> {
    fs::write(path, encode(t)).map_err(|e| CliError::io(path, e))
}

pub fn load_tensor<T: Real>(path: &Path) -> CliResult<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::format(path, m))
}

/// 8-bit binary PGM of an H×W image with values clipped to [0, 1].
pub fn encode_pgm(values: &[f64], h: usize, w: usize) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Preview of a tensor: the magnitude of a `[2, H, W]` complex grid, or a
/// single real `[H, W]` / `[1, H, W]` plane.
pub fn preview_values<T: Real>(t: &Tensor<T>) -> Option<(Vec<f64>, usize, usize)> {
    match t.shape() {
        [2, h, w] => Some((magnitude(t).into_iter().map(Real::f64).collect(), *h, *w)),
        [1, h, w] | [h, w] => Some((t.data().iter().map(|v| v.f64()).collect(), *h, *w)),
        _ => None,
    }
}

pub fn save_pgm<T: Real>(path: &Path, t: &Tensor<T>) -> CliResult<()> {
    let (v, h, w) = preview_values(t).ok_or_else(|| CliError::format(path, "tensor has no image preview"))?;
    fs::write(path, encode_pgm(&v, h, w)).map_err(|e| CliError::io(path, e))
}
