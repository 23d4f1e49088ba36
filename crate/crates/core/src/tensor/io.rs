//! File formats.
//!
//! SFMT is a little-endian container: the ASCII magic `SFMT`, `u32` version
//! (1), `u32` rank (1..=4), one `u32` per extent, then the `f32` payload in
//! row-major order. Binary PGM (`P5`, maxval 255) is accepted as image input
//! and becomes a `(1, H, W)` tensor scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const SFMT_MAGIC: &[u8; 4] = b"SFMT";
pub const SFMT_VERSION: u32 = 1;

fn format_err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    })
}

pub fn encode_sfmt(tensor: &Tensor) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out = Vec::with_capacity(12 + 4 * shape.len() + 4 * tensor.len());
    out.extend_from_slice(SFMT_MAGIC);
    out.extend_from_slice(&SFMT_VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in tensor.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_sfmt(bytes: &[u8]) -> Result<Tensor> {
    let u32_at = |off: usize| -> Result<u32> {
        match bytes.get(off..off + 4) {
            Some(b) => Ok(u32::from_le_bytes(b.try_into().unwrap())),
            None => format_err(bytes.len(), "truncated header"),
        }
    };
    if bytes.len() < 4 || &bytes[..4] != SFMT_MAGIC {
        return format_err(0, "bad magic, expected \"SFMT\"");
    }
    let version = u32_at(4)?;
    if version != SFMT_VERSION {
        return format_err(4, format!("unsupported version {version}"));
    }
    let ndim = u32_at(8)? as usize;
    if !(1..=4).contains(&ndim) {
        return format_err(8, format!("rank must be 1..=4, got {ndim}"));
    }
    let mut shape = Vec::with_capacity(ndim);
    for k in 0..ndim {
        let off = 12 + 4 * k;
        let d = u32_at(off)? as usize;
        if d == 0 {
            return format_err(off, "zero extent");
        }
        shape.push(d);
    }
    let start = 12 + 4 * ndim;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format {
            offset: 12,
            reason: "extent product overflows".into(),
        })?;
    let expected = start + 4 * count;
    if bytes.len() < expected {
        return format_err(
            bytes.len(),
            format!("truncated payload: need {expected} bytes, have {}", bytes.len()),
        );
    }
    if bytes.len() > expected {
        return format_err(expected, "trailing bytes after payload");
    }
    let mut data = Vec::with_capacity(count);
    for (k, chunk) in bytes[start..].chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().unwrap());
        if !x.is_finite() {
            return format_err(start + 4 * k, format!("non-finite value {x}"));
        }
        data.push(x as f64);
    }
    Tensor::new(shape, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_sfmt(&fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    fs::write(path, encode_sfmt(tensor))?;
    Ok(())
}

/// Parses a binary `P5` greymap with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    if !bytes.starts_with(b"P5") {
        return format_err(0, "not a binary PGM (expected \"P5\")");
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let begin = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if begin == pos {
            return format_err(pos, "expected a decimal header field");
        }
        *field = std::str::from_utf8(&bytes[begin..pos])
            .unwrap()
            .parse()
            .or_else(|_| format_err(begin, "header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return format_err(pos, format!("only maxval 255 is supported, got {maxval}"));
    }
    if width == 0 || height == 0 {
        return format_err(pos, "zero image extent");
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return format_err(pos, "missing whitespace after header");
    }
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return format_err(
            bytes.len(),
            format!("truncated raster: need {need} bytes after offset {pos}"),
        );
    }
    let data = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Tensor::new(vec![1, height, width], data)
}

/// Encodes a single-channel `[0, 1]` image as P5, rounding to 8 bits.
pub fn encode_pgm(height: usize, width: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), height * width);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Reads SFMT or P5 PGM, dispatching on the leading magic bytes.
pub fn read_input(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_sfmt(&bytes)
    }
}
