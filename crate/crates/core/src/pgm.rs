//! Binary PGM (P5) input and output, 8 or 16 bit.
//!
//! Pixels map linearly between `[0, maxval]` and `[0, x_max]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::{ImageGrid, Vector};

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.into(),
    }
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn decode_pgm(bytes: &[u8], x_max: f64, path: &Path) -> Result<ImageGrid> {
    let mut pos = 0;
    if next_token(bytes, &mut pos) != Some(b"P5") {
        return Err(parse_err(path, "not a binary PGM (missing P5 magic)"));
    }
    let mut field = |name: &str| -> Result<usize> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| parse_err(path, format!("missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, format!("bad {name}")))
    };
    let cols = field("width")?;
    let rows = field("height")?;
    let maxval = field("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(parse_err(path, format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = rows * cols * bpp;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| parse_err(path, format!("raster truncated: need {need} bytes")))?;
    let scale = x_max / maxval as f64;
    let pixels: Vector = if bpp == 1 {
        raster.iter().map(|&b| b as f64 * scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    ImageGrid::new(rows, cols, pixels)
}

pub fn encode_pgm(img: &ImageGrid, x_max: f64, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.cols(), img.rows(), maxval).into_bytes();
    let m = maxval as f64;
    for &v in img.pixels() {
        let level = (v / x_max * m).round_ties_even().clamp(0.0, m);
        if maxval < 256 {
            out.push(level as u8);
        } else {
            out.extend_from_slice(&(level as u16).to_be_bytes());
        }
    }
    out
}

pub fn read_pgm(path: &Path, x_max: f64) -> Result<ImageGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, x_max, path)
}

/// Writes with values clamped to `[0, x_max]`.
pub fn write_pgm(path: &Path, img: &ImageGrid, x_max: f64, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(img, x_max, maxval)).map_err(|e| Error::io(path, e))
}
