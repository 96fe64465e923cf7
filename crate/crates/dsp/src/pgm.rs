//! Binary PGM (P5) image dumps, 8 bits per pixel.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{DspError, Result};

/// Encode a grid of values in `[0, 1]`; each pixel becomes `round(v * 255)`.
pub fn encode(grid: &Array2<f32>) -> Vec<u8> {
    let (h, w) = grid.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        grid.iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| DspError::Format("non-ascii header".into()))
}

/// Decode to values in `[0, 1]` (`byte / 255`).
pub fn decode(bytes: &[u8]) -> Result<Array2<f32>> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != "P5" {
        return Err(DspError::Format("not a binary PGM".into()));
    }
    let mut num = |name: &str| -> Result<usize> {
        next_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| DspError::Format(format!("bad {name}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(DspError::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes
        .get(pos + 1..)
        .ok_or_else(|| DspError::Format("missing raster".into()))?;
    if data.len() != w * h {
        return Err(DspError::Format(format!(
            "expected {} raster bytes, found {}",
            w * h,
            data.len()
        )));
    }
    Array2::from_shape_vec((h, w), data.iter().map(|&b| b as f32 / 255.0).collect())
        .map_err(|e| DspError::Format(e.to_string()))
}

pub fn write(path: &Path, grid: &Array2<f32>) -> Result<()> {
    fs::write(path, encode(grid))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Array2<f32>> {
    decode(&fs::read(path)?)
}
