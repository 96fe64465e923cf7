//! Spectrogram cache files.
//!
//! Layout: `b"VSER"`, then little-endian `u16` version, `u16` height,
//! `u16` width, then `height * width` little-endian `f32` values, row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{DspError, Result};
use crate::image::LogMelImage;

pub const MAGIC: &[u8; 4] = b"VSER";
pub const VERSION: u16 = 1;

pub fn encode(image: &LogMelImage) -> Result<Vec<u8>> {
    let (h, w) = image.pixels.dim();
    let (h16, w16) = match (u16::try_from(h), u16::try_from(w)) {
        (Ok(h), Ok(w)) => (h, w),
        _ => return Err(DspError::Format(format!("image {h}x{w} too large"))),
    };
    let mut out = Vec::with_capacity(10 + 4 * h * w);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    for v in image.pixels.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(mut bytes: &[u8]) -> Result<LogMelImage> {
    let mut header = [0u8; 10];
    bytes
        .read_exact(&mut header)
        .map_err(|_| DspError::Format("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(DspError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(DspError::Format(format!("unsupported version {version}")));
    }
    let h = u16::from_le_bytes([header[6], header[7]]) as usize;
    let w = u16::from_le_bytes([header[8], header[9]]) as usize;
    if bytes.len() != 4 * h * w {
        return Err(DspError::Format(format!(
            "expected {} payload bytes, found {}",
            4 * h * w,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let pixels = Array2::from_shape_vec((h, w), values)
        .map_err(|e| DspError::Format(e.to_string()))?;
    Ok(LogMelImage { pixels })
}

pub fn write(path: &Path, image: &LogMelImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(image)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<LogMelImage> {
    decode(&fs::read(path)?)
}
