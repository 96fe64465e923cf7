//! Panels of equally sized grids, written as 8-bit PGM.

use std::path::Path;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// Width of the white rule between tiles.
pub const SEPARATOR: usize = 2;

/// Tile `images` row by row into a `rows x cols` canvas with white
/// separators. Unused cells stay black.
pub fn tile(images: &[Array2<f32>], rows: usize, cols: usize) -> Result<Array2<f32>> {
    let Some(first) = images.first() else {
        return Err(Error::Shape("no images to tile".into()));
    };
    if rows == 0 || cols == 0 || images.len() > rows * cols {
        return Err(Error::Shape(format!("{} images do not fit a {rows}x{cols} layout", images.len())));
    }
    let (h, w) = first.dim();
    if let Some(bad) = images.iter().find(|i| i.dim() != (h, w)) {
        return Err(Error::Shape(format!("mixed image sizes {h}x{w} and {:?}", bad.dim())));
    }
    let height = rows * h + (rows - 1) * SEPARATOR;
    let width = cols * w + (cols - 1) * SEPARATOR;
    let mut canvas = Array2::from_elem((height, width), 1.0f32);
    for r in 0..rows {
        for c in 0..cols {
            let (y, x) = (r * (h + SEPARATOR), c * (w + SEPARATOR));
            let mut cell = canvas.slice_mut(s![y..y + h, x..x + w]);
            match images.get(r * cols + c) {
                Some(img) => cell.assign(img),
                None => cell.fill(0.0),
            }
        }
    }
    Ok(canvas)
}

/// Tile and write a binary PGM; values are expected in `[0, 1]`.
pub fn emit_figure(images: &[Array2<f32>], rows: usize, cols: usize, path: &Path) -> Result<()> {
    let canvas = tile(images, rows, cols)?;
    vser_dsp::pgm::write(path, &canvas)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_sizes() {
        let img = Array2::<f32>::zeros((128, 128));
        assert_eq!(tile(std::slice::from_ref(&img), 1, 1).unwrap().dim(), (128, 128));
        let four = vec![img.clone(); 4];
        let c = tile(&four, 2, 2).unwrap();
        assert_eq!(c.dim(), (258, 258));
        assert_eq!(c[[128, 5]], 1.0);
        assert_eq!(c[[5, 129]], 1.0);
        assert_eq!(c[[130, 130]], 0.0);
    }

    #[test]
    fn layout_errors() {
        let a = Array2::<f32>::zeros((4, 4));
        let b = Array2::<f32>::zeros((4, 5));
        assert!(tile(&[a.clone(), b], 1, 2).is_err());
        assert!(tile(&[a.clone(), a.clone(), a], 1, 2).is_err());
        assert!(tile(&[], 1, 1).is_err());
    }
}
