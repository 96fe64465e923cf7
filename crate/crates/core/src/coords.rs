//! Image coordinate encoding.
//!
//! Two constant channels holding each pixel's column and row position,
//! linearly spaced over `[-1, 1]`, are appended to the feature channels.

use ndarray::{s, Array2, Array3, ArrayView3};
use vser_nn::Scalar;

use crate::error::{shape_err, Result};

/// Linear spacing over `[-1, 1]`; a single position maps to 0.
fn axis(n: usize, i: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    /// Varies along columns only.
    pub x: Array2<f64>,
    /// Varies along rows only.
    pub y: Array2<f64>,
}

impl CoordinateGrid {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            x: Array2::from_shape_fn((h, w), |(_, c)| axis(w, c)),
            y: Array2::from_shape_fn((h, w), |(r, _)| axis(h, r)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.x.dim()
    }
}

/// `[C, H, W]` -> `[C + 2, H, W]` with channel order `[features, x, y]`.
pub fn coordinate_encode<T: Scalar>(x: ArrayView3<T>, grid: &CoordinateGrid) -> Result<Array3<T>> {
    let (c, h, w) = x.dim();
    if (h, w) != grid.dim() {
        return shape_err(format!("coordinate_encode: input {:?}, grid {:?}", x.dim(), grid.dim()));
    }
    let mut out = Array3::zeros((c + 2, h, w));
    out.slice_mut(s![..c, .., ..]).assign(&x);
    out.slice_mut(s![c, .., ..]).assign(&grid.x.mapv(T::of));
    out.slice_mut(s![c + 1, .., ..]).assign(&grid.y.mapv(T::of));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_and_midpoint() {
        let g = CoordinateGrid::new(128, 128);
        assert_eq!((g.x[[0, 0]], g.y[[0, 0]]), (-1.0, -1.0));
        assert_eq!((g.x[[127, 127]], g.y[[127, 127]]), (1.0, 1.0));
        assert!((g.x[[0, 64]] - (-1.0 + 128.0 / 127.0)).abs() < 1e-15);
        assert!((g.x[[0, 64]] - 0.0079).abs() < 1e-4);
    }

    #[test]
    fn channels_vary_along_one_axis() {
        let g = CoordinateGrid::new(5, 7);
        for r in 0..5 {
            assert_eq!(g.x.row(r), g.x.row(0));
        }
        for c in 0..7 {
            assert_eq!(g.y.column(c), g.y.column(0));
        }
    }

    #[test]
    fn features_copied_bitwise() {
        let x = Array3::from_shape_fn((1, 4, 6), |(_, r, c)| (r * 6 + c) as f32 * 0.37);
        let g = CoordinateGrid::new(4, 6);
        let y = coordinate_encode(x.view(), &g).unwrap();
        assert_eq!(y.dim(), (3, 4, 6));
        assert_eq!(y.slice(s![0..1, .., ..]), x);
        let other = coordinate_encode(Array3::<f32>::ones((1, 4, 6)).view(), &g).unwrap();
        assert_eq!(y.slice(s![1.., .., ..]), other.slice(s![1.., .., ..]));
        assert!(coordinate_encode(x.view(), &CoordinateGrid::new(6, 4)).is_err());
    }
}
