//! 3x3 convolution, stride 1, zero padding 1 (cross-correlation).

use ndarray::{Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayView4, Axis};
use rand::Rng;

use crate::error::{shape_err, Result};
use crate::init::{trunc_normal, INIT_STD};
use crate::module::{join, Module};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Unfold `x: [C, H, W]` into `[C * 9, H * W]`; row `c * 9 + ky * 3 + kx`
/// holds `x[c, y + ky - 1, x + kx - 1]` (zero outside the image).
fn im2col<T: Scalar>(x: ArrayView3<T>) -> Array2<T> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * 9, h * w));
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut dst[(ci * 9 + ky * 3 + kx) * h * w..][..h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    // output column range with a valid source column
                    let x_lo = if kx == 0 { 1 } else { 0 };
                    let x_hi = if kx == 2 { w.saturating_sub(1) } else { w };
                    if x_lo >= x_hi {
                        continue;
                    }
                    let sx_lo = x_lo + kx - 1;
                    let n = x_hi - x_lo;
                    row[y * w + x_lo..y * w + x_hi]
                        .copy_from_slice(&plane[sy * w + sx_lo..sy * w + sx_lo + n]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[C, H, W]`.
fn col2im<T: Scalar>(cols: ArrayView2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
    let mut x = Array3::zeros((c, h, w));
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let dst = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &src[(ci * 9 + ky * 3 + kx) * h * w..][..h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let x_lo = if kx == 0 { 1 } else { 0 };
                    let x_hi = if kx == 2 { w.saturating_sub(1) } else { w };
                    if x_lo >= x_hi {
                        continue;
                    }
                    let sx_lo = x_lo + kx - 1;
                    let n = x_hi - x_lo;
                    let target = &mut plane[sy * w + sx_lo..sy * w + sx_lo + n];
                    for (t, s) in target.iter_mut().zip(&row[y * w + x_lo..y * w + x_hi]) {
                        *t += *s;
                    }
                }
            }
        }
    }
    x
}

fn check_shapes<T>(x: &ArrayView3<T>, k: &ArrayView4<T>, bias_len: usize) -> Result<()> {
    let (c_in, h, w) = x.dim();
    let (c_out, k_in, kh, kw) = k.dim();
    if h == 0 || w == 0 || k_in != c_in || kh != 3 || kw != 3 || bias_len != c_out {
        return shape_err(format!(
            "conv2d_3x3: x {:?}, kernels {:?}, bias {bias_len}",
            (c_in, h, w),
            (c_out, k_in, kh, kw)
        ));
    }
    Ok(())
}

/// `x: [C_in, H, W]`, `kernels: [C_out, C_in, 3, 3]`, `bias: [C_out]` ->
/// `[C_out, H, W]`.
pub fn conv2d_3x3<T: Scalar>(
    x: ArrayView3<T>,
    kernels: ArrayView4<T>,
    bias: ArrayView1<T>,
) -> Result<Array3<T>> {
    check_shapes(&x, &kernels, bias.len())?;
    let (_, h, w) = x.dim();
    let c_out = kernels.dim().0;
    let k = kernels.as_standard_layout();
    let k2 = k.view().into_shape_with_order((c_out, kernels.len() / c_out)).expect("contiguous");
    let mut y = k2.dot(&im2col(x)).as_standard_layout().into_owned();
    y += &bias.insert_axis(Axis(1));
    Ok(y.into_shape_with_order((c_out, h, w)).expect("same size"))
}

pub struct ConvGrads<T> {
    pub dx: Array3<T>,
    pub dk: Array4<T>,
    pub db: ndarray::Array1<T>,
}

pub fn conv2d_3x3_backward<T: Scalar>(
    x: ArrayView3<T>,
    kernels: ArrayView4<T>,
    dy: ArrayView3<T>,
) -> Result<ConvGrads<T>> {
    check_shapes(&x, &kernels, kernels.dim().0)?;
    let (c_in, h, w) = x.dim();
    let c_out = kernels.dim().0;
    if dy.dim() != (c_out, h, w) {
        return shape_err(format!("conv2d_3x3 backward: dy {:?}", dy.dim()));
    }
    let dy = dy.as_standard_layout();
    let dy2 = dy.view().into_shape_with_order((c_out, h * w)).expect("contiguous");
    let k = kernels.as_standard_layout();
    let k2 = k.view().into_shape_with_order((c_out, c_in * 9)).expect("contiguous");
    let dk = dy2.dot(&im2col(x).t());
    let dcols = k2.t().dot(&dy2);
    Ok(ConvGrads {
        dx: col2im(dcols.view(), c_in, h, w),
        dk: dk.as_standard_layout().into_owned().into_shape_with_order((c_out, c_in, 3, 3)).expect("same size"),
        db: dy2.sum_axis(Axis(1)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d3x3<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d3x3<T> {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self {
            weight: trunc_normal(&[c_out, c_in, 3, 3], INIT_STD, rng),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: ArrayView3<T>) -> Result<Array3<T>> {
        conv2d_3x3(x, self.weight.view4(), self.bias.view1())
    }

    pub fn backward(&mut self, x: ArrayView3<T>, dy: ArrayView3<T>) -> Result<Array3<T>> {
        let g = conv2d_3x3_backward(x, self.weight.view4(), dy)?;
        self.weight.accumulate(g.dk.into_dyn().view())?;
        self.bias.accumulate(g.db.into_dyn().view())?;
        Ok(g.dx)
    }
}

impl<T: Scalar> Module<T> for Conv2d3x3<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
