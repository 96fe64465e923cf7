//! Instance and layer normalization.
//!
//! Both standardize the rows of a 2-D view (instance norm: one row per
//! channel over `H * W`; layer norm: one row per token over the feature
//! axis) and then apply a learned scale and shift.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};

use crate::error::{shape_err, Result};
use crate::module::{join, Module};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

/// Per-row standardized values and inverse standard deviations.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

/// `(x - mean) / sqrt(var + eps)` per row (biased variance).
pub fn standardize_rows<T: Scalar>(x: ArrayView2<T>, eps: T) -> NormCache<T> {
    let n = T::of(x.ncols() as f64);
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * inv);
        *s = inv;
    }
    NormCache { xhat, inv_std }
}

/// Gradient through [`standardize_rows`] given `d xhat`.
pub fn standardize_rows_backward<T: Scalar>(cache: &NormCache<T>, dxhat: ArrayView2<T>) -> Array2<T> {
    let n = T::of(cache.xhat.ncols() as f64);
    let mut dx = Array2::zeros(dxhat.dim());
    for (((mut out, g), xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / n;
        let mean_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / n;
        Zip::from(&mut out)
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = inv * (gi - mean_g - xi * mean_gx));
    }
    dx
}

/// Instance normalization of `x: [C, H, W]` with per-channel affine.
pub fn instance_norm<T: Scalar>(
    x: ArrayView3<T>,
    gamma: ArrayView1<T>,
    beta: ArrayView1<T>,
) -> Result<Array3<T>> {
    let (c, h, w) = x.dim();
    if gamma.len() != c || beta.len() != c || h * w < 2 {
        return shape_err(format!("instance_norm: x {:?}, affine {}", x.dim(), gamma.len()));
    }
    let x = x.as_standard_layout();
    let rows = x.view().into_shape_with_order((c, h * w)).expect("contiguous");
    let cache = standardize_rows(rows, T::of(NORM_EPS));
    let y = cache.xhat * &gamma.insert_axis(Axis(1)) + &beta.insert_axis(Axis(1));
    Ok(y.into_shape_with_order((c, h, w)).expect("same size"))
}

/// Layer normalization of `x: [n, d]` over the last axis.
pub fn layer_norm<T: Scalar>(
    x: ArrayView2<T>,
    gamma: ArrayView1<T>,
    beta: ArrayView1<T>,
) -> Result<Array2<T>> {
    if gamma.len() != x.ncols() || beta.len() != x.ncols() {
        return shape_err(format!("layer_norm: x {:?}, affine {}", x.dim(), gamma.len()));
    }
    let cache = standardize_rows(x, T::of(NORM_EPS));
    Ok(cache.xhat * &gamma + &beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
        }
    }

    pub fn forward(&self, x: ArrayView3<T>) -> Result<(Array3<T>, NormCache<T>)> {
        let (c, h, w) = x.dim();
        if self.gamma.len() != c || h * w < 2 {
            return shape_err(format!("instance_norm: x {:?}, channels {}", x.dim(), self.gamma.len()));
        }
        let x = x.as_standard_layout();
        let rows = x.view().into_shape_with_order((c, h * w)).expect("contiguous");
        let cache = standardize_rows(rows, T::of(NORM_EPS));
        let y = &cache.xhat * &self.gamma.view1().insert_axis(Axis(1))
            + &self.beta.view1().insert_axis(Axis(1));
        Ok((y.into_shape_with_order((c, h, w)).expect("same size"), cache))
    }

    pub fn backward(&mut self, cache: &NormCache<T>, dy: ArrayView3<T>) -> Result<Array3<T>> {
        let (c, h, w) = dy.dim();
        let dy = dy.as_standard_layout();
        let dy2 = dy.view().into_shape_with_order((c, h * w)).expect("contiguous");
        let dgamma = (&dy2 * &cache.xhat).sum_axis(Axis(1));
        let dbeta = dy2.sum_axis(Axis(1));
        let dxhat = &dy2 * &self.gamma.view1().insert_axis(Axis(1));
        self.gamma.accumulate(dgamma.into_dyn().view())?;
        self.beta.accumulate(dbeta.into_dyn().view())?;
        let dx = standardize_rows_backward(cache, dxhat.view());
        Ok(dx.into_shape_with_order((c, h, w)).expect("same size"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[dim]),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, NormCache<T>)> {
        if self.gamma.len() != x.ncols() {
            return shape_err(format!("layer_norm: x {:?}, dim {}", x.dim(), self.gamma.len()));
        }
        let cache = standardize_rows(x, T::of(NORM_EPS));
        let y = &cache.xhat * &self.gamma.view1() + &self.beta.view1();
        Ok((y, cache))
    }

    pub fn backward(&mut self, cache: &NormCache<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let dgamma = (&dy * &cache.xhat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));
        let dxhat = &dy * &self.gamma.view1();
        self.gamma.accumulate(dgamma.into_dyn().view())?;
        self.beta.accumulate(dbeta.into_dyn().view())?;
        Ok(standardize_rows_backward(cache, dxhat.view()))
    }
}

macro_rules! affine_module {
    ($ty:ident) => {
        impl<T: Scalar> Module<T> for $ty<T> {
            fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
                out.push((join(prefix, "gamma"), &self.gamma));
                out.push((join(prefix, "beta"), &self.beta));
            }

            fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
                out.push((join(prefix, "gamma"), &mut self.gamma));
                out.push((join(prefix, "beta"), &mut self.beta));
            }
        }
    };
}

affine_module!(InstanceNorm);
affine_module!(LayerNorm);

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_channel_maps_to_zero() {
        let x = Array3::from_elem((2, 3, 3), 4.2f64);
        let y = instance_norm(x.view(), Array1::ones(2).view(), Array1::zeros(2).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let row = Array2::from_elem((1, 5), -3.0f64);
        let y = layer_norm(row.view(), Array1::ones(5).view(), Array1::zeros(5).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moments_are_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Normal::new(3.0, 5.0).unwrap();
        let x: Array3<f64> = Array3::from_shape_fn((4, 8, 8), |_| d.sample(&mut rng));
        let y = instance_norm(x.view(), Array1::ones(4).view(), Array1::zeros(4).view()).unwrap();
        for c in 0..4 {
            let ch = y.index_axis(Axis(0), c);
            let mean = ch.mean().unwrap();
            let var = ch.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
        let x2: Array2<f64> = Array2::from_shape_fn((6, 32), |_| d.sample(&mut rng));
        let y2 = layer_norm(x2.view(), Array1::ones(32).view(), Array1::zeros(32).view()).unwrap();
        for row in y2.rows() {
            let mean = row.mean().unwrap();
            assert!(mean.abs() < 1e-6);
            assert!((row.mapv(|v| (v - mean).powi(2)).mean().unwrap() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_pixel_rejected() {
        let x = Array3::<f64>::zeros((1, 1, 1));
        assert!(instance_norm(x.view(), Array1::ones(1).view(), Array1::zeros(1).view()).is_err());
    }
}
