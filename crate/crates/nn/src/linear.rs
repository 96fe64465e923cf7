use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{shape_err, Result};
use crate::init::{trunc_normal, INIT_STD};
use crate::module::{join, Module};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `y = x W + b` for `x: [n, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
pub fn linear<T: Scalar>(
    x: ArrayView2<T>,
    w: ArrayView2<T>,
    b: ArrayView1<T>,
) -> Result<Array2<T>> {
    if x.ncols() != w.nrows() || w.ncols() != b.len() {
        return shape_err(format!(
            "linear: x {:?}, W {:?}, b {:?}",
            x.dim(),
            w.dim(),
            b.len()
        ));
    }
    let mut y = x.dot(&w);
    y += &b;
    Ok(y)
}

pub struct LinearGrads<T> {
    pub dx: Array2<T>,
    pub dw: Array2<T>,
    pub db: ndarray::Array1<T>,
}

pub fn linear_backward<T: Scalar>(
    x: ArrayView2<T>,
    w: ArrayView2<T>,
    dy: ArrayView2<T>,
) -> LinearGrads<T> {
    LinearGrads {
        dx: dy.dot(&w.t()),
        dw: x.t().dot(&dy),
        db: dy.sum_axis(Axis(0)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: trunc_normal(&[d_in, d_out], INIT_STD, rng),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        linear(x, self.weight.view2(), self.bias.view1())
    }

    /// Accumulate `dW`, `db` and return `dx`.
    pub fn backward(&mut self, x: ArrayView2<T>, dy: ArrayView2<T>) -> Result<Array2<T>> {
        let g = linear_backward(x, self.weight.view2(), dy);
        self.weight.accumulate(g.dw.into_dyn().view())?;
        self.bias.accumulate(g.db.into_dyn().view())?;
        Ok(g.dx)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
