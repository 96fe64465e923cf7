use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView4, ArrayViewD, Ix1, Ix2, Ix4, IxDyn};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// An n-dimensional value with an optional same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub data: ArrayD<T>,
    pub grad: Option<ArrayD<T>>,
    pub requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    /// A trainable tensor with a zeroed gradient buffer.
    pub fn param(data: ArrayD<T>) -> Self {
        let grad = Some(ArrayD::zeros(data.raw_dim()));
        Self {
            data,
            grad,
            requires_grad: true,
        }
    }

    pub fn constant(data: ArrayD<T>) -> Self {
        Self {
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::param(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::param(ArrayD::ones(IxDyn(shape)))
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(T::zero());
        }
    }

    /// Add `g` into the gradient buffer. No-op for frozen tensors.
    pub fn accumulate(&mut self, g: ArrayViewD<T>) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        if g.shape() != self.data.shape() {
            return shape_err(format!(
                "gradient {:?} vs tensor {:?}",
                g.shape(),
                self.data.shape()
            ));
        }
        let dim = self.data.raw_dim();
        let buf = self.grad.get_or_insert_with(|| ArrayD::zeros(dim));
        *buf += &g;
        Ok(())
    }

    pub fn view1(&self) -> ArrayView1<'_, T> {
        self.data.view().into_dimensionality::<Ix1>().expect("rank-1 tensor")
    }

    pub fn view2(&self) -> ArrayView2<'_, T> {
        self.data.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
    }

    pub fn view4(&self) -> ArrayView4<'_, T> {
        self.data.view().into_dimensionality::<Ix4>().expect("rank-4 tensor")
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element type, dropping any gradient.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            data: self.data.mapv(|v| U::of(v.as_f64())),
            grad: self.grad.as_ref().map(|g| ArrayD::zeros(g.raw_dim())),
            requires_grad: self.requires_grad,
        }
    }
}
