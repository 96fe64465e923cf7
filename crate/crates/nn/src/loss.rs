use ndarray::{Array, Array2, ArrayView, ArrayView2, Dimension, Zip};

use crate::error::{shape_err, NnError, Result};
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross entropy over the batch and its gradient with respect to the
/// logits, `(softmax - one_hot) / B`.
pub fn cross_entropy<T: Scalar>(logits: ArrayView2<T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    let (batch, classes) = logits.dim();
    if batch == 0 || labels.len() != batch {
        return shape_err(format!("cross_entropy: {batch} rows, {} labels", labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::InvalidLabel { label, classes });
    }
    let mut grad = Array2::zeros((batch, classes));
    let mut total = T::zero();
    let scale = T::one() / T::of(batch as f64);
    for ((row, mut g), &label) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        total += log_sum - row[label];
        Zip::from(&mut g).and(&row).for_each(|gi, &v| *gi = (v - log_sum).exp() * scale);
        g[label] -= scale;
    }
    Ok((total * scale, grad))
}

/// Mean absolute error and its gradient with respect to `a`,
/// `sign(a - b) / n` with `sign(0) = 0`.
pub fn l1_loss<T: Scalar, D: Dimension>(
    a: ArrayView<T, D>,
    b: ArrayView<T, D>,
) -> Result<(T, Array<T, D>)> {
    if a.shape() != b.shape() || a.is_empty() {
        return shape_err(format!("l1_loss: {:?} vs {:?}", a.shape(), b.shape()));
    }
    let inv_n = T::one() / T::of(a.len() as f64);
    let mut sum = T::zero();
    let grad = Zip::from(&a).and(&b).map_collect(|&x, &y| {
        let d = x - y;
        sum += d.abs();
        if d > T::zero() {
            inv_n
        } else if d < T::zero() {
            -inv_n
        } else {
            T::zero()
        }
    });
    Ok((sum * inv_n, grad))
}
