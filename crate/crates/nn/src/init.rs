//! Parameter initialization.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

/// Normal(0, std) truncated to two standard deviations.
pub fn trunc_normal<T: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break T::of(z * std);
            }
        })
        .collect();
    Tensor::param(ArrayD::from_shape_vec(IxDyn(shape), values).expect("shape matches length"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let x: Tensor<f32> = trunc_normal(&[64, 64], INIT_STD, &mut a);
        let y: Tensor<f32> = trunc_normal(&[64, 64], INIT_STD, &mut b);
        assert_eq!(x, y);
        assert!(x.data.iter().all(|v| v.abs() <= 0.04 + 1e-7));
        let mean: f32 = x.data.iter().sum::<f32>() / 4096.0;
        assert!(mean.abs() < 0.002);
    }
}
