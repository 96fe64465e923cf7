use ndarray::{Array, ArrayBase, Data, Dimension, Zip};

use crate::scalar::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn phi<T: Scalar>(x: T) -> T {
    T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu<T, S, D>(x: &ArrayBase<S, D>) -> Array<T, D>
where
    T: Scalar,
    S: Data<Elem = T>,
    D: Dimension,
{
    x.mapv(|v| v * phi(v))
}

/// `dy * (Phi(x) + x * pdf(x))`.
pub fn gelu_backward<T, S1, S2, D>(x: &ArrayBase<S1, D>, dy: &ArrayBase<S2, D>) -> Array<T, D>
where
    T: Scalar,
    S1: Data<Elem = T>,
    S2: Data<Elem = T>,
    D: Dimension,
{
    Zip::from(x).and(dy).map_collect(|&v, &g| {
        let pdf = T::of(FRAC_1_SQRT_2PI) * (-(v * v) * T::of(0.5)).exp();
        g * (phi(v) + v * pdf)
    })
}
