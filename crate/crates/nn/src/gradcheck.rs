//! Central finite-difference gradient checking.

use ndarray::ArrayD;

use crate::module::{named_parameters, named_parameters_mut, zero_grad, Module};

/// Default perturbation for `f64` checks.
pub const FD_EPS: f64 = 1e-6;

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad<F>(x: &ArrayD<f64>, eps: f64, mut f: F) -> ArrayD<f64>
where
    F: FnMut(&ArrayD<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut grad = ArrayD::zeros(x.raw_dim());
    for i in 0..x.len() {
        let orig = probe.as_slice_mut().expect("contiguous")[i];
        probe.as_slice_mut().unwrap()[i] = orig + eps;
        let plus = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig - eps;
        let minus = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig;
        grad.as_slice_mut().unwrap()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// `max |a - n| / max(max |a|, max |n|, 1e-8)`: the worst element error
/// relative to the tensor's gradient scale.
pub fn relative_error(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    let diff = analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .map(|v| v.abs())
        .fold(1e-8, f64::max);
    diff / scale
}

/// Compare the gradients a module accumulates in `backward` with central
/// differences of `loss`.
///
/// `backward` must zero nothing itself; it runs once on a freshly zeroed
/// module and leaves the analytic gradients in the parameters. Returns the
/// relative error per parameter name.
pub fn check_module<M, L, B>(module: &mut M, eps: f64, mut loss: L, backward: B) -> Vec<(String, f64)>
where
    M: Module<f64>,
    L: FnMut(&M) -> f64,
    B: FnOnce(&mut M),
{
    zero_grad(module);
    backward(module);
    let analytic: Vec<(String, ArrayD<f64>)> = named_parameters(module)
        .into_iter()
        .map(|(n, t)| (n, t.grad.clone().expect("trainable parameter")))
        .collect();
    let mut report = Vec::with_capacity(analytic.len());
    for (idx, (name, grad)) in analytic.into_iter().enumerate() {
        let mut numeric = ArrayD::zeros(grad.raw_dim());
        for i in 0..grad.len() {
            let perturb = |m: &mut M, delta: f64| {
                let mut params = named_parameters_mut(m);
                let data = &mut params[idx].1.data;
                data.as_slice_mut().expect("contiguous")[i] += delta;
            };
            perturb(module, eps);
            let plus = loss(module);
            perturb(module, -2.0 * eps);
            let minus = loss(module);
            perturb(module, eps);
            numeric.as_slice_mut().unwrap()[i] = (plus - minus) / (2.0 * eps);
        }
        report.push((name, relative_error(&grad, &numeric)));
    }
    report
}
