//! Adam with bias correction.

use ndarray::{ArrayD, Zip};

use crate::error::{shape_err, Result};
use crate::module::{named_parameters_mut, Module};
use crate::scalar::Scalar;

/// One Adam update of a single tensor, in place. `step` is 1-based.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Scalar>(
    param: &mut ArrayD<T>,
    grad: &ArrayD<T>,
    first: &mut ArrayD<T>,
    second: &mut ArrayD<T>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || first.shape() != grad.shape() || second.shape() != grad.shape() {
        return shape_err(format!(
            "adam: param {:?}, grad {:?}",
            param.shape(),
            grad.shape()
        ));
    }
    let c1 = 1.0 - beta1.powi(step as i32);
    let c2 = 1.0 - beta2.powi(step as i32);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let (c1, c2, lr, eps) = (T::of(c1), T::of(c2), T::of(lr), T::of(eps));
    Zip::from(param)
        .and(grad)
        .and(first)
        .and(second)
        .for_each(|p, &g, m, v| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    Ok(())
}

/// Optimizer state: one pair of moment buffers per trainable parameter, in
/// the module's parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub names: Vec<String>,
    pub first_moment: Vec<ArrayD<T>>,
    pub second_moment: Vec<ArrayD<T>>,
}

impl<T> Default for AdamState<T> {
    fn default() -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            names: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Adam<T> {
    pub state: AdamState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new() -> Self {
        Self {
            state: AdamState::default(),
        }
    }

    /// Update every trainable parameter of `module` from its accumulated
    /// gradient. Frozen parameters are skipped.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M, lr: f64) -> Result<()> {
        let params: Vec<_> = named_parameters_mut(module)
            .into_iter()
            .filter(|(_, t)| t.requires_grad)
            .collect();
        let st = &mut self.state;
        if st.step == 0 && st.names.is_empty() {
            for (name, t) in &params {
                st.names.push(name.clone());
                st.first_moment.push(ArrayD::zeros(t.data.raw_dim()));
                st.second_moment.push(ArrayD::zeros(t.data.raw_dim()));
            }
        }
        if params.len() != st.names.len() {
            return shape_err(format!(
                "adam: {} parameters, state for {}",
                params.len(),
                st.names.len()
            ));
        }
        st.step += 1;
        for (i, (name, t)) in params.into_iter().enumerate() {
            if *name != st.names[i] {
                return shape_err(format!("adam: parameter {name} where {} expected", st.names[i]));
            }
            let Some(grad) = t.grad.as_ref() else { continue };
            adam_update(
                &mut t.data,
                grad,
                &mut st.first_moment[i],
                &mut st.second_moment[i],
                st.step,
                lr,
                st.beta1,
                st.beta2,
                st.eps,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, IxDyn};

    fn run(param: f64, grad: f64, lr: f64) -> f64 {
        let mut p = arr1(&[param]).into_dyn();
        let g = arr1(&[grad]).into_dyn();
        let mut m = ArrayD::zeros(IxDyn(&[1]));
        let mut v = ArrayD::zeros(IxDyn(&[1]));
        adam_update(&mut p, &g, &mut m, &mut v, 1, lr, 0.9, 0.999, 1e-8).unwrap();
        p[0]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        assert_eq!(run(0.7, 0.0, 1e-3), 0.7);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // m_hat = g and v_hat = g^2 at step 1, so the update is
        // -lr * g / (|g| + eps)
        for g in [1e-3, 0.5, -2.0, 40.0] {
            let lr = 1e-2;
            let delta = run(1.0, g, lr) - 1.0;
            let oracle = -lr * g / (g.abs() + 1e-8);
            assert!((delta - oracle).abs() < 1e-15);
            assert!(delta.abs() <= lr * (1.0 + 1e-3));
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = arr1(&[1.0]).into_dyn();
        let mut m = ArrayD::zeros(IxDyn(&[1]));
        let mut v = ArrayD::zeros(IxDyn(&[1]));
        let mut reached = None;
        for step in 1..=500u64 {
            let g = p.mapv(|w: f64| 2.0 * w);
            adam_update(&mut p, &g, &mut m, &mut v, step, 1e-2, 0.9, 0.999, 1e-8).unwrap();
            if reached.is_none() && p[0].abs() < 0.1 {
                reached = Some(step);
            }
        }
        assert!(reached.is_some());
        assert!(p[0].abs() < 0.1);
    }
}
