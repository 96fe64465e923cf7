use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything that owns named parameters.
///
/// Names are dotted paths (`blocks.0.attn.qkv.weight`); the visiting order
/// is fixed and is the order used by the optimizer and the checkpoint file.
pub trait Module<T: Scalar> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);
}

/// Join a prefix and a field name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_parameters<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> Vec<(String, &Tensor<T>)> {
    let mut out = Vec::new();
    m.params("", &mut out);
    out
}

pub fn named_parameters_mut<T: Scalar, M: Module<T> + ?Sized>(
    m: &mut M,
) -> Vec<(String, &mut Tensor<T>)> {
    let mut out = Vec::new();
    m.params_mut("", &mut out);
    out
}

pub fn num_parameters<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> usize {
    named_parameters(m).iter().map(|(_, t)| t.len()).sum()
}

pub fn zero_grad<T: Scalar, M: Module<T> + ?Sized>(m: &mut M) {
    for (_, t) in named_parameters_mut(m) {
        t.zero_grad();
    }
}
