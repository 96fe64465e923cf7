//! Analytic FLOPs count for a [`ModelSpec`].
//!
//! Counted: stem convolutions with bias, instance norms and GELUs, the
//! patch embedding, every block's norms, fused QKV projection, attention
//! scores, softmax, weighted sum, output projection, MLP and residual
//! adds, token pooling and the classifier. Elementwise costs: norm 5 per
//! element plus 2 for the affine, GELU 1, softmax 5, residual and bias
//! adds 1.

use std::fmt;

use crate::spec::ModelSpec;

/// How a multiply-accumulate is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlopsConvention {
    /// One operation per multiply-accumulate (the figure most model
    /// summaries report).
    #[default]
    MacAsOne,
    /// Multiply and add counted separately.
    MacAsTwo,
}

impl FlopsConvention {
    fn mac(self) -> u64 {
        match self {
            FlopsConvention::MacAsOne => 1,
            FlopsConvention::MacAsTwo => 2,
        }
    }
}

const NORM: u64 = 7;
const GELU: u64 = 1;
const SOFTMAX: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub convention: FlopsConvention,
    pub total: u64,
    /// `(component, count)`; sums to `total`.
    pub components: Vec<(String, u64)>,
}

impl FlopsReport {
    pub fn component(&self, name: &str) -> Option<u64> {
        self.components.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    pub fn giga(&self) -> f64 {
        self.total as f64 / 1e9
    }
}

impl fmt::Display for FlopsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, count) in &self.components {
            writeln!(f, "{name:<12} {:>10.4}G", *count as f64 / 1e9)?;
        }
        write!(f, "{:<12} {:>10.4}G", "total", self.giga())
    }
}

pub fn count_flops(spec: &ModelSpec) -> FlopsReport {
    count_flops_with(spec, FlopsConvention::default())
}

pub fn count_flops_with(spec: &ModelSpec, convention: FlopsConvention) -> FlopsReport {
    let mac = convention.mac();
    let as_u = |v: usize| v as u64;
    let pixels = as_u(spec.image_h * spec.image_w);
    let mut components = Vec::new();

    if spec.use_conv_stem {
        let mut stem = 0;
        let mut c_in = 1;
        for &c_out in &spec.stem_channels {
            let act = pixels * as_u(c_out);
            stem += act * as_u(c_in) * 9 * mac + act;
            stem += act * (NORM + GELU);
            c_in = c_out;
        }
        components.push(("stem".to_string(), stem));
    }

    let n = as_u(spec.n_tokens());
    let d = as_u(spec.token_dim);
    let inner = as_u(spec.inner_dim());
    let heads = as_u(spec.heads);
    let hd = as_u(spec.head_dim);
    let linear = |rows: u64, d_in: u64, d_out: u64| rows * d_in * d_out * mac + rows * d_out;

    components.push(("embed".to_string(), linear(n, as_u(spec.patch_dim()), d)));

    let block = 2 * n * d * NORM
        + linear(n, d, 3 * inner)
        + heads * n * n * hd * mac
        + heads * n * n
        + heads * n * n * SOFTMAX
        + heads * n * n * hd * mac
        + linear(n, inner, d)
        + n * d
        + linear(n, d, as_u(spec.mlp_hidden))
        + n * as_u(spec.mlp_hidden) * GELU
        + linear(n, as_u(spec.mlp_hidden), d)
        + n * d;
    components.push(("blocks".to_string(), block * as_u(spec.depth)));

    let hidden = as_u(spec.head_hidden);
    let head = n * d + linear(1, d, hidden) + hidden * GELU + linear(1, hidden, as_u(spec.n_classes));
    components.push(("head".to_string(), head));

    let total = components.iter().map(|(_, c)| c).sum();
    FlopsReport {
        convention,
        total,
        components,
    }
}
