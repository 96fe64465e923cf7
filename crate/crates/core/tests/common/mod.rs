//! Small models and data shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vser::{Example, ModelSpec, Role};

/// A network of the given role on an `h x w` canvas with 16-wide tokens.
pub fn tiny_spec(role: Role, n_classes: usize, h: usize, w: usize) -> ModelSpec {
    let mut s = match role {
        Role::Teacher => ModelSpec::teacher(1, 2, n_classes),
        Role::Student => ModelSpec::student(n_classes),
        Role::TeacherNoIce => ModelSpec::teacher_no_ice(1, 2, n_classes),
        Role::SquareVariant => ModelSpec::square_variant(1, 2, n_classes),
    }
    .with_image(h, w);
    s.depth = if role == Role::Student { 2 } else { 1 };
    s.heads = 2;
    s.head_dim = 8;
    s.token_dim = 16;
    s.mlp_hidden = 32;
    s.head_hidden = 16;
    if s.use_conv_stem {
        s.stem_channels = vec![3, 1];
    }
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random images in `[0, 1)` with labels cycling through the classes.
pub fn random_examples(n: usize, h: usize, w: usize, n_classes: usize, seed: u64) -> Vec<Example> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Example {
            clip_id: format!("clip{i:03}"),
            variant: "original".into(),
            label: i % n_classes,
            image: Array2::from_shape_simple_fn((h, w), || r.random_range(0.0..1.0)),
        })
        .collect()
}

/// Cross entropy of one logit row, computed directly in `f64`.
pub fn ce_oracle(logits: ndarray::ArrayView1<f32>, label: usize) -> f64 {
    let z: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Mean absolute difference in `f64`.
pub fn l1_oracle(a: ArrayView2<f32>, b: ArrayView2<f32>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64
}

/// Batch totals recomputed from the recorded logits and features.
pub fn batch_oracle(labels: &[usize], logits: &Array2<f32>, s: &[&Array2<f32>], t: &[&Array2<f32>]) -> (f64, f64) {
    let b = labels.len() as f64;
    let ce = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &l)| ce_oracle(row, l))
        .sum::<f64>()
        / b;
    let l1 = s.iter().zip(t).map(|(a, b)| l1_oracle(a.view(), b.view())).sum::<f64>() / b;
    (ce, l1)
}
