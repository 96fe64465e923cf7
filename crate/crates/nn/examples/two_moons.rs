//! Train a two-layer GELU network on two interleaved half circles with
//! Adam, then compare its analytic gradients with finite differences.
//!
//! `cargo run --release -p vser-nn --example two_moons`

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vser_nn::gradcheck::{check_module, FD_EPS};
use vser_nn::{cross_entropy, gelu, gelu_backward, zero_grad, Adam, Linear};

fn moons(n: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>) {
    let mut x = Array2::zeros((n, 2));
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for (i, &l) in labels.iter().enumerate() {
        let t = rng.random_range(0.0..PI);
        let (cx, cy, sign) = if l == 0 { (0.0, 0.0, 1.0) } else { (1.0, 0.5, -1.0) };
        x[[i, 0]] = cx + t.cos() + rng.random_range(-0.1..0.1);
        x[[i, 1]] = cy + sign * t.sin() + rng.random_range(-0.1..0.1);
    }
    (x, labels)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, labels) = moons(256, &mut rng);
    let mut l1 = Linear::<f64>::new(2, 32, &mut rng);
    let mut l2 = Linear::<f64>::new(32, 2, &mut rng);
    let (mut o1, mut o2) = (Adam::new(), Adam::new());

    for epoch in 0..=300 {
        zero_grad(&mut l1);
        zero_grad(&mut l2);
        let h = l1.forward(x.view()).unwrap();
        let a = gelu(&h);
        let z = l2.forward(a.view()).unwrap();
        let (loss, dz) = cross_entropy(z.view(), &labels).unwrap();
        let da = l2.backward(a.view(), dz.view()).unwrap();
        l1.backward(x.view(), gelu_backward(&h, &da).view()).unwrap();
        o1.step(&mut l1, 1e-2).unwrap();
        o2.step(&mut l2, 1e-2).unwrap();
        if epoch % 50 == 0 {
            let correct = z
                .axis_iter(Axis(0))
                .zip(&labels)
                .filter(|(row, &l)| row[l] >= row[1 - l])
                .count();
            println!("epoch {epoch:>3}  loss {loss:.4}  accuracy {:.3}", correct as f64 / labels.len() as f64);
        }
    }

    // first-layer gradients against central differences, second layer fixed
    let batch = x.slice(ndarray::s![..8, ..]).to_owned();
    let lab = &labels[..8];
    let loss = |m: &Linear<f64>| {
        let z = l2.forward(gelu(&m.forward(batch.view()).unwrap()).view()).unwrap();
        cross_entropy(z.view(), lab).unwrap().0
    };
    let mut probe = l2.clone();
    let report = check_module(&mut l1, FD_EPS, loss, |m| {
        let h = m.forward(batch.view()).unwrap();
        let a = gelu(&h);
        let z = probe.forward(a.view()).unwrap();
        let (_, dz) = cross_entropy(z.view(), lab).unwrap();
        let da = probe.backward(a.view(), dz.view()).unwrap();
        m.backward(batch.view(), gelu_backward(&h, &da).view()).unwrap();
    });
    for (name, err) in report {
        println!("gradient check {name}: relative error {err:.2e}");
    }
}
