//! Architecture checks: shapes at full size, token permutation behaviour,
//! and finite-difference gradients through whole toy networks.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vser::{patchify, unpatchify, ModelSpec, Role, VitModel};
use vser_nn::gradcheck::{check_module, numeric_grad, relative_error, FD_EPS};
use vser_nn::{cross_entropy, l1_loss};

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((h, w), || rng.random_range(0.0..1.0))
}

fn permute_columns(img: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    img.select(Axis(1), perm)
}

#[test]
fn full_size_feature_maps_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(128, 128, &mut rng).mapv(|v| v as f32);
    let teacher = VitModel::<f32>::new(&ModelSpec::teacher(6, 5, 7), &mut rng).unwrap();
    let student = VitModel::<f32>::new(&ModelSpec::student(7), &mut rng).unwrap();
    let ft = teacher.forward(img.view()).unwrap();
    let fs = student.forward(img.view()).unwrap();
    assert_eq!(ft.feature_map.dim(), (128, 256));
    assert_eq!(fs.feature_map.dim(), ft.feature_map.dim());
    assert_eq!(ft.tokens().dim(), (128, 384));
    assert_eq!(fs.tokens().dim(), (128, 128));
    let stem = teacher.stem.as_ref().unwrap();
    let (y, _) = stem.forward(img.view().insert_axis(Axis(0))).unwrap();
    assert_eq!(y.dim(), (1, 128, 128));
}

#[test]
fn student_is_permutation_invariant_teacher_is_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(128, 128, &mut rng);
    let mut perm: Vec<usize> = (0..128).collect();
    perm.shuffle(&mut rng);
    let shuffled = permute_columns(&img, &perm);

    let student = VitModel::<f64>::new(&ModelSpec::student(7), &mut rng).unwrap();
    let a = student.forward(img.view()).unwrap();
    let b = student.forward(shuffled.view()).unwrap();
    let diff = (&a.logits - &b.logits).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
    assert!(diff < 1e-9, "student logits moved by {diff:e}");
    // feature-map rows follow the permutation
    let permuted = a.feature_map.select(Axis(0), &perm);
    let row_diff = (&permuted - &b.feature_map).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
    assert!(row_diff < 1e-9);

    let mut spec = ModelSpec::teacher(1, 2, 7);
    spec.stem_channels = vec![4, 1];
    let teacher = VitModel::<f64>::new(&spec, &mut rng).unwrap();
    let a = teacher.forward(img.view()).unwrap();
    let b = teacher.forward(shuffled.view()).unwrap();
    let diff = (&a.logits - &b.logits).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
    assert!(diff > 1e-6, "teacher logits unchanged ({diff:e})");
}

#[test]
fn patchify_round_trips_teacher_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Array3::from_shape_simple_fn((3, 128, 128), || rng.random_range(-1.0..1.0));
    for (ph, pw) in [(128, 1), (16, 16)] {
        let t = patchify(x.view(), ph, pw).unwrap();
        assert_eq!(unpatchify(t.view(), 3, 128, 128, ph, pw).unwrap(), x);
    }
}

/// Depth-1 network with 4 tokens of width 8.
fn toy(role: Role) -> ModelSpec {
    let mut s = match role {
        Role::Student => ModelSpec::student(3),
        _ => ModelSpec::teacher(1, 2, 3),
    }
    .with_image(2, 4);
    s.depth = 1;
    s.heads = 2;
    s.head_dim = 4;
    s.token_dim = 8;
    s.mlp_hidden = 12;
    s.head_hidden = 6;
    if s.use_conv_stem {
        s.stem_channels = vec![2, 1];
    }
    s
}

fn end_to_end(role: Role, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = toy(role);
    assert_eq!(spec.n_tokens(), 4);
    let mut model = VitModel::<f64>::new(&spec, &mut rng).unwrap();
    // spread weights so every nonlinearity is exercised
    for (_, t) in vser_nn::module::named_parameters_mut(&mut model) {
        t.data.mapv_inplace(|v| v * 10.0 + rng.random_range(-0.1..0.1));
    }
    let img = random_image(2, 4, &mut rng);
    let label = [1usize];
    let target = Array2::from_shape_simple_fn((4, 8), || rng.random_range(-1.0..1.0));
    let alpha = 10.0;
    let loss = |m: &VitModel<f64>, img: &Array2<f64>| {
        let f = m.forward(img.view()).unwrap();
        let logits = f.logits.view().insert_axis(Axis(0));
        cross_entropy(logits, &label).unwrap().0 + alpha * l1_loss(f.feature_map.view(), target.view()).unwrap().0
    };
    let mut dtokens = None;
    let report = check_module(&mut model, FD_EPS, |m| loss(m, &img), |m| {
        let f = m.forward(img.view()).unwrap();
        let (_, dlog) = cross_entropy(f.logits.view().insert_axis(Axis(0)), &label).unwrap();
        let (_, dfeat) = l1_loss(f.feature_map.view(), target.view()).unwrap();
        let dlog: Array1<f64> = dlog.index_axis_move(Axis(0), 0);
        dtokens = Some(m.backward(&f, Some(dlog.view()), Some((dfeat * alpha).view())).unwrap());
    });
    assert!(!report.is_empty());
    for (name, err) in &report {
        if name.starts_with("stem.conv") && name.ends_with(".bias") {
            // a per-channel constant is removed by the following instance norm
            continue;
        }
        assert!(*err < 1e-4, "{role}: {name} relative error {err:e}");
    }
    for (name, t) in vser_nn::named_parameters(&model) {
        if name.starts_with("stem.conv") && name.ends_with(".bias") {
            let g = t.grad.as_ref().unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-9), "{name} gradient {g}");
        }
    }
    if role == Role::Student {
        // tokens are the image columns, so the token gradient is checkable
        let numeric = numeric_grad(&img.clone().into_dyn(), FD_EPS, |p| {
            loss(&model, &p.clone().into_dimensionality().unwrap())
        });
        let analytic = dtokens.unwrap().t().to_owned().into_dyn();
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }
}

#[test]
fn toy_student_gradients_end_to_end() {
    for seed in 0..3 {
        end_to_end(Role::Student, seed);
    }
}

#[test]
fn toy_teacher_gradients_end_to_end() {
    for seed in 10..13 {
        end_to_end(Role::Teacher, seed);
    }
}
