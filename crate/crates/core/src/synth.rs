//! Generated data for tests, examples and benchmarks.
//!
//! * A positional benchmark: a bright vertical bar sits in one of four
//!   time quadrants and the class is the quadrant. Every bar column looks
//!   alike, so only position tells classes apart.
//! * Class-dependent voiced clips (harmonic stacks with per-class pitch,
//!   vibrato and envelope) written with SAVEE-style names, standing in for
//!   the licensed corpora.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vser_dsp::AudioClip;

use crate::dataset::SAVEE_CODES;
use crate::error::Result;
use crate::spec::{ModelSpec, Role};
use crate::train::{split_dataset, train_stage_a, Example, Observer, Stage, StageConfig, TrainRun};
use crate::vit::VitModel;

/// `n` images of `h x w`; label = quadrant of the bar along the width.
pub fn bar_images(n: usize, h: usize, w: usize, seed: u64) -> Vec<(Array2<f32>, usize)> {
    assert!(w >= 8 && w % 4 == 0, "width must be a multiple of 4, at least 8");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quarter = w / 4;
    (0..n)
        .map(|i| {
            let label = i % 4;
            let mut img = Array2::from_shape_simple_fn((h, w), || rng.random_range(0.0..0.3f32));
            let width = 2.min(quarter);
            let start = label * quarter + rng.random_range(0..=quarter - width);
            let level = rng.random_range(0.8..1.0f32);
            for c in start..start + width {
                img.column_mut(c).mapv_inplace(|v| (v + level).min(1.0));
            }
            (img, label)
        })
        .collect()
}

/// Desk-scale positional benchmark: a small network of a given role
/// trained on [`bar_images`] with an 80/20 stratified split.
#[derive(Debug, Clone, PartialEq)]
pub struct BarBenchmark {
    pub n_images: usize,
    pub h: usize,
    pub w: usize,
    pub depth: usize,
    pub heads: usize,
    pub token_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
}

impl Default for BarBenchmark {
    /// 400 images of 16 x 32, a depth-1 two-head network, 30 epochs.
    fn default() -> Self {
        Self {
            n_images: 400,
            h: 16,
            w: 32,
            depth: 1,
            heads: 2,
            token_dim: 32,
            epochs: 30,
            batch_size: 8,
            lr0: 1e-3,
            seed: 0,
        }
    }
}

impl BarBenchmark {
    /// The network for `role`, shrunk to the benchmark canvas.
    pub fn spec(&self, role: Role) -> ModelSpec {
        let mut s = match role {
            Role::Teacher => ModelSpec::teacher(self.depth, self.heads, 4),
            Role::TeacherNoIce => ModelSpec::teacher_no_ice(self.depth, self.heads, 4),
            Role::Student => ModelSpec::student(4),
            Role::SquareVariant => ModelSpec::square_variant(self.depth, self.heads, 4),
        }
        .with_image(self.h, self.w);
        if role == Role::SquareVariant {
            s.patch_h = self.h.min(8);
            s.patch_w = 4;
        }
        s.depth = self.depth;
        s.heads = self.heads;
        s.head_dim = self.token_dim / self.heads;
        s.token_dim = self.token_dim;
        s.mlp_hidden = 2 * self.token_dim;
        s.head_hidden = self.token_dim;
        if s.use_conv_stem {
            s.stem_channels = vec![4, 1];
        }
        s
    }

    /// Train and test examples, identical for every role.
    pub fn data(&self) -> Result<(Vec<Example>, Vec<Example>)> {
        let images = bar_images(self.n_images, self.h, self.w, self.seed);
        let labels: Vec<usize> = images.iter().map(|(_, l)| *l).collect();
        let split = split_dataset(&labels, 0.8, self.seed)?;
        let pick = |idx: &[usize]| {
            idx.iter()
                .map(|&i| Example {
                    clip_id: format!("bar{i:04}"),
                    variant: "original".into(),
                    label: images[i].1,
                    image: images[i].0.clone(),
                })
                .collect()
        };
        Ok((pick(&split.train), pick(&split.test)))
    }

    /// Train a fresh network of `role` with cross entropy only.
    pub fn run(&self, role: Role, observer: &mut dyn Observer) -> Result<TrainRun> {
        let (train, test) = self.data()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x4241_5253);
        let mut model = VitModel::<f32>::new(&self.spec(role), &mut rng)?;
        let mut cfg = StageConfig::new(Stage::ATeacher);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.lr0 = self.lr0;
        cfg.lr_halving_period = self.epochs.div_ceil(3).max(1);
        train_stage_a(&mut model, &train, &test, &cfg, self.seed, observer)
    }
}

/// Fundamental, vibrato rate and envelope shape per class.
fn voice(class: usize) -> (f64, f64, f64) {
    let f0 = 110.0 * 1.18f64.powi(class as i32);
    let vibrato = 2.0 + 1.5 * class as f64;
    let attack = 0.05 + 0.08 * (class % 4) as f64;
    (f0, vibrato, attack)
}

/// A voiced clip for `class`, varied by `variant`. Voiced for 1.5-3.5 s
/// at a random onset, silent elsewhere; total length `seconds`.
pub fn voiced_clip(class: usize, variant: u64, sample_rate: u32, seconds: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(variant.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ class as u64);
    let (f0, vib, attack) = voice(class);
    let f0 = f0 * rng.random_range(0.95..1.05);
    let sr = sample_rate as f64;
    let n = (seconds * sr).round() as usize;
    let voiced = rng.random_range(1.5..3.5f64).min(seconds);
    let onset = rng.random_range(0.0..(seconds - voiced).max(1e-3));
    let bright = 0.6 + 0.05 * class as f64;
    let norm: f64 = (1..=8).map(|k| bright.powi(k)).sum();
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let local = t - onset;
            if local < 0.0 || local > voiced {
                return 0.0;
            }
            let env = (local / attack).min(1.0) * ((voiced - local) / 0.05).min(1.0);
            let f = f0 * (1.0 + 0.03 * (TAU * vib * t).sin());
            phase += TAU * f / sr;
            let tone: f64 = (1..=8).map(|k| bright.powi(k) * (k as f64 * phase).sin()).sum();
            0.5 * env * tone / norm + 0.01 * rng.random_range(-1.0..1.0)
        })
        .collect();
    AudioClip::new(samples, sample_rate).expect("positive sample rate")
}

/// SAVEE-style tree: `root/<speaker>/<code><NN>.wav`, `per_class` clips
/// per emotion, speakers rotating over DC, JE, JK, KL.
pub fn write_savee_fixture(root: &Path, per_class: usize, seed: u64) -> Result<Vec<PathBuf>> {
    const SPEAKERS: [&str; 4] = ["DC", "JE", "JK", "KL"];
    let mut paths = Vec::new();
    for (class, (code, _)) in SAVEE_CODES.iter().enumerate() {
        for k in 0..per_class {
            let dir = root.join(SPEAKERS[k % SPEAKERS.len()]);
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{code}{:02}.wav", k + 1));
            let clip = voiced_clip(class, seed.wrapping_add(k as u64 * 31 + 1), 16_000, 4.0);
            vser_dsp::wav::write_pcm16(&path, &clip)?;
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}
