//! The three-stage pipeline end to end, at desk scale, through the library.
//!
//! 1. Train the teacher (conv stem + coordinate channels) with cross entropy.
//! 2. Match a plain student's feature map to the frozen teacher's (L1).
//! 3. Train the student with `CE + alpha * L1` and a fresh classifier head.
//!
//! A generated SAVEE-style corpus goes through the full-size front end;
//! the networks are shrunk so the whole run takes a few minutes on one core.
//!
//! `cargo run --release --example three_stage -- [clips-per-emotion] [epochs]`

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vser::eval::evaluate;
use vser::synth::write_savee_fixture;
use vser::{
    load_prepared, prepare, train_stage_a, train_stage_b, train_stage_c, DatasetName, EpochMetrics, Example,
    Observer, RunConfig, Stage, VitModel,
};

struct Log(&'static str);

impl Observer for Log {
    fn on_epoch(&mut self, m: &EpochMetrics) -> ControlFlow<()> {
        println!(
            "[{}] epoch {:>2}  lr {:.1e}  train ce {:.4} l1 {:.4}  test wa {:.3}",
            self.0, m.epoch, m.lr, m.train.ce, m.train.l1, m.test.wa
        );
        ControlFlow::Continue(())
    }
}

fn test_wa(model: &VitModel<f32>, test: &[Example]) -> vser::Result<f64> {
    let images: Vec<_> = test.iter().map(|e| e.image.view()).collect();
    let labels: Vec<usize> = test.iter().map(|e| e.label).collect();
    Ok(evaluate(model, &images, &labels)?.weighted_accuracy)
}

fn main() -> vser::Result<()> {
    let mut args = std::env::args().skip(1);
    let per_class: usize = args.next().map_or(8, |s| s.parse().expect("clips per emotion"));
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epochs"));

    let work = std::env::temp_dir().join("vser-three-stage");
    let corpus = work.join("corpus");
    let _ = std::fs::remove_dir_all(&work);
    write_savee_fixture(&corpus, per_class, 1)?;

    let mut cfg = RunConfig::for_dataset(DatasetName::Fixture);
    cfg.data.root = corpus;
    for spec in [&mut cfg.teacher, &mut cfg.student] {
        spec.depth = 2;
        spec.heads = 2;
        spec.head_dim = 16;
        spec.token_dim = 32;
        spec.mlp_hidden = 64;
        spec.head_hidden = 32;
        if spec.use_conv_stem {
            spec.stem_channels = vec![4, 1];
        }
    }
    cfg.train.epochs = epochs;
    cfg.train.lr0 = 1e-3;
    cfg.train.lr_halving_period = epochs.div_ceil(2);
    cfg.validate()?;

    let cache = work.join("cache");
    let report = prepare(&cfg, &cache, 1)?;
    println!("prepared {} train and {} test images", report.count("train"), report.count("test"));
    let data = load_prepared(&cache)?;

    let mut teacher = VitModel::<f32>::new(&cfg.teacher, &mut ChaCha8Rng::seed_from_u64(1))?;
    let a = train_stage_a(&mut teacher, &data.train, &data.test, &cfg.train.stage(Stage::ATeacher), cfg.seed, &mut Log("A"))?;
    teacher.load_checkpoint(&a.best)?;

    let mut student = VitModel::<f32>::new(&cfg.student, &mut ChaCha8Rng::seed_from_u64(2))?;
    let b = train_stage_b(&mut student, &teacher, &data.train, &data.test, &cfg.train.stage(Stage::BMatch), cfg.seed, &mut Log("B"))?;
    student.load_checkpoint(&b.best)?;

    let c = train_stage_c(&mut student, &teacher, &data.train, &data.test, &cfg.train.stage(Stage::CStudent), cfg.seed, &mut Log("C"))?;
    student.load_checkpoint(&c.best)?;

    println!("teacher test WA {:.3}", test_wa(&teacher, &data.test)?);
    println!("student test WA {:.3}", test_wa(&student, &data.test)?);
    println!("labels: {}", data.labels.join(", "));
    Ok(())
}
