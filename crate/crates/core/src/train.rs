//! The three training stages.
//!
//! * A: teacher trained with cross entropy.
//! * B: student feature map pulled toward the frozen teacher's with L1
//!   only; the student's classifier head is frozen.
//! * C: student trained with `CE + alpha * L1` from the stage-B weights
//!   and a fresh classifier head.
//!
//! Batches are processed one example at a time with gradients accumulated
//! and scaled by `1 / B`, so a batch loss is the mean of its per-example
//! losses. The teacher is only ever borrowed immutably; its feature maps
//! are computed once per stage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vser_nn::{cross_entropy, zero_grad, Adam, Checkpoint};

use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::vit::VitModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "a_teacher")]
    ATeacher,
    #[serde(rename = "b_match")]
    BMatch,
    #[serde(rename = "c_student")]
    CStudent,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ATeacher => "a_teacher",
            Stage::BMatch => "b_match",
            Stage::CStudent => "c_student",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_halving_period: usize,
    pub alpha: f64,
}

impl StageConfig {
    /// 50 epochs, batch 4, lr 1e-4 halved every 10 epochs, alpha 10.
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            epochs: 50,
            batch_size: 4,
            lr0: 1e-4,
            lr_halving_period: 10,
            alpha: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.stage.name())));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.lr_halving_period == 0 {
            return bad("lr_halving_period must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        Ok(())
    }

    /// Weight on cross entropy and on L1 in the optimized total.
    pub fn loss_weights(&self) -> (f64, f64) {
        match self.stage {
            Stage::ATeacher => (1.0, 0.0),
            Stage::BMatch => (0.0, 1.0),
            Stage::CStudent => (1.0, self.alpha),
        }
    }
}

/// `lr0 * 0.5^floor(epoch / period)`.
pub fn lr_at(epoch: usize, cfg: &StageConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.lr_halving_period) as i32)
}

/// Class-stratified split of example indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, `round(n * (1 - ratio))` examples (at least one, at most
/// `n - 1`) go to the test split. Both index lists come back sorted.
pub fn split_dataset(labels: &[usize], ratio: f64, seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(Error::InvalidDataset("empty manifest".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRatio(ratio));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut idx) in by_class {
        let n = idx.len();
        if n < 2 {
            return Err(Error::Stratify { label, count: n });
        }
        idx.shuffle(&mut rng);
        let n_test = ((n as f64 * (1.0 - ratio)).round() as usize).clamp(1, n - 1);
        split.test.extend_from_slice(&idx[..n_test]);
        split.train.extend_from_slice(&idx[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// One network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Source clip; augmented variants share it.
    pub clip_id: String,
    /// `original`, `noise`, `time_shift` or `speed`.
    pub variant: String,
    pub label: usize,
    pub image: Array2<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitMetrics {
    pub ce: f64,
    pub l1: f64,
    pub total: f64,
    pub wa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

/// One optimizer step, as seen by an observer.
#[derive(Debug)]
pub struct BatchRecord<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub labels: Vec<usize>,
    /// `[B, n_classes]`.
    pub logits: Array2<f32>,
    pub student_features: Vec<&'a Array2<f32>>,
    pub teacher_features: Option<Vec<&'a Array2<f32>>>,
    pub ce: f64,
    pub l1: f64,
    pub total: f64,
    pub alpha: f64,
}

pub trait Observer {
    fn on_batch(&mut self, _record: &BatchRecord<'_>) {}

    /// Returning `Break` ends training after this epoch.
    fn on_epoch(&mut self, _metrics: &EpochMetrics) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Observer that does nothing.
pub struct Quiet;

impl Observer for Quiet {}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: StageConfig,
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best: Checkpoint,
    pub last: Checkpoint,
}

pub const METRICS_HEADER: &str = "epoch\tsplit\tlr\tce\tl1\ttotal\twa";

impl TrainRun {
    /// Tab-separated log, one line per (epoch, split).
    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            for (name, s) in [("train", &m.train), ("test", &m.test)] {
                writeln!(
                    out,
                    "{}\t{name}\t{:e}\t{:.9}\t{:.9}\t{:.9}\t{:.6}",
                    m.epoch, m.lr, s.ce, s.l1, s.total, s.wa
                )
                .unwrap();
            }
        }
        out
    }

    /// Write `best.vsck`, `last.vsck` and `metrics.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.best.save(&dir.join("best.vsck"))?;
        self.last.save(&dir.join("last.vsck"))?;
        fs::write(dir.join("metrics.tsv"), self.metrics_tsv())?;
        Ok(())
    }
}

/// Mean absolute difference accumulated in `f64`.
fn l1_value(a: &Array2<f32>, b: &Array2<f32>) -> f64 {
    let sum: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum();
    sum / a.len() as f64
}

/// Teacher feature maps for every example, checked against the student's
/// feature shape.
pub fn teacher_features(
    teacher: &VitModel<f32>,
    student: &VitModel<f32>,
    examples: &[Example],
) -> Result<Vec<Array2<f32>>> {
    let want = (student.spec.n_tokens(), student.spec.token_dim);
    let have = (teacher.spec.n_tokens(), teacher.spec.token_dim);
    if want != have {
        return Err(Error::Match(format!("teacher features {have:?}, student features {want:?}")));
    }
    examples
        .iter()
        .map(|e| Ok(teacher.forward(e.image.view())?.feature_map))
        .collect()
}

/// Clean forward pass over a split.
fn measure(
    model: &VitModel<f32>,
    examples: &[Example],
    targets: Option<&[Array2<f32>]>,
    weights: (f64, f64),
) -> Result<SplitMetrics> {
    let mut m = SplitMetrics::default();
    let mut correct = 0usize;
    for (i, e) in examples.iter().enumerate() {
        let f = model.forward(e.image.view())?;
        let logits = f.logits.mapv(f64::from).insert_axis(Axis(0));
        m.ce += cross_entropy(logits.view(), &[e.label])?.0;
        if let Some(t) = targets {
            m.l1 += l1_value(&f.feature_map, &t[i]);
        }
        correct += usize::from(argmax(f.logits.iter().copied()) == e.label);
    }
    let n = examples.len() as f64;
    m.ce /= n;
    m.l1 /= n;
    m.total = weights.0 * m.ce + weights.1 * m.l1;
    m.wa = correct as f64 / n;
    Ok(m)
}

struct Trainer<'a> {
    cfg: &'a StageConfig,
    seed: u64,
    train: &'a [Example],
    test: &'a [Example],
    train_targets: Option<Vec<Array2<f32>>>,
    test_targets: Option<Vec<Array2<f32>>>,
}

impl Trainer<'_> {
    fn run(&self, model: &mut VitModel<f32>, observer: &mut dyn Observer) -> Result<TrainRun> {
        self.cfg.validate()?;
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::InvalidDataset("train and test splits must be non-empty".into()));
        }
        let weights = self.cfg.loss_weights();
        let (w_ce, w_l1) = weights;
        let mut adam = Adam::new();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut metrics = Vec::new();
        let mut best: Option<(usize, f64, Checkpoint)> = None;
        for epoch in 0..self.cfg.epochs {
            let lr = lr_at(epoch, self.cfg);
            order.shuffle(&mut rng);
            for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
                let scale = 1.0 / batch.len() as f64;
                zero_grad(model);
                let mut logits = Array2::zeros((batch.len(), model.spec.n_classes));
                let mut feats = Vec::with_capacity(batch.len());
                let (mut ce, mut l1) = (0.0, 0.0);
                for (row, &i) in batch.iter().enumerate() {
                    let e = &self.train[i];
                    let f = model.forward(e.image.view())?;
                    logits.row_mut(row).assign(&f.logits);
                    let lg = f.logits.mapv(f64::from).insert_axis(Axis(0));
                    let (ce_i, dlog) = cross_entropy(lg.view(), &[e.label])?;
                    ce += ce_i * scale;
                    let dlogits: Option<Array1<f32>> = (w_ce > 0.0)
                        .then(|| dlog.index_axis(Axis(0), 0).mapv(|v| (v * w_ce * scale) as f32));
                    let dfeat = match &self.train_targets {
                        Some(t) => {
                            l1 += l1_value(&f.feature_map, &t[i]) * scale;
                            let k = (w_l1 * scale / f.feature_map.len() as f64) as f32;
                            (w_l1 > 0.0).then(|| {
                                ndarray::Zip::from(&f.feature_map)
                                    .and(&t[i])
                                    .map_collect(|&a, &b| k * sign(a - b))
                            })
                        }
                        None => None,
                    };
                    model.backward(&f, dlogits.as_ref().map(|d| d.view()), dfeat.as_ref().map(|d| d.view()))?;
                    feats.push(f.feature_map);
                }
                let total = w_ce * ce + w_l1 * l1;
                if !total.is_finite() {
                    return Err(Error::InvalidDataset(format!("non-finite loss at epoch {epoch}")));
                }
                observer.on_batch(&BatchRecord {
                    epoch,
                    batch: b,
                    labels: batch.iter().map(|&i| self.train[i].label).collect(),
                    logits,
                    student_features: feats.iter().collect(),
                    teacher_features: self
                        .train_targets
                        .as_ref()
                        .map(|t| batch.iter().map(|&i| &t[i]).collect()),
                    ce,
                    l1,
                    total,
                    alpha: w_l1,
                });
                adam.step(model, lr)?;
            }
            let em = EpochMetrics {
                epoch,
                lr,
                train: measure(model, self.train, self.train_targets.as_deref(), weights)?,
                test: measure(model, self.test, self.test_targets.as_deref(), weights)?,
            };
            // stage B keeps the lowest test L1, the others the highest test WA
            let score = match self.cfg.stage {
                Stage::BMatch => -em.test.l1,
                _ => em.test.wa,
            };
            if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
                best = Some((epoch, score, self.checkpoint(model, epoch)));
            }
            let flow = observer.on_epoch(&em);
            metrics.push(em);
            if flow.is_break() {
                break;
            }
        }
        let last_epoch = metrics.len() - 1;
        let (best_epoch, _, best) = best.expect("at least one epoch");
        Ok(TrainRun {
            config: self.cfg.clone(),
            seed: self.seed,
            metrics,
            best_epoch,
            best,
            last: self.checkpoint(model, last_epoch),
        })
    }

    fn checkpoint(&self, model: &VitModel<f32>, epoch: usize) -> Checkpoint {
        let mut ck = model.to_checkpoint();
        ck.metadata.insert("train.stage".into(), self.cfg.stage.name().into());
        ck.metadata.insert("train.epoch".into(), epoch.to_string());
        ck.metadata.insert("train.seed".into(), self.seed.to_string());
        ck
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn expect_stage(cfg: &StageConfig, stage: Stage) -> Result<()> {
    if cfg.stage != stage {
        return Err(Error::Config(format!("expected a {} config, got {}", stage.name(), cfg.stage.name())));
    }
    Ok(())
}

/// Stage A: cross entropy only.
pub fn train_stage_a(
    teacher: &mut VitModel<f32>,
    train: &[Example],
    test: &[Example],
    cfg: &StageConfig,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<TrainRun> {
    expect_stage(cfg, Stage::ATeacher)?;
    Trainer {
        cfg,
        seed,
        train,
        test,
        train_targets: None,
        test_targets: None,
    }
    .run(teacher, observer)
}

/// Stage B: L1 between feature maps, classifier head frozen.
pub fn train_stage_b(
    student: &mut VitModel<f32>,
    teacher: &VitModel<f32>,
    train: &[Example],
    test: &[Example],
    cfg: &StageConfig,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<TrainRun> {
    expect_stage(cfg, Stage::BMatch)?;
    let trainer = Trainer {
        cfg,
        seed,
        train,
        test,
        train_targets: Some(teacher_features(teacher, student, train)?),
        test_targets: Some(teacher_features(teacher, student, test)?),
    };
    student.set_head_trainable(false);
    let run = trainer.run(student, observer);
    student.set_head_trainable(true);
    run
}

/// Fresh classifier head, seeded from the run seed, as stage C starts.
pub fn stage_c_init(student: &mut VitModel<f32>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4845_4144);
    student.reset_head(&mut rng);
    student.set_head_trainable(true);
}

/// Stage C: `CE + alpha * L1`, starting from the given student weights
/// with a freshly initialized classifier head.
pub fn train_stage_c(
    student: &mut VitModel<f32>,
    teacher: &VitModel<f32>,
    train: &[Example],
    test: &[Example],
    cfg: &StageConfig,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<TrainRun> {
    expect_stage(cfg, Stage::CStudent)?;
    let trainer = Trainer {
        cfg,
        seed,
        train,
        test,
        train_targets: Some(teacher_features(teacher, student, train)?),
        test_targets: Some(teacher_features(teacher, student, test)?),
    };
    stage_c_init(student, seed);
    trainer.run(student, observer)
}
