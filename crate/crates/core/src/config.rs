//! Run configuration.
//!
//! TOML with one table per concern; keys may be written dotted at the top
//! level (`train.batch_size = 4`) or inside tables (`[train]`). Missing
//! tables take their defaults; unknown keys are rejected. A `teacher` or
//! `student` table, when present, must list every model field.
//!
//! ```toml
//! seed = 0
//! data.dataset = "savee"
//! data.root = "corpora/savee"
//! data.split_ratio = 0.8
//! train.epochs = 50
//! train.alpha = 10.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vser_dsp::{Frontend, StftParams, IMAGE_SIZE};

use crate::dataset::DatasetName;
use crate::error::{Error, Result};
use crate::spec::ModelSpec;
use crate::train::{Stage, StageConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dataset: DatasetName,
    pub root: PathBuf,
    /// Spectrogram caches; relative to the run directory when unset.
    pub cache_dir: Option<PathBuf>,
    /// Fraction of each class that goes to training.
    pub split_ratio: f64,
    /// Emit the three augmented variants of every training clip.
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetName::Savee,
            root: PathBuf::from("data/savee"),
            cache_dir: None,
            split_ratio: 0.8,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub n_mels: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: vser_dsp::SAMPLE_RATE,
            duration_s: vser_dsp::CLIP_SECONDS,
            n_fft: 1024,
            hop: 64,
            win_length: 512,
            n_mels: IMAGE_SIZE,
        }
    }
}

impl FrontendConfig {
    pub fn build(&self) -> Result<Frontend> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!("frontend.duration_s must be positive, got {}", self.duration_s)));
        }
        let stft = StftParams::new(self.n_fft, self.hop, self.win_length)
            .map_err(|e| Error::Config(format!("frontend: {e}")))?;
        Frontend::new(self.sample_rate, self.duration_s, stft, self.n_mels)
            .map_err(|e| Error::Config(format!("frontend: {e}")))
    }
}

/// Schedule shared by the three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_halving_period: usize,
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = StageConfig::new(Stage::ATeacher);
        Self {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr0: s.lr0,
            lr_halving_period: s.lr_halving_period,
            alpha: s.alpha,
        }
    }
}

impl TrainConfig {
    pub fn stage(&self, stage: Stage) -> StageConfig {
        StageConfig {
            stage,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            lr_halving_period: self.lr_halving_period,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttendConfig {
    /// Gaussian smoothing width in pixels.
    pub sigma: f64,
}

impl Default for AttendConfig {
    fn default() -> Self {
        Self { sigma: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub frontend: FrontendConfig,
    pub teacher: ModelSpec,
    pub student: ModelSpec,
    pub train: TrainConfig,
    pub attend: AttendConfig,
}

impl Default for RunConfig {
    /// SAVEE, the depth-6 / 5-head teacher and the student.
    fn default() -> Self {
        let n = DatasetName::Savee.labels().len();
        Self {
            seed: 0,
            data: DataConfig::default(),
            frontend: FrontendConfig::default(),
            teacher: ModelSpec::teacher(6, 5, n),
            student: ModelSpec::student(n),
            train: TrainConfig::default(),
            attend: AttendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Default config with both networks sized for `dataset`.
    pub fn for_dataset(dataset: DatasetName) -> Self {
        let mut cfg = Self::default();
        let n = dataset.labels().len();
        cfg.data.dataset = dataset;
        cfg.teacher.n_classes = n;
        cfg.student.n_classes = n;
        cfg
    }

    pub fn cache_dir(&self, run_dir: &Path) -> PathBuf {
        match &self.data.cache_dir {
            Some(p) => p.clone(),
            None => run_dir.join("cache"),
        }
    }

    /// Cross-field checks; run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let frontend = self.frontend.build()?;
        let n_classes = self.data.dataset.labels().len();
        for (name, spec) in [("teacher", &self.teacher), ("student", &self.student)] {
            spec.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
            if spec.n_classes != n_classes {
                return Err(Error::Config(format!(
                    "{name}.n_classes is {}, {} has {n_classes} emotions",
                    spec.n_classes, self.data.dataset
                )));
            }
            if (spec.image_h, spec.image_w) != (frontend.filterbank.n_mels(), IMAGE_SIZE) {
                return Err(Error::Config(format!(
                    "{name} expects {}x{} images, the front end makes {}x{IMAGE_SIZE}",
                    spec.image_h,
                    spec.image_w,
                    frontend.filterbank.n_mels()
                )));
            }
        }
        let (t, s) = (&self.teacher, &self.student);
        if (t.n_tokens(), t.token_dim) != (s.n_tokens(), s.token_dim) {
            return Err(Error::Config(format!(
                "teacher features {}x{} cannot be matched by student features {}x{}",
                t.n_tokens(),
                t.token_dim,
                s.n_tokens(),
                s.token_dim
            )));
        }
        if !(self.data.split_ratio > 0.0 && self.data.split_ratio < 1.0) {
            return Err(Error::InvalidRatio(self.data.split_ratio));
        }
        for stage in [Stage::ATeacher, Stage::BMatch, Stage::CStudent] {
            self.train.stage(stage).validate()?;
        }
        if !(self.attend.sigma > 0.0) {
            return Err(Error::InvalidSigma(self.attend.sigma));
        }
        Ok(())
    }
}
