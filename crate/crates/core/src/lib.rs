//! Speech emotion recognition with vision transformers over log-Mel images.
//!
//! A teacher network (convolutional stem, image coordinate encoding, ViT
//! on `128 x 1` column patches) hands its locality and position awareness
//! to a plain ViT student by feature-map matching.

pub mod attend;
pub mod cli;
pub mod config;
pub mod coords;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod figure;
pub mod flops;
pub mod patch;
pub mod prepare;
pub mod spec;
pub mod stem;
pub mod synth;
pub mod train;
pub mod vit;

pub use attend::{extract_attention_mask, gaussian_blur, gaussian_smooth, AttentionMask};
pub use config::RunConfig;
pub use coords::{coordinate_encode, CoordinateGrid};
pub use dataset::{ingest, DatasetManifest, DatasetName, ManifestEntry};
pub use error::{Error, Result};
pub use eval::{format_truncated, truncated_percent, weighted_accuracy, EvalReport};
pub use figure::{emit_figure, tile};
pub use flops::{count_flops, count_flops_with, FlopsConvention, FlopsReport};
pub use patch::{patchify, unpatchify};
pub use prepare::{load_prepared, prepare, PrepareReport, PreparedData};
pub use spec::{ModelSpec, Positional, Role};
pub use stem::ConvStem;
pub use vit::{Forward, VitModel};
pub use train::{
    lr_at, split_dataset, train_stage_a, train_stage_b, train_stage_c, BatchRecord, EpochMetrics, Example,
    Observer, Split, Stage, StageConfig, TrainRun,
};
