//! Audio front end for speech emotion recognition.
//!
//! Turns raw waveforms into 128x128 log-Mel spectrogram images:
//! resample and pad/trim to a fixed duration, Hamming-windowed STFT,
//! triangular Mel filterbank projection, log compression, time-axis
//! interpolation and per-image min-max normalization. Also provides the
//! waveform augmentations used at training time (noise, time shift,
//! speed) and the on-disk formats for spectrogram caches and PGM dumps.

pub mod augment;
pub mod cache;
pub mod clip;
pub mod error;
pub mod image;
pub mod mel;
pub mod pgm;
pub mod stft;
pub mod wav;

pub use augment::{augment, derive_seed, AugmentKind, AugmentSpec};
pub use clip::{resample, standardize, AudioClip};
pub use error::{DspError, Result};
pub use image::{log_mel_image, Frontend, LogMelImage, IMAGE_SIZE};
pub use mel::{mel_filterbank, mel_scale, mel_to_hz, MelFilterbank};
pub use stft::{stft, Spectrogram, StftParams};

/// Target sample rate of the front end, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Clip duration after standardization, in seconds.
pub const CLIP_SECONDS: f64 = 4.0;
