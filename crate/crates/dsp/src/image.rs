//! Log-Mel spectrogram images.

use ndarray::Array2;

use crate::clip::{standardize, AudioClip};
use crate::error::{DspError, Result};
use crate::mel::{mel_filterbank, MelFilterbank};
use crate::stft::{stft, Spectrogram, StftParams};
use crate::{CLIP_SECONDS, SAMPLE_RATE};

/// Height and width of the network input image.
pub const IMAGE_SIZE: usize = 128;

/// Floor added to the Mel power before taking the log.
pub const LOG_EPS: f64 = 1e-6;

/// A single-channel image, rows are Mel bands (row 0 = lowest band),
/// columns are time. Values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelImage {
    pub pixels: Array2<f32>,
}

impl LogMelImage {
    pub fn new(pixels: Array2<f32>) -> Self {
        Self { pixels }
    }

    pub fn zeros() -> Self {
        Self {
            pixels: Array2::zeros((IMAGE_SIZE, IMAGE_SIZE)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

/// Linearly interpolate each row of `grid` to `width` columns.
fn resize_columns(grid: &Array2<f64>, width: usize) -> Array2<f64> {
    let frames = grid.ncols();
    Array2::from_shape_fn((grid.nrows(), width), |(r, j)| {
        if frames == 1 || width == 1 {
            return grid[[r, 0]];
        }
        let pos = j as f64 * (frames - 1) as f64 / (width - 1) as f64;
        let left = (pos.floor() as usize).min(frames - 2);
        let frac = pos - left as f64;
        grid[[r, left]] * (1.0 - frac) + grid[[r, left + 1]] * frac
    })
}

/// Min-max normalize to `[0, 1]`; a constant grid maps to all zeros.
pub fn normalize_unit(grid: &Array2<f64>) -> Array2<f32> {
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return Array2::zeros(grid.dim());
    }
    grid.mapv(|v| ((v - lo) / range) as f32)
}

/// Project the power spectrum through `fb`, log-compress, interpolate the
/// time axis to 128 columns and normalize to `[0, 1]`.
pub fn log_mel_image(spec: &Spectrogram, fb: &MelFilterbank) -> Result<LogMelImage> {
    if fb.n_bins() != spec.n_bins() {
        return Err(DspError::InvalidConfig(format!(
            "filterbank expects {} bins, spectrogram has {}",
            fb.n_bins(),
            spec.n_bins()
        )));
    }
    if spec.n_frames() == 0 {
        return Err(DspError::InvalidConfig("spectrogram has no frames".into()));
    }
    let power = spec.magnitudes.mapv(|m| m * m);
    let mel = fb.weights.dot(&power).mapv(|p| (p + LOG_EPS).ln());
    let resized = resize_columns(&mel, IMAGE_SIZE);
    Ok(LogMelImage {
        pixels: normalize_unit(&resized),
    })
}

/// The full waveform-to-image chain with fixed parameters.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub stft: StftParams,
    pub filterbank: MelFilterbank,
}

impl Frontend {
    pub fn new(sample_rate: u32, duration_s: f64, stft: StftParams, n_mels: usize) -> Result<Self> {
        let filterbank = mel_filterbank(n_mels, stft.n_fft, sample_rate)?;
        Ok(Self {
            sample_rate,
            duration_s,
            stft,
            filterbank,
        })
    }

    /// Standardize the clip then compute its log-Mel image.
    pub fn image(&self, clip: &AudioClip) -> Result<LogMelImage> {
        let clip = self.standardize(clip)?;
        self.image_standardized(&clip)
    }

    pub fn standardize(&self, clip: &AudioClip) -> Result<AudioClip> {
        standardize(clip, self.sample_rate, self.duration_s)
    }

    /// Image of a clip that is already at the target rate and length.
    pub fn image_standardized(&self, clip: &AudioClip) -> Result<LogMelImage> {
        let spec = stft(clip, &self.stft)?;
        log_mel_image(&spec, &self.filterbank)
    }
}

impl Default for Frontend {
    /// 16 kHz, 4 s, N=1024, H=64, 512-sample Hamming window, 128 Mel bands.
    fn default() -> Self {
        Self::new(SAMPLE_RATE, CLIP_SECONDS, StftParams::default(), IMAGE_SIZE)
            .expect("default front end is valid")
    }
}
