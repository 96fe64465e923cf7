//! Mel scale and triangular Mel filterbank.

use ndarray::Array2;

use crate::error::{DspError, Result};

/// `2595 * log10(1 + f / 700)`.
pub fn mel_scale(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(DspError::InvalidFrequency(f));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

/// Inverse of [`mel_scale`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the linear-frequency STFT bins.
///
/// Row `i` rises from `edges[i]` to a peak of 1 at `edges[i + 1]` and falls
/// back to 0 at `edges[i + 2]`; the edges are equally spaced in mel between
/// `f_min` and `f_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    pub f_min: f64,
    pub f_max: f64,
    /// `n_mels + 2` edge frequencies in Hz.
    pub edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// Peak frequency of filter `i`, in Hz.
    pub fn center(&self, i: usize) -> f64 {
        self.edges[i + 1]
    }

    /// Continuous response of filter `i` at frequency `f`.
    pub fn response(&self, i: usize, f: f64) -> f64 {
        triangle(self.edges[i], self.edges[i + 1], self.edges[i + 2], f)
    }
}

fn triangle(lo: f64, center: f64, hi: f64, f: f64) -> f64 {
    let rise = (f - lo) / (center - lo);
    let fall = (hi - f) / (hi - center);
    rise.min(fall).max(0.0)
}

/// Build `n_mels` triangular filters spanning 0 Hz to Nyquist for an
/// `n_fft`-point DFT at `sample_rate`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<MelFilterbank> {
    let n_bins = n_fft / 2 + 1;
    if n_mels == 0 || n_mels > n_bins {
        return Err(DspError::InvalidConfig(format!(
            "n_mels {n_mels} must be in 1..={n_bins}"
        )));
    }
    if sample_rate == 0 {
        return Err(DspError::InvalidConfig("sample rate must be positive".into()));
    }
    let f_min = 0.0;
    let f_max = sample_rate as f64 / 2.0;
    let mel_lo = mel_scale(f_min)?;
    let mel_hi = mel_scale(f_max)?;
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let weights = Array2::from_shape_fn((n_mels, n_bins), |(i, k)| {
        triangle(edges[i], edges[i + 1], edges[i + 2], k as f64 * bin_hz)
    });
    Ok(MelFilterbank {
        weights,
        f_min,
        f_max,
        edges,
    })
}
