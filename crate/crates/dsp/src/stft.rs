//! Short-time Fourier transform magnitudes.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::clip::AudioClip;
use crate::error::{DspError, Result};

/// STFT configuration: `n_fft` DFT points, hop size, and a Hamming window of
/// `win_length` samples zero-padded to `n_fft`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub window: Vec<f64>,
}

/// Periodic Hamming window, `0.54 - 0.46 cos(2 pi n / L)`.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

impl StftParams {
    pub fn new(n_fft: usize, hop: usize, win_length: usize) -> Result<Self> {
        let params = Self {
            n_fft,
            hop,
            win_length,
            window: hamming(win_length),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.win_length == 0 || self.win_length > self.n_fft {
            return Err(DspError::InvalidConfig(format!(
                "window length {} must be in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop == 0 {
            return Err(DspError::InvalidConfig("hop must be >= 1".into()));
        }
        if self.window.len() != self.win_length
            || self.window.iter().any(|&w| !(w > 0.0 && w <= 1.0))
        {
            return Err(DspError::InvalidConfig(
                "window must have win_length values in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop + 1
    }
}

impl Default for StftParams {
    /// N = 1024, H = 64, 512-sample Hamming window.
    fn default() -> Self {
        Self::new(1024, 64, 512).expect("default STFT parameters are valid")
    }
}

/// Non-negative magnitude grid, `[frequency_bins x time_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// Magnitude STFT. Frame `m` covers samples `[m*hop, m*hop + win_length)`;
/// samples past the end of the clip are taken as zero.
pub fn stft(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let x = &clip.samples;
    let n_frames = params.n_frames(x.len());
    let n_bins = params.n_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); params.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut mags = Array2::zeros((n_bins, n_frames));
    for m in 0..n_frames {
        let start = m * params.hop;
        for (r, slot) in buf.iter_mut().enumerate() {
            let v = if r < params.win_length {
                x.get(start + r).map_or(0.0, |s| s * params.window[r])
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_bins {
            mags[[k, m]] = buf[k].norm();
        }
    }
    Ok(Spectrogram { magnitudes: mags })
}
