//! Mono waveforms, band-limited resampling and duration standardization.

use std::f64::consts::PI;

use crate::error::{DspError, Result};

/// Half-width of the resampling kernel; the kernel has `2 * HALF_TAPS` taps.
const HALF_TAPS: i64 = 32;

/// A mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidAudio("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power, `mean(x^2)`.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resample `samples` from `from_rate` to `to_rate` (both may be fractional)
/// with a 64-tap Hamming-windowed sinc kernel. When downsampling the kernel
/// cutoff moves to the output Nyquist frequency.
pub fn resample(samples: &[f64], from_rate: f64, to_rate: f64) -> Vec<f64> {
    if samples.is_empty() || from_rate == to_rate {
        return samples.to_vec();
    }
    let step = from_rate / to_rate;
    let cutoff = (to_rate / from_rate).min(1.0);
    let out_len = (samples.len() as f64 / step).ceil() as usize;
    let n_in = samples.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 * step;
        let center = t.floor() as i64;
        let mut acc = 0.0;
        for k in (center - HALF_TAPS + 1)..=(center + HALF_TAPS) {
            if k < 0 || k >= n_in {
                continue;
            }
            let d = t - k as f64;
            if d.abs() >= HALF_TAPS as f64 {
                continue;
            }
            let window = 0.54 + 0.46 * (PI * d / HALF_TAPS as f64).cos();
            acc += samples[k as usize] * cutoff * sinc(cutoff * d) * window;
        }
        out.push(acc);
    }
    out
}

/// Zero-pad or truncate at the tail to exactly `len` samples.
pub(crate) fn fit_length(mut samples: Vec<f64>, len: usize) -> Vec<f64> {
    samples.resize(len, 0.0);
    samples
}

/// Resample to `target_rate` and pad/trim at the tail to `duration_s` seconds.
pub fn standardize(clip: &AudioClip, target_rate: u32, duration_s: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(DspError::InvalidAudio("empty clip".into()));
    }
    if target_rate == 0 || !(duration_s > 0.0) {
        return Err(DspError::InvalidConfig(format!(
            "target rate {target_rate} Hz / duration {duration_s} s"
        )));
    }
    let samples = if clip.sample_rate == target_rate {
        clip.samples.clone()
    } else {
        resample(&clip.samples, clip.sample_rate as f64, target_rate as f64)
    };
    let len = (duration_s * target_rate as f64).round() as usize;
    Ok(AudioClip {
        samples: fit_length(samples, len),
        sample_rate: target_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, seconds: f64) -> AudioClip {
        let n = (rate as f64 * seconds) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn short_clip_is_zero_padded_at_tail() {
        let clip = tone(440.0, 16_000, 2.0);
        let out = standardize(&clip, 16_000, 4.0).unwrap();
        assert_eq!(out.len(), 64_000);
        assert_eq!(&out.samples[..32_000], &clip.samples[..]);
        assert!(out.samples[32_000..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_length_clip_is_unchanged() {
        let clip = tone(440.0, 16_000, 4.0);
        let out = standardize(&clip, 16_000, 4.0).unwrap();
        assert_eq!(out, clip);
    }

    #[test]
    fn long_clip_is_truncated_at_tail() {
        let clip = tone(440.0, 16_000, 5.0);
        let out = standardize(&clip, 16_000, 4.0).unwrap();
        assert_eq!(&out.samples[..], &clip.samples[..64_000]);
    }

    #[test]
    fn empty_clip_is_rejected() {
        let clip = AudioClip::new(vec![], 16_000).unwrap();
        assert!(matches!(
            standardize(&clip, 16_000, 4.0),
            Err(DspError::InvalidAudio(_))
        ));
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn upsampled_tone_matches_direct_evaluation() {
        // 8 s at 8 kHz -> 4 s at 16 kHz. The oracle samples the same
        // band-limited sine directly at 16 kHz.
        let freq = 440.0;
        let clip = tone(freq, 8_000, 8.0);
        let out = standardize(&clip, 16_000, 4.0).unwrap();
        assert_eq!(out.len(), 64_000);
        let direct = tone(freq, 16_000, 4.0);
        let energy_out: f64 = out.samples.iter().map(|x| x * x).sum();
        let energy_direct: f64 = direct.samples.iter().map(|x| x * x).sum();
        let rel = (energy_out - energy_direct).abs() / energy_direct;
        assert!(rel < 0.01, "energy mismatch {rel}");
        // away from the edges the waveform itself agrees closely
        let max_err = (1000..63_000)
            .map(|i| (out.samples[i] - direct.samples[i]).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.02, "max sample error {max_err}");
    }

    #[test]
    fn downsampling_removes_content_above_new_nyquist() {
        // 7 kHz tone at 32 kHz resampled to 8 kHz (Nyquist 4 kHz)
        let clip = tone(7_000.0, 32_000, 1.0);
        let out = resample(&clip.samples, 32_000.0, 8_000.0);
        let p: f64 = out[200..out.len() - 200].iter().map(|x| x * x).sum::<f64>()
            / (out.len() - 400) as f64;
        assert!(p < 0.01, "aliased power {p}");
    }
}
