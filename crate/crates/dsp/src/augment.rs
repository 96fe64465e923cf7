//! Waveform augmentation: additive white noise, time shift, speed change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clip::{fit_length, resample, AudioClip};
use crate::error::{DspError, Result};

pub const SNR_RANGE_DB: (f64, f64) = (15.0, 30.0);
pub const MAX_SHIFT_SECONDS: f64 = 1.0;
pub const SPEED_RANGE: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugmentKind {
    Noise,
    TimeShift,
    Speed,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 3] = [AugmentKind::Noise, AugmentKind::TimeShift, AugmentKind::Speed];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Noise => "noise",
            AugmentKind::TimeShift => "time_shift",
            AugmentKind::Speed => "speed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One augmentation with its parameters. Only the field matching `kind` is
/// used; the others are still range-checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub noise_snr_db: f64,
    pub shift_seconds: f64,
    pub speed_factor: f64,
}

impl AugmentSpec {
    fn neutral(kind: AugmentKind) -> Self {
        Self {
            kind,
            noise_snr_db: 20.0,
            shift_seconds: 0.0,
            speed_factor: 1.0,
        }
    }

    pub fn noise(snr_db: f64) -> Self {
        Self {
            noise_snr_db: snr_db,
            ..Self::neutral(AugmentKind::Noise)
        }
    }

    pub fn time_shift(seconds: f64) -> Self {
        Self {
            shift_seconds: seconds,
            ..Self::neutral(AugmentKind::TimeShift)
        }
    }

    pub fn speed(factor: f64) -> Self {
        Self {
            speed_factor: factor,
            ..Self::neutral(AugmentKind::Speed)
        }
    }

    /// Draw parameters for `kind` uniformly from the allowed ranges.
    pub fn sample<R: Rng>(kind: AugmentKind, rng: &mut R) -> Self {
        match kind {
            AugmentKind::Noise => Self::noise(rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1)),
            AugmentKind::TimeShift => {
                Self::time_shift(rng.random_range(-MAX_SHIFT_SECONDS..=MAX_SHIFT_SECONDS))
            }
            AugmentKind::Speed => Self::speed(rng.random_range(SPEED_RANGE.0..=SPEED_RANGE.1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&self.noise_snr_db) {
            return Err(DspError::InvalidAugment(format!(
                "snr {} dB outside [15, 30]",
                self.noise_snr_db
            )));
        }
        if !(self.shift_seconds.abs() <= MAX_SHIFT_SECONDS) {
            return Err(DspError::InvalidAugment(format!(
                "shift {} s exceeds 1 s",
                self.shift_seconds
            )));
        }
        if !(SPEED_RANGE.0..=SPEED_RANGE.1).contains(&self.speed_factor) {
            return Err(DspError::InvalidAugment(format!(
                "speed factor {} outside [0.9, 1.1]",
                self.speed_factor
            )));
        }
        Ok(())
    }
}

/// FNV-1a over the seed, clip id and augmentation name. Stable across
/// platforms and runs, so per-clip randomness does not depend on scheduling.
pub fn derive_seed(global_seed: u64, clip_id: &str, kind: Option<AugmentKind>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    let kind = kind.map_or("original", AugmentKind::name);
    for byte in global_seed
        .to_le_bytes()
        .iter()
        .chain(clip_id.as_bytes())
        .chain(&[0xff])
        .chain(kind.as_bytes())
    {
        h ^= *byte as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Apply `spec` to a standardized clip. Output length and rate equal the
/// input's; the same seed and spec give bit-identical output.
pub fn augment(clip: &AudioClip, spec: &AugmentSpec, rng_seed: u64) -> Result<AudioClip> {
    spec.validate()?;
    if clip.is_empty() {
        return Err(DspError::InvalidAudio("empty clip".into()));
    }
    let len = clip.len();
    let samples = match spec.kind {
        AugmentKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / len as f64;
            let target = clip.power() / 10f64.powf(spec.noise_snr_db / 10.0);
            let scale = if noise_power > 0.0 {
                (target / noise_power).sqrt()
            } else {
                0.0
            };
            clip.samples
                .iter()
                .zip(&noise)
                .map(|(x, n)| x + scale * n)
                .collect()
        }
        AugmentKind::TimeShift => {
            let shift = (spec.shift_seconds * clip.sample_rate as f64).round() as i64;
            (0..len as i64)
                .map(|i| {
                    let src = i - shift;
                    if (0..len as i64).contains(&src) {
                        clip.samples[src as usize]
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        AugmentKind::Speed => {
            let rate = clip.sample_rate as f64;
            fit_length(resample(&clip.samples, rate, rate * spec.speed_factor), len)
        }
    };
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}
