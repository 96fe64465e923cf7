//! From waveform to network input: a gliding harmonic tone becomes a
//! 128 x 128 log-Mel image, plus one image per augmentation kind.
//!
//! `cargo run --release -p vser-dsp --example frontend -- [out-dir]`
//!
//! Writes `<kind>.pgm` previews and `<kind>.vser` cache files.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vser_dsp::{augment, derive_seed, AudioClip, AugmentKind, AugmentSpec, Frontend};

fn glide(sample_rate: u32, seconds: f64) -> AudioClip {
    let n = (seconds * sample_rate as f64) as usize;
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            phase += TAU * (150.0 + 100.0 * t) / sample_rate as f64;
            let env = (t / 0.2).min(1.0) * ((seconds - t) / 0.2).min(1.0);
            0.3 * env * (1..=5).map(|k| (k as f64 * phase).sin() / k as f64).sum::<f64>()
        })
        .collect();
    AudioClip::new(samples, sample_rate).expect("positive rate")
}

fn main() -> vser_dsp::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "frontend-out".into()));
    std::fs::create_dir_all(&out)?;
    let frontend = Frontend::default();
    // 22.05 kHz, 3 s: resampled and padded to 16 kHz, 4 s
    let clip = frontend.standardize(&glide(22_050, 3.0))?;
    println!("standardized: {} samples at {} Hz", clip.len(), clip.sample_rate);

    let mut variants = vec![("original".to_string(), clip.clone())];
    for kind in [AugmentKind::Noise, AugmentKind::TimeShift, AugmentKind::Speed] {
        let seed = derive_seed(7, "glide", Some(kind));
        let spec = AugmentSpec::sample(kind, &mut ChaCha8Rng::seed_from_u64(seed));
        println!("{}: {spec:?}", kind.name());
        variants.push((kind.name().to_string(), augment(&clip, &spec, seed)?));
    }
    for (name, v) in variants {
        let image = frontend.image_standardized(&v)?;
        let px = &image.pixels;
        let (lo, hi) = px.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("{name:>10}: {}x{} image, values {lo:.3}..{hi:.3}", image.height(), image.width());
        vser_dsp::pgm::write(&out.join(format!("{name}.pgm")), px)?;
        vser_dsp::cache::write(&out.join(format!("{name}.vser")), &image)?;
    }
    println!("wrote previews and cache files to {}", out.display());
    Ok(())
}
