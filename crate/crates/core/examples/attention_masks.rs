//! Where does a trained network look? Train the coordinate-aware teacher
//! on the bar benchmark, then render smoothed attention masks for one
//! image of each class next to the images themselves.
//!
//! `cargo run --release --example attention_masks -- [out-dir]`
//!
//! Writes `images.pgm` and `masks.pgm`, each a 2 x 2 panel.

use std::path::PathBuf;

use ndarray::Array2;
use vser::attend::DEFAULT_SIGMA;
use vser::synth::BarBenchmark;
use vser::{emit_figure, extract_attention_mask, gaussian_smooth, Role, VitModel};

fn main() -> vser::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "attention-out".into()));
    std::fs::create_dir_all(&out)?;
    let bench = BarBenchmark { epochs: 15, ..BarBenchmark::default() };
    let run = bench.run(Role::Teacher, &mut vser::train::Quiet)?;
    let model = VitModel::<f32>::from_checkpoint(&run.best)?;
    println!("teacher test WA {:.3}", run.metrics[run.best_epoch].test.wa);

    let (_, test) = bench.data()?;
    let mut images: Vec<Array2<f32>> = Vec::new();
    let mut masks = Vec::new();
    for class in 0..4 {
        let e = test.iter().find(|e| e.label == class).expect("every class is in the test split");
        let mask = gaussian_smooth(&extract_attention_mask(&model, e.image.view())?, DEFAULT_SIGMA)?;
        let row = mask.mask.row(0);
        let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |p| p.0);
        println!("class {class}: mask peaks at column {peak} of {}", row.len());
        images.push(e.image.clone());
        masks.push(mask.mask.mapv(|v| v as f32));
    }
    emit_figure(&images, 2, 2, &out.join("images.pgm"))?;
    emit_figure(&masks, 2, 2, &out.join("masks.pgm"))?;
    println!("wrote {}", out.display());
    Ok(())
}
