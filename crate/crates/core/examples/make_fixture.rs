//! Write a small SAVEE-style corpus of generated voiced clips.
//!
//! ```text
//! cargo run --example make_fixture -- <dir> [clips-per-emotion] [seed]
//! ```
//!
//! The tree is `<dir>/<speaker>/<code><NN>.wav`, ready for
//! `vser --dataset fixture --data-root <dir> prepare`.

use std::path::PathBuf;

fn main() -> vser::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let per_class = args.next().map_or(2, |s| s.parse().expect("clips per emotion"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let paths = vser::synth::write_savee_fixture(&dir, per_class, seed)?;
    println!("wrote {} clips under {}", paths.len(), dir.display());
    Ok(())
}
