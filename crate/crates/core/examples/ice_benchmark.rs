//! Positional benchmark: which time quadrant holds the bright bar?
//!
//! The same small network is trained with and without coordinate channels.
//! Without them, column patches carry no position, so the classes are
//! indistinguishable apart from edge effects of the stem's zero padding.
//!
//! `cargo run --release --example ice_benchmark -- [epochs] [seed]`

use std::ops::ControlFlow;

use vser::synth::BarBenchmark;
use vser::{EpochMetrics, Observer, Role};

struct Log(&'static str);

impl Observer for Log {
    fn on_epoch(&mut self, m: &EpochMetrics) -> ControlFlow<()> {
        println!("{:>14} epoch {:>3}  train ce {:.4}  test wa {:.3}", self.0, m.epoch, m.train.ce, m.test.wa);
        ControlFlow::Continue(())
    }
}

fn main() -> vser::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut bench = BarBenchmark::default();
    if let Some(e) = args.next() {
        bench.epochs = e.parse().expect("epochs must be an integer");
    }
    if let Some(s) = args.next() {
        bench.seed = s.parse().expect("seed must be an integer");
    }
    for (role, name) in [(Role::Teacher, "teacher"), (Role::TeacherNoIce, "teacher_no_ice")] {
        let run = bench.run(role, &mut Log(name))?;
        let best = &run.metrics[run.best_epoch];
        let last = run.metrics.last().expect("at least one epoch");
        println!("{name}: best test wa {:.3} (epoch {}), final {:.3}\n", best.test.wa, best.epoch, last.test.wa);
    }
    Ok(())
}
