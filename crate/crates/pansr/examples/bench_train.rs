//! Estimate the wall-clock cost of the desk training run.
//!
//! Uses the desk options but with 12-iteration phases, so every phase
//! resolution gets timed with the exact tensor shapes, batch size and
//! channel widths of the real run; the per-iteration cost is then scaled
//! to the real 4000-iteration phases.

use pansr::data::SynthDataset;
use pansr::train::{TrainOptions, Trainer};

fn main() {
    let mut opts = TrainOptions::desk(42);
    opts.schedule.iters_stabilize = 6;
    opts.schedule.iters_fade = 6;
    let real_phase = 4000usize;
    let data = SynthDataset::new(512, 64, 7).unwrap();
    let mut t = Trainer::new(opts.clone()).unwrap();
    let phase_len = opts.schedule.phase_len();
    let mut total_est = 0.0;
    for &res in &opts.schedule.resolutions {
        // Unmeasured warm-up: growth, pyramid build, allocator.
        for _ in 0..4 {
            t.step(&data).unwrap();
        }
        let timed = phase_len - 4;
        let start = std::time::Instant::now();
        for _ in 0..timed {
            t.step(&data).unwrap();
        }
        let per_iter = start.elapsed().as_secs_f64() / timed as f64;
        let est = per_iter * real_phase as f64;
        total_est += est;
        println!("res {res:4}: {:7.1} ms/iter -> {:6.1} s/phase", per_iter * 1e3, est);
    }
    println!("estimated GAN run total: {:.1} min", total_est / 60.0);
}
