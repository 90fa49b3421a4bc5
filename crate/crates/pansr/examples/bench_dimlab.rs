//! Times the default dimension sweep, dimension by dimension.

use std::time::Instant;

use pansr::dimlab::{run_sweep, DimExperimentConfig};

fn main() {
    let total = Instant::now();
    for dim in [1usize, 10, 100, 1_000, 10_000, 100_000] {
        let cfg = DimExperimentConfig {
            dims: vec![dim],
            ..DimExperimentConfig::default_sweep(0)
        };
        let t = Instant::now();
        let rows = run_sweep(&cfg).unwrap();
        println!(
            "d = {dim:>6}: {:>7.2?}  mean_ratio = {:.6}  std_points = {:.6}",
            t.elapsed(),
            rows[0].mean_ratio,
            rows[0].std_points
        );
    }
    println!("total: {:.2?}", total.elapsed());
}
