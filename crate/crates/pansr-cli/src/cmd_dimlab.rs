//! `pansr dimlab`: the distance-concentration sweep. Samples uniform point
//! clouds across a list of dimensions, measures the spread between each
//! point's nearest and k-th nearest neighbor, and writes the per-dimension
//! table as CSV (optionally with a PNG plot of mean against log-dimension).

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use pansr::data::write_png;
use pansr::dimlab::{run_sweep, sweep_csv, DimExperimentConfig};
use pansr::PanError;

use crate::plot;
use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct DimlabArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for dimlab.csv (and dimlab.png with --plot).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated list of dimensions to sweep.
    #[arg(long)]
    dims: Option<String>,
    /// Points per cloud.
    #[arg(long)]
    points: Option<usize>,
    /// Independent repeats per dimension.
    #[arg(long)]
    repeats: Option<usize>,
    /// Base of the log that sets k = floor(log(points)): `e` or a number.
    #[arg(long)]
    log_base: Option<String>,
    /// Also render a PNG line plot of mean ratio vs dimension.
    #[arg(long)]
    plot: bool,
}

pub fn run(args: DimlabArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set_opt("dims", args.dims.as_deref());
    cfg.set_opt("points", args.points);
    cfg.set_opt("repeats", args.repeats);
    cfg.set_opt("log_base", args.log_base.as_deref());
    if args.plot {
        cfg.set("plot", true);
    }

    let seed: u64 = cfg.get_or("seed", 42)?;
    let dims = match cfg.raw("dims") {
        Some(text) => util::parse_usize_list(text)?,
        None => vec![1, 10, 100, 1_000, 10_000, 100_000],
    };
    let base_text = cfg.get_or("log_base", "e".to_string())?;
    let log_base = match base_text.as_str() {
        "e" => std::f64::consts::E,
        other => other.parse::<f64>().map_err(|_| {
            PanError::Config(format!("log base must be `e` or a number, got `{other}`"))
        })?,
    };
    let experiment = DimExperimentConfig::new(
        dims,
        cfg.get_or("points", 500)?,
        cfg.get_or("repeats", 5)?,
        seed,
        log_base,
    )?;
    println!(
        "sweeping {} dimensions, {} points, k = {}, {} repeats",
        experiment.dims.len(),
        experiment.n_points,
        experiment.k_neighbors,
        experiment.repeats
    );

    let rows = run_sweep(&experiment)?;
    let csv = sweep_csv(&rows);
    print!("{csv}");

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join("dimlab.csv");
    std::fs::write(&csv_path, csv)?;
    let mut outputs = vec![csv_path];

    if cfg.get_or("plot", false)? {
        let points: Vec<plot::ErrorPoint> = rows
            .iter()
            .map(|r| plot::ErrorPoint {
                x: r.dim as f64,
                y: r.mean_ratio,
                spread: r.std_points,
            })
            .collect();
        let img = plot::line_plot(&points);
        let png_path = args.out.join("dimlab.png");
        write_png(&png_path, &img)?;
        outputs.push(png_path);
    }
    util::finish_manifest("dimlab", cfg, seed, &args.out, &outputs)
}
