//! `pansr train`: progressive (or ablated) training on a PNG folder or a
//! procedural synthetic dataset.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use pansr::data::{ImageSource, SynthDataset};
use pansr::degrade::DegradationParams;
use pansr::loss::PixelLoss;
use pansr::net::derive_seed;
use pansr::train::{write_csv, TrainMode, TrainOptions, TrainSchedule, Trainer};
use pansr::PanError;

use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for checkpoints, the training log, and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Folder of training PNGs (at least output-res each).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train on a procedural synthetic dataset of this many images instead
    /// of a folder.
    #[arg(long)]
    synth: Option<usize>,
    /// Skip unreadable or undersized images instead of aborting.
    #[arg(long)]
    skip_bad: bool,
    /// Resume from this checkpoint (options must match the original run).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Network input resolution.
    #[arg(long)]
    input_res: Option<usize>,
    /// Final output resolution.
    #[arg(long)]
    output_res: Option<usize>,
    /// Channel width at the output resolution.
    #[arg(long)]
    ch_base: Option<usize>,
    /// Channel width cap for coarse resolutions.
    #[arg(long)]
    ch_max: Option<usize>,
    /// Number of encoder levels wired through skip connections.
    #[arg(long)]
    skip_levels: Option<usize>,
    /// Gradient-penalty weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Loss mode: gan, l1, or l2.
    #[arg(long)]
    mode: Option<String>,
    /// Train only at the final resolution, skipping progressive growth.
    #[arg(long)]
    no_progressive: bool,
    /// Disable decoder noise injection.
    #[arg(long)]
    no_noise: bool,
    /// Degrade the low-resolution inputs with the random camera pipeline.
    #[arg(long)]
    degrade: bool,
    /// Stabilize iterations per resolution phase.
    #[arg(long)]
    iters_stabilize: Option<usize>,
    /// Fade-in iterations per resolution phase.
    #[arg(long)]
    iters_fade: Option<usize>,
    /// Adam learning rate (flat across resolutions).
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size (flat across resolutions).
    #[arg(long)]
    batch: Option<usize>,
    /// Checkpoint every this many iterations (0 = final checkpoint only).
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// Record a log row every this many iterations.
    #[arg(long)]
    log_interval: Option<usize>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set_opt("data", args.data.as_ref().map(|p| p.display()));
    cfg.set_opt("synth", args.synth);
    cfg.set_opt("input_res", args.input_res);
    cfg.set_opt("output_res", args.output_res);
    cfg.set_opt("ch_base", args.ch_base);
    cfg.set_opt("ch_max", args.ch_max);
    cfg.set_opt("skip_levels", args.skip_levels);
    cfg.set_opt("gamma", args.gamma);
    cfg.set_opt("mode", args.mode.as_deref());
    cfg.set_opt("progressive", args.no_progressive.then_some(false));
    cfg.set_opt("noise", args.no_noise.then_some(false));
    cfg.set_opt("degrade", args.degrade.then_some(true));
    cfg.set_opt("iters_stabilize", args.iters_stabilize);
    cfg.set_opt("iters_fade", args.iters_fade);
    cfg.set_opt("lr", args.lr);
    cfg.set_opt("batch", args.batch);
    cfg.set_opt("checkpoint_interval", args.checkpoint_interval);
    cfg.set_opt("log_interval", args.log_interval);
    if args.skip_bad {
        cfg.set("skip_bad", true);
    }

    let seed: u64 = cfg.get_or("seed", 42)?;
    let output_res: usize = cfg.get_or("output_res", 64)?;
    let opts = options_from(&cfg, seed, &args.out)?;

    // Data source: an explicit folder wins over the synthetic set.
    let source: Box<dyn ImageSource> = match cfg.raw("data") {
        Some(dir) => Box::new(util::folder_source(
            std::path::Path::new(dir),
            output_res,
            cfg.get_or("skip_bad", false)?,
        )?),
        None => {
            let n: usize = cfg.get_or("synth", 512)?;
            cfg.set("synth", n);
            Box::new(SynthDataset::new(n, output_res, derive_seed(seed, "data"))?)
        }
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut trainer = match &args.resume {
        Some(ckpt) => {
            cfg.set("resume", ckpt.display());
            Trainer::resume(opts, ckpt)?
        }
        None => Trainer::new(opts)?,
    };

    let total = trainer.total_iters();
    let print_every = (total / 40).max(1);
    println!(
        "training {} iterations to {}x{} (seed {seed})",
        total - trainer.global_iter(),
        output_res,
        output_res
    );
    let started = Instant::now();
    let mut last_res = 0usize;
    while trainer.global_iter() < total {
        let row = trainer.step(source.as_ref())?;
        if !(row.l_d.is_finite() && row.l_g.is_finite() && row.r1.is_finite()) {
            return Err(PanError::Divergence {
                what: format!("non-finite loss at iteration {}", row.iter),
                last_checkpoint: trainer.last_checkpoint().map(str::to_string),
            }
            .into());
        }
        if row.resolution != last_res {
            last_res = row.resolution;
            println!("[{:>7}] now training at {}x{}", row.iter, last_res, last_res);
        }
        if row.iter % print_every == 0 || row.iter == total {
            println!(
                "[{:>7}] L_d {:+.4}  L_g {:+.4}  R1 {:.4}  alpha {:.2}  ({:.0}s)",
                row.iter,
                row.l_d,
                row.l_g,
                row.r1,
                row.alpha,
                started.elapsed().as_secs_f64()
            );
        }
    }
    println!("finished in {:.0}s", started.elapsed().as_secs_f64());

    let log_path = args.out.join("log.csv");
    write_csv(&log_path, trainer.log())?;

    let mut outputs = vec![log_path];
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pan"))
        .collect();
    entries.sort();
    outputs.extend(entries);
    util::finish_manifest("train", cfg, seed, &args.out, &outputs)
}

/// Resolves the full option set from the merged configuration.
fn options_from(cfg: &pansr::config::Config, seed: u64, out: &std::path::Path) -> Result<TrainOptions> {
    let mut opts = TrainOptions::desk(seed);
    let output_res: usize = cfg.get_or("output_res", 64)?;
    let lr: f64 = cfg.get_or("lr", 0.001)?;
    let batch: usize = cfg.get_or("batch", 16)?;

    let mut resolutions = vec![8usize];
    while *resolutions.last().unwrap() < output_res {
        let next = resolutions.last().unwrap() * 2;
        resolutions.push(next);
    }
    opts.schedule = TrainSchedule {
        lr_table: resolutions.iter().map(|&r| (r, lr)).collect(),
        batch_table: resolutions.iter().map(|&r| (r, batch)).collect(),
        resolutions,
        iters_stabilize: cfg.get_or("iters_stabilize", 2000)?,
        iters_fade: cfg.get_or("iters_fade", 2000)?,
        seed,
    };
    opts.input_res = cfg.get_or("input_res", 16)?;
    opts.ch_base = cfg.get_or("ch_base", 8)?;
    opts.ch_max = cfg.get_or("ch_max", 32)?;
    opts.skip_levels = cfg.get_or("skip_levels", 8)?;
    opts.gamma = cfg.get_or("gamma", 5.0)?;
    opts.mode = match cfg.get_or("mode", "gan".to_string())?.as_str() {
        "gan" => TrainMode::Gan,
        "l1" => TrainMode::Pixel(PixelLoss::L1),
        "l2" => TrainMode::Pixel(PixelLoss::L2),
        other => bail!(PanError::Config(format!(
            "mode must be gan, l1, or l2, got `{other}`"
        ))),
    };
    opts.progressive = cfg.get_or("progressive", true)?;
    opts.noise = cfg.get_or("noise", true)?;
    if cfg.get_or("degrade", false)? {
        opts.degrade = Some(DegradationParams {
            seed: derive_seed(seed, "degrade"),
            ..DegradationParams::default()
        });
    }
    opts.checkpoint_dir = Some(out.to_path_buf());
    let interval: usize = cfg.get_or("checkpoint_interval", 0)?;
    // An interval of zero still keeps the final state: checkpoint exactly
    // once, at the last iteration.
    opts.checkpoint_interval = if interval == 0 {
        if opts.progressive {
            opts.schedule.total_iters()
        } else {
            opts.schedule.phase_len()
        }
    } else {
        interval
    };
    opts.log_interval = cfg.get_or("log_interval", 10)?;
    Ok(opts)
}
