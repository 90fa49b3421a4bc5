//! `pansr fit-niqe`: fit the no-reference quality model to a pristine
//! corpus. The fitted model is a small text artifact that `evaluate
//! --niqe-model` consumes; absolute scores depend on the corpus, so compare
//! scores only between models fitted on the same one.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use pansr::data::{batch_from, ImageSource, SynthDataset};
use pansr::metrics::niqe_fit;
use pansr::net::derive_seed;

use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct FitNiqeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for niqe.model and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Folder of pristine PNGs (at least 50).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Fit on a synthetic corpus of this many images instead of a folder.
    #[arg(long)]
    synth: Option<usize>,
    /// Resolution the corpus is loaded or generated at.
    #[arg(long)]
    resolution: Option<usize>,
    /// Skip unreadable or undersized images instead of aborting.
    #[arg(long)]
    skip_bad: bool,
}

pub fn run(args: FitNiqeArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set_opt("corpus", args.corpus.as_ref().map(|p| p.display()));
    cfg.set_opt("synth", args.synth);
    cfg.set_opt("resolution", args.resolution);
    if args.skip_bad {
        cfg.set("skip_bad", true);
    }

    let seed: u64 = cfg.get_or("seed", 42)?;
    let resolution: usize = cfg.get_or("resolution", 64)?;
    cfg.set("resolution", resolution);

    let corpus = match cfg.raw("corpus") {
        Some(dir) => {
            let source = util::folder_source(
                std::path::Path::new(dir),
                resolution,
                cfg.get_or("skip_bad", false)?,
            )?;
            let idx: Vec<usize> = (0..source.len()).collect();
            batch_from(&source, &idx)?
        }
        None => {
            let n: usize = cfg.get_or("synth", 128)?;
            cfg.set("synth", n);
            let set = SynthDataset::new(n, resolution, derive_seed(seed, "niqe-corpus"))?;
            let idx: Vec<usize> = (0..n).collect();
            batch_from(&set, &idx)?
        }
    };

    println!("fitting on {} images at {resolution}x{resolution}", corpus.shape()[0]);
    let model = niqe_fit(&corpus)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let model_path = args.out.join("niqe.model");
    model.save(&model_path)?;
    println!("model: {}", model_path.display());
    util::finish_manifest("fit-niqe", cfg, seed, &args.out, &[model_path])
}
