//! `pansr evaluate`: score an output image set against a reference set and
//! emit a CSV metric report.
//!
//! Paired metrics (PSNR, SSIM) need both sides as same-sized image folders
//! with equal counts; set metrics (FID, SWD) work on unpaired sets; NIQE
//! needs a fitted pristine model. FID features can be exported to a file and
//! imported back, so features from an external embedder can stand in for
//! either side.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use pansr::data::{batch_from, ImageSource};
use pansr::metrics::{
    default_embedder, fid, niqe_score, report_csv, swd, Features, MetricReport, NiqeModel,
};
use pansr::net::derive_seed;
use pansr::{PanError, Tensor};

use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for report.csv and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Reference image folder.
    #[arg(long)]
    real: Option<PathBuf>,
    /// Folder of images to score.
    #[arg(long)]
    fake: Option<PathBuf>,
    /// Image resolution both folders are loaded at.
    #[arg(long)]
    resolution: Option<usize>,
    /// Use a pre-exported feature file for the reference side instead of
    /// embedding images.
    #[arg(long)]
    real_features: Option<PathBuf>,
    /// Use a pre-exported feature file for the scored side.
    #[arg(long)]
    fake_features: Option<PathBuf>,
    /// Export the reference features next to the report.
    #[arg(long)]
    export_real_features: bool,
    /// Export the scored features next to the report.
    #[arg(long)]
    export_fake_features: bool,
    /// Fitted NIQE model; adds a niqe row for the scored set.
    #[arg(long)]
    niqe_model: Option<PathBuf>,
    /// Skip unreadable or undersized images instead of aborting.
    #[arg(long)]
    skip_bad: bool,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set_opt("real", args.real.as_ref().map(|p| p.display()));
    cfg.set_opt("fake", args.fake.as_ref().map(|p| p.display()));
    cfg.set_opt("resolution", args.resolution);
    cfg.set_opt("real_features", args.real_features.as_ref().map(|p| p.display()));
    cfg.set_opt("fake_features", args.fake_features.as_ref().map(|p| p.display()));
    cfg.set_opt("niqe_model", args.niqe_model.as_ref().map(|p| p.display()));
    if args.skip_bad {
        cfg.set("skip_bad", true);
    }

    let seed: u64 = cfg.get_or("seed", 42)?;
    let skip_bad: bool = cfg.get_or("skip_bad", false)?;
    let real_pixels = load_side(&cfg, "real", skip_bad)?;
    let fake_pixels = load_side(&cfg, "fake", skip_bad)?;

    let real_feat = features_for(&cfg, "real_features", real_pixels.as_ref())?;
    let fake_feat = features_for(&cfg, "fake_features", fake_pixels.as_ref())?;
    let hash = cfg.hash();
    let mut rows = Vec::new();

    // Paired pixel metrics only make sense with equal-length image sets.
    if let (Some(real), Some(fake)) = (&real_pixels, &fake_pixels) {
        if real.shape() == fake.shape() {
            let n = real.shape()[0];
            let psnr_vals = pansr::metrics::psnr(fake, real)?;
            let capped: f64 = psnr_vals
                .iter()
                .map(|v| v.min(pansr::metrics::PSNR_CAP_DB))
                .sum::<f64>()
                / n as f64;
            rows.push(row("psnr", None, capped, n, "", seed, &hash));
            let ssim_vals = pansr::metrics::ssim(fake, real)?;
            let mean = ssim_vals.iter().sum::<f64>() / n as f64;
            rows.push(row("ssim", None, mean, n, "", seed, &hash));
        } else {
            println!(
                "note: image sets differ in shape ({:?} vs {:?}); skipping psnr/ssim",
                real.shape(),
                fake.shape()
            );
        }
    }

    if let (Some(rf), Some(ff)) = (&real_feat, &fake_feat) {
        let v = fid(rf, ff)?;
        rows.push(row("fid", None, v, ff.count, &ff.embedder_id, seed, &hash));
    }

    if let (Some(real), Some(fake)) = (&real_pixels, &fake_pixels) {
        let res = real.shape()[2];
        let levels: Vec<usize> = std::iter::successors(Some(res), |r| Some(r / 2))
            .take_while(|&r| r >= 16)
            .collect();
        if !levels.is_empty() && res == fake.shape()[2] {
            let n = fake.shape()[0];
            for (level, v) in swd(real, fake, &levels, 128, 512, derive_seed(seed, "swd"))? {
                rows.push(row("swd", Some(level), v, n, "", seed, &hash));
            }
        }
    }

    if let Some(model_path) = cfg.raw("niqe_model") {
        let fake = fake_pixels.as_ref().ok_or_else(|| {
            PanError::Config("niqe needs --fake images, not just features".into())
        })?;
        let model = NiqeModel::load(Path::new(model_path))?;
        let scores = niqe_score(fake, &model)?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        rows.push(row("niqe", None, mean, scores.len(), "", seed, &hash));
    }

    if rows.is_empty() {
        return Err(PanError::Config(
            "nothing to evaluate: give --real/--fake folders or feature files".into(),
        )
        .into());
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let report_path = args.out.join("report.csv");
    std::fs::write(&report_path, report_csv(&rows))?;
    println!("{}", report_csv(&rows).trim_end());
    let mut outputs = vec![report_path];

    if args.export_real_features {
        let f = real_feat.as_ref().ok_or_else(|| {
            PanError::Config("no reference features to export".into())
        })?;
        let p = args.out.join("real_features.bin");
        f.save(&p)?;
        outputs.push(p);
    }
    if args.export_fake_features {
        let f = fake_feat.as_ref().ok_or_else(|| {
            PanError::Config("no scored features to export".into())
        })?;
        let p = args.out.join("fake_features.bin");
        f.save(&p)?;
        outputs.push(p);
    }
    util::finish_manifest("evaluate", cfg, seed, &args.out, &outputs)
}

fn load_side(cfg: &pansr::config::Config, key: &str, skip_bad: bool) -> Result<Option<Tensor<f32>>> {
    let Some(dir) = cfg.raw(key) else { return Ok(None) };
    let resolution: usize = cfg.get::<usize>("resolution")?.ok_or_else(|| {
        PanError::Config(format!("--resolution is required to load --{key}"))
    })?;
    let source = util::folder_source(Path::new(dir), resolution, skip_bad)?;
    let idx: Vec<usize> = (0..source.len()).collect();
    Ok(Some(batch_from(&source, &idx)?))
}

/// Features for one side: an imported file wins; otherwise images are run
/// through the default embedder.
fn features_for(
    cfg: &pansr::config::Config,
    key: &str,
    pixels: Option<&Tensor<f32>>,
) -> Result<Option<Features>> {
    if let Some(path) = cfg.raw(key) {
        return Ok(Some(Features::load(Path::new(path))?));
    }
    match pixels {
        Some(x) => Ok(Some(default_embedder(x)?)),
        None => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn row(
    metric: &str,
    level: Option<usize>,
    value: f64,
    n_images: usize,
    embedder_id: &str,
    seed: u64,
    config_hash: &str,
) -> MetricReport {
    MetricReport {
        metric: metric.to_string(),
        level,
        value,
        n_images,
        embedder_id: embedder_id.to_string(),
        seed,
        config_hash: config_hash.to_string(),
    }
}
