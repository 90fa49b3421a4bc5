//! `pansr degrade`: run the stochastic camera pipeline (aperture blur,
//! motion blur, downsampling, sensor noise, JPEG surrogate) over a folder of
//! PNGs. Every sampling range is a flag; the values each image actually drew
//! go into a sidecar file so the set can be audited or reproduced.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use pansr::data::{batch_from, write_png, ImageSource};
use pansr::degrade::{degrade_batch, DegradationParams};
use pansr::Tensor;

use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct DegradeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Folder of input PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for degraded PNGs, the drawn-parameter sidecar, and
    /// the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Resolution the inputs are loaded at.
    #[arg(long)]
    resolution: Option<usize>,
    /// Aperture blur sigma range, in pixels.
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Motion blur length range, in pixels.
    #[arg(long)]
    motion_min: Option<f64>,
    #[arg(long)]
    motion_max: Option<f64>,
    /// Additive noise sigma range, on the [-1,1] pixel scale.
    #[arg(long)]
    noise_min: Option<f64>,
    #[arg(long)]
    noise_max: Option<f64>,
    /// JPEG-surrogate quality range.
    #[arg(long)]
    quality_min: Option<u8>,
    #[arg(long)]
    quality_max: Option<u8>,
    /// Skip the JPEG surrogate entirely.
    #[arg(long)]
    no_jpeg: bool,
    /// Integer downsampling factor (1 keeps the resolution).
    #[arg(long)]
    scale: Option<usize>,
    /// Skip unreadable or undersized images instead of aborting.
    #[arg(long)]
    skip_bad: bool,
}

pub fn run(args: DegradeArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set("input", args.input.display());
    cfg.set_opt("resolution", args.resolution);
    cfg.set_opt("sigma_min", args.sigma_min);
    cfg.set_opt("sigma_max", args.sigma_max);
    cfg.set_opt("motion_min", args.motion_min);
    cfg.set_opt("motion_max", args.motion_max);
    cfg.set_opt("noise_min", args.noise_min);
    cfg.set_opt("noise_max", args.noise_max);
    cfg.set_opt("quality_min", args.quality_min);
    cfg.set_opt("quality_max", args.quality_max);
    cfg.set_opt("jpeg", args.no_jpeg.then_some(false));
    cfg.set_opt("scale", args.scale);
    if args.skip_bad {
        cfg.set("skip_bad", true);
    }

    let seed: u64 = cfg.get_or("seed", 42)?;
    let defaults = DegradationParams::default();
    let params = DegradationParams {
        sigma: (
            cfg.get_or("sigma_min", defaults.sigma.0)?,
            cfg.get_or("sigma_max", defaults.sigma.1)?,
        ),
        motion_len: (
            cfg.get_or("motion_min", defaults.motion_len.0)?,
            cfg.get_or("motion_max", defaults.motion_len.1)?,
        ),
        noise_sigma: (
            cfg.get_or("noise_min", defaults.noise_sigma.0)?,
            cfg.get_or("noise_max", defaults.noise_sigma.1)?,
        ),
        quality: if cfg.get_or("jpeg", true)? {
            let q = defaults.quality.unwrap();
            Some((
                cfg.get_or("quality_min", q.0)?,
                cfg.get_or("quality_max", q.1)?,
            ))
        } else {
            None
        },
        scale: cfg.get_or("scale", defaults.scale)?,
        seed,
    };

    let resolution: usize = cfg.get_or("resolution", 64)?;
    cfg.set("resolution", resolution);
    let source = util::folder_source(&args.input, resolution, cfg.get_or("skip_bad", false)?)?;
    let idx: Vec<usize> = (0..source.len()).collect();
    let batch = batch_from(&source, &idx)?;
    let indices: Vec<u64> = (0..source.len() as u64).collect();
    let (degraded, drawn) = degrade_batch(&batch, &params, &indices)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let s = degraded.shape().to_vec();
    let per = s[1] * s[2] * s[3];
    let mut outputs = Vec::new();
    let mut sidecar = String::new();
    for (i, path) in source.paths().iter().enumerate() {
        let img = Tensor::from_vec(
            &[s[1], s[2], s[3]],
            degraded.data()[i * per..(i + 1) * per].to_vec(),
        )?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{i}"));
        let out_path = args.out.join(format!("{stem}_degraded.png"));
        write_png(&out_path, &img)?;
        sidecar.push_str(&format!("{} {}\n", stem, drawn[i].manifest_line()));
        outputs.push(out_path);
    }
    let sidecar_path = args.out.join("drawn_params.txt");
    std::fs::write(&sidecar_path, sidecar)?;
    outputs.push(sidecar_path);
    println!(
        "degraded {} images to {}x{}",
        s[0], s[3], s[2]
    );
    util::finish_manifest("degrade", cfg, seed, &args.out, &outputs)
}
