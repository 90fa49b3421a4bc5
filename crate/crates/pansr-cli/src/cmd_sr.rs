//! `pansr sr`: upscale PNGs with a trained checkpoint.
//!
//! The native scale factor is whatever the checkpoint was trained for
//! (input_res -> output_res); `--downscale n` average-pools the result by
//! 2^n afterwards so outputs can be compared against references produced at
//! a smaller scale.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use pansr::data::{read_png, write_png};
use pansr::net::{derive_seed, Generator, Noise};
use pansr::tensor::ops;
use pansr::train::Checkpoint;
use pansr::{PanError, Tensor};

use crate::util;
use crate::CommonArgs;

#[derive(Args, Debug)]
pub struct SrArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model checkpoint (.pan).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for the upscaled PNGs.
    #[arg(long)]
    out: PathBuf,
    /// Noise mode: zero (deterministic) or seeded.
    #[arg(long)]
    noise: Option<String>,
    /// Average-pool the output by 2^n before writing.
    #[arg(long)]
    downscale: Option<usize>,
    /// Input PNGs at the checkpoint's input resolution.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

pub fn run(args: SrArgs) -> Result<()> {
    let mut cfg = util::base_config(args.common.config.as_ref())?;
    cfg.set_opt("seed", args.common.seed);
    cfg.set_opt("noise", args.noise.as_deref());
    cfg.set_opt("downscale", args.downscale);
    cfg.set("checkpoint", args.checkpoint.display());

    let seed: u64 = cfg.get_or("seed", 42)?;
    let downscale: usize = cfg.get_or("downscale", 0)?;
    let noise_mode = cfg.get_or("noise", "zero".to_string())?;
    if noise_mode != "zero" && noise_mode != "seeded" {
        return Err(PanError::Config(format!(
            "noise must be `zero` or `seeded`, got `{noise_mode}`"
        ))
        .into());
    }

    let (gen, input_res) = load_generator(&args.checkpoint)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut outputs = Vec::new();
    for (i, path) in args.inputs.iter().enumerate() {
        let img = read_png(path)?;
        let s = img.shape().to_vec();
        if s[1] != input_res || s[2] != input_res {
            return Err(PanError::Config(format!(
                "{} is {}x{} but the checkpoint expects {}x{} inputs",
                path.display(),
                s[2],
                s[1],
                input_res,
                input_res
            ))
            .into());
        }
        let lr = Tensor::from_vec(&[1, 3, input_res, input_res], img.data().to_vec())?;
        let noise = match noise_mode.as_str() {
            "seeded" => Noise::Seeded(derive_seed(seed, &format!("sr.{i}"))),
            _ => Noise::Zero,
        };
        let mut y = gen.forward(&lr, 1.0, noise)?;
        for _ in 0..downscale {
            y = ops::avg_pool_2x(&y)?;
        }
        let res = y.shape()[2];
        let flat = Tensor::from_vec(&[3, res, res], y.data().to_vec())?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image{i}"));
        let out_path = args.out.join(format!("{stem}_sr.png"));
        write_png(&out_path, &flat)?;
        println!("{} -> {} ({res}x{res})", path.display(), out_path.display());
        outputs.push(out_path);
    }
    util::finish_manifest("sr", cfg, seed, &args.out, &outputs)
}

/// Rebuilds the generator recorded in a trainer checkpoint and returns it
/// with its expected input resolution.
fn load_generator(path: &std::path::Path) -> Result<(Generator<f32>, usize)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.meta_str("kind")? != "trainer" {
        return Err(PanError::Data(format!(
            "{} is not a trainer checkpoint",
            path.display()
        ))
        .into());
    }
    let input_res = ckpt.meta_usize("input_res")?;
    let output_res = ckpt.meta_usize("output_res")?;
    let cur_res = ckpt.meta_usize("cur_res")?;
    let seed = ckpt.meta_u64("seed")?;
    let gen = Generator::<f32>::new(
        input_res,
        output_res,
        cur_res,
        ckpt.meta_usize("ch_base")?,
        ckpt.meta_usize("ch_max")?,
        ckpt.meta_usize("skip_levels")?,
        derive_seed(seed, "gen"),
    )?;
    for (name, p) in gen.params() {
        p.set(ckpt.tensor(&name)?.detach())?;
    }
    Ok((gen, input_res))
}
