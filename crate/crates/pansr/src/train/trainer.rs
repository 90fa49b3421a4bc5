//! The progressive training loop: alternating discriminator/generator
//! updates, growth at phase boundaries, fade-in, checkpoints, and loss
//! logging.
//!
//! Determinism contract: every random draw — batch sampling, degradation,
//! decoder noise — is a pure function of `(seed, global iteration)` or
//! `(seed, dataset index)`, never of call order or elapsed state. Two runs
//! with the same options produce bit-identical parameters, and a run
//! resumed from a checkpoint continues the exact trajectory of an
//! uninterrupted one.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{batch_from, ImageSource};
use crate::degrade::DegradationParams;
use crate::error::{PanError, Result};
use crate::loss::{d_loss_with_r1, g_loss, pixel_loss, Adam, PixelLoss};
use crate::net::{derive_seed, Discriminator, Generator, Noise};
use crate::tensor::tape::{backward, GradTape};
use crate::tensor::{Element, Tensor};

use super::checkpoint::Checkpoint;
use super::pyramid::{build_pyramid, DataPyramid};
use super::schedule::{alpha_at, TrainSchedule};

/// What the generator optimizes: the adversarial game or a plain pixel
/// regression (the perceptual-vs-distortion baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Gan,
    Pixel(PixelLoss),
}

impl TrainMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gan" => Ok(TrainMode::Gan),
            "l1" => Ok(TrainMode::Pixel(PixelLoss::L1)),
            "l2" => Ok(TrainMode::Pixel(PixelLoss::L2)),
            other => Err(PanError::Config(format!(
                "unknown mode '{other}' (expected gan, l1 or l2)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Gan => "gan",
            TrainMode::Pixel(PixelLoss::L1) => "l1",
            TrainMode::Pixel(PixelLoss::L2) => "l2",
        }
    }
}

/// Everything a training run needs besides the dataset.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub schedule: TrainSchedule,
    pub input_res: usize,
    pub ch_base: usize,
    pub ch_max: usize,
    pub skip_levels: usize,
    pub gamma: f64,
    pub mode: TrainMode,
    /// When false, train only at the final resolution from scratch.
    pub progressive: bool,
    /// When false, decoder noise injection is disabled everywhere.
    pub noise: bool,
    pub degrade: Option<DegradationParams>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Save a checkpoint every this many iterations (0 = only on demand).
    pub checkpoint_interval: usize,
    /// Record a CSV row every this many iterations.
    pub log_interval: usize,
}

impl TrainOptions {
    /// The desk-scale defaults: 16 -> 64, four phases of 2000 + 2000
    /// iterations at batch 16, narrow channels sized to finish on one CPU.
    pub fn desk(seed: u64) -> Self {
        TrainOptions {
            schedule: super::schedule::desk_schedule(seed),
            input_res: 16,
            ch_base: 8,
            ch_max: 32,
            skip_levels: 8,
            gamma: 5.0,
            mode: TrainMode::Gan,
            progressive: true,
            noise: true,
            degrade: None,
            checkpoint_dir: None,
            checkpoint_interval: 0,
            log_interval: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let out = self.schedule.output_res();
        if !self.input_res.is_power_of_two() || self.input_res < 8 {
            return Err(PanError::Config(format!(
                "input resolution must be a power of two >= 8, got {}",
                self.input_res
            )));
        }
        if self.input_res > out {
            return Err(PanError::Config(format!(
                "input resolution {} exceeds output resolution {out}",
                self.input_res
            )));
        }
        if self.ch_base == 0 || self.ch_base > self.ch_max {
            return Err(PanError::Config(format!(
                "need 0 < ch_base <= ch_max, got {} and {}",
                self.ch_base, self.ch_max
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(PanError::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.log_interval == 0 {
            return Err(PanError::Config("log interval must be at least 1".into()));
        }
        if let Some(d) = &self.degrade {
            d.validate()?;
        }
        Ok(())
    }

    /// Stable digest of everything that shapes the training trajectory
    /// (not of logging/checkpoint cadence). Stored in checkpoints so a
    /// resume with different options is refused instead of silently
    /// diverging.
    pub fn fingerprint(&self) -> String {
        let s = &self.schedule;
        let mut text = format!(
            "res={:?};stab={};fade={};lr={:?};batch={:?};seed={};input={};chb={};chm={};skip={};gamma={};mode={};prog={};noise={};",
            s.resolutions,
            s.iters_stabilize,
            s.iters_fade,
            s.lr_table,
            s.batch_table,
            s.seed,
            self.input_res,
            self.ch_base,
            self.ch_max,
            self.skip_levels,
            self.gamma,
            self.mode.name(),
            self.progressive,
            self.noise,
        );
        match &self.degrade {
            Some(d) => text.push_str(&format!(
                "deg=sigma{:?}len{:?}noise{:?}q{:?}scale{}seed{}",
                d.sigma, d.motion_len, d.noise_sigma, d.quality, d.scale, d.seed
            )),
            None => text.push_str("deg=off"),
        }
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One logged iteration.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub iter: usize,
    pub l_d: f64,
    pub l_g: f64,
    pub r1: f64,
    pub alpha: f64,
    pub resolution: usize,
}

/// Write log rows as CSV with the standard header.
pub fn write_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from("iter,L_d,L_g,R1,alpha,resolution\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iter, r.l_d, r.l_g, r.r1, r.alpha, r.resolution
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub struct Trainer {
    opts: TrainOptions,
    phases: Vec<usize>,
    gen: Generator<f32>,
    disc: Discriminator<f32>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    global_iter: usize,
    log: Vec<LogRow>,
    last_checkpoint: Option<String>,
    pyramid: Option<DataPyramid>,
    dataset_len: usize,
}

impl Trainer {
    pub fn new(opts: TrainOptions) -> Result<Self> {
        opts.validate()?;
        let out_res = opts.schedule.output_res();
        let phases: Vec<usize> = if opts.progressive {
            opts.schedule.resolutions.clone()
        } else {
            vec![out_res]
        };
        let start = phases[0];
        let seed = opts.schedule.seed;
        let gen = Generator::new(
            opts.input_res,
            out_res,
            start,
            opts.ch_base,
            opts.ch_max,
            opts.skip_levels,
            derive_seed(seed, "gen"),
        )?;
        let disc = Discriminator::new(start, out_res, opts.ch_base, opts.ch_max, derive_seed(seed, "disc"))?;
        let lr0 = opts.schedule.lr(start)?;
        Ok(Trainer {
            opts,
            phases,
            gen,
            disc,
            opt_g: Adam::new(lr0),
            opt_d: Adam::new(lr0),
            global_iter: 0,
            log: Vec::new(),
            last_checkpoint: None,
            pyramid: None,
            dataset_len: 0,
        })
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.gen
    }

    pub fn discriminator(&self) -> &Discriminator<f32> {
        &self.disc
    }

    pub fn global_iter(&self) -> usize {
        self.global_iter
    }

    pub fn total_iters(&self) -> usize {
        self.opts.schedule.phase_len() * self.phases.len()
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn last_checkpoint(&self) -> Option<&str> {
        self.last_checkpoint.as_deref()
    }

    fn ensure_pyramid(&mut self, data: &dyn ImageSource) -> Result<()> {
        if self.pyramid.is_some() {
            return Ok(());
        }
        if data.is_empty() {
            return Err(PanError::Data("training dataset is empty".into()));
        }
        let out_res = self.opts.schedule.output_res();
        if data.resolution() != out_res {
            return Err(PanError::Geometry {
                op: "train",
                detail: format!(
                    "dataset resolution {} does not match the schedule's output resolution {out_res}",
                    data.resolution()
                ),
            });
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let hr = batch_from(data, &indices)?;
        let u64_indices: Vec<u64> = indices.iter().map(|&i| i as u64).collect();
        self.pyramid = Some(build_pyramid(
            &hr,
            self.opts.input_res,
            self.opts.degrade.as_ref(),
            &u64_indices,
            &self.opts.schedule.resolutions,
        )?);
        self.dataset_len = data.len();
        Ok(())
    }

    fn noise_for(&self, role: &str, iter: usize) -> Noise {
        if self.opts.noise {
            Noise::Seeded(derive_seed(self.opts.schedule.seed, &format!("{role}noise.{iter}")))
        } else {
            Noise::Zero
        }
    }

    fn sample_indices(&self, tag: &str, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.opts.schedule.seed, tag));
        (0..n).map(|_| rng.random_range(0..self.dataset_len)).collect()
    }

    /// Run a single iteration (one D step then one G step in GAN mode; one
    /// generator step in pixel mode). Grows the networks when the iteration
    /// starts a new phase.
    pub fn step(&mut self, data: &dyn ImageSource) -> Result<LogRow> {
        if self.global_iter >= self.total_iters() {
            return Err(PanError::Config(format!(
                "training already complete at iteration {}",
                self.global_iter
            )));
        }
        self.ensure_pyramid(data)?;

        let phase_len = self.opts.schedule.phase_len();
        let phase_idx = self.global_iter / phase_len;
        let iter_in_phase = self.global_iter % phase_len;
        let res = self.phases[phase_idx];
        while self.gen.output_res() < res {
            self.gen.grow()?;
            self.disc.grow()?;
        }
        let alpha = if phase_idx == 0 {
            1.0
        } else {
            alpha_at(iter_in_phase, self.opts.schedule.iters_fade)
        };
        let lr = self.opts.schedule.lr(res)?;
        self.opt_g.set_lr(lr);
        self.opt_d.set_lr(lr);

        let row = match self.opts.mode {
            TrainMode::Gan => self.gan_step(res, alpha),
            TrainMode::Pixel(kind) => self.pixel_step(kind, res, alpha),
        };
        let row = row.map_err(|e| self.wrap_divergence(e))?;

        self.global_iter += 1;
        if (self.global_iter - 1) % self.opts.log_interval == 0 || self.global_iter == self.total_iters() {
            self.log.push(row.clone());
        }
        if self.opts.checkpoint_interval > 0
            && self.opts.checkpoint_dir.is_some()
            && (self.global_iter % self.opts.checkpoint_interval == 0
                || self.global_iter == self.total_iters())
        {
            let dir = self.opts.checkpoint_dir.clone().unwrap();
            let path = dir.join(format!("ckpt_{:07}.pan", self.global_iter));
            self.save_checkpoint(&path)?;
        }
        Ok(row)
    }

    /// Train to the end of the schedule.
    pub fn run(&mut self, data: &dyn ImageSource) -> Result<()> {
        while self.global_iter < self.total_iters() {
            self.step(data)?;
        }
        Ok(())
    }

    /// Non-finite values anywhere in an update abort the run, pointing at
    /// the most recent checkpoint.
    fn wrap_divergence(&self, e: PanError) -> PanError {
        match e {
            PanError::NonFinite { .. } => PanError::Divergence {
                what: format!("{e} at iteration {}", self.global_iter),
                last_checkpoint: self.last_checkpoint.clone(),
            },
            PanError::Divergence { what, .. } => PanError::Divergence {
                what: format!("{what} at iteration {}", self.global_iter),
                last_checkpoint: self.last_checkpoint.clone(),
            },
            other => other,
        }
    }

    fn gan_step(&mut self, res: usize, alpha: f64) -> Result<LogRow> {
        let it = self.global_iter;
        let b = self.opts.schedule.batch(res)?;
        let gamma = self.opts.gamma;

        // Discriminator step. Fakes are produced before the tape opens, so
        // no generator gradient exists to leak into the D update.
        let idx = self.sample_indices(&format!("batch.d.{it}"), b);
        let (lr_in, real) = self.pyramid.as_ref().unwrap().batch_at(res, &idx)?;
        let fake = self.gen.forward(&lr_in, alpha, self.noise_for("dnoise", it))?;
        let (l_d, r1) = {
            let _tape = GradTape::<f32>::new();
            real.set_requires_grad(true);
            let d_real = self.disc.forward(&real, alpha)?;
            let d_fake = self.disc.forward(&fake, alpha)?;
            let (loss, penalty) = d_loss_with_r1(&d_real, &d_fake, &real, gamma)?;
            let params = self.disc.params();
            let values: Vec<Tensor<f32>> = params.iter().map(|(_, p)| p.get()).collect();
            let refs: Vec<&Tensor<f32>> = values.iter().collect();
            let grads = backward(&loss, &refs, false)?;
            self.opt_d.step(&params, &grads)?;
            (loss.item()?.to_f64(), penalty.item()?.to_f64())
        };

        // Generator step on a fresh batch.
        let idx = self.sample_indices(&format!("batch.g.{it}"), b);
        let (lr_in, _) = self.pyramid.as_ref().unwrap().batch_at(res, &idx)?;
        let l_g = {
            let _tape = GradTape::<f32>::new();
            let fake = self.gen.forward(&lr_in, alpha, self.noise_for("gnoise", it))?;
            let d_fake = self.disc.forward(&fake, alpha)?;
            let loss = g_loss(&d_fake)?;
            let params = self.gen.params();
            let values: Vec<Tensor<f32>> = params.iter().map(|(_, p)| p.get()).collect();
            let refs: Vec<&Tensor<f32>> = values.iter().collect();
            let grads = backward(&loss, &refs, false)?;
            self.opt_g.step(&params, &grads)?;
            loss.item()?.to_f64()
        };

        Ok(LogRow { iter: it, l_d, l_g, r1, alpha, resolution: res })
    }

    fn pixel_step(&mut self, kind: PixelLoss, res: usize, alpha: f64) -> Result<LogRow> {
        let it = self.global_iter;
        let b = self.opts.schedule.batch(res)?;
        let idx = self.sample_indices(&format!("batch.g.{it}"), b);
        let (lr_in, target) = self.pyramid.as_ref().unwrap().batch_at(res, &idx)?;
        let l_g = {
            let _tape = GradTape::<f32>::new();
            let fake = self.gen.forward(&lr_in, alpha, self.noise_for("gnoise", it))?;
            let loss = pixel_loss(kind, &fake, &target)?;
            let params = self.gen.params();
            let values: Vec<Tensor<f32>> = params.iter().map(|(_, p)| p.get()).collect();
            let refs: Vec<&Tensor<f32>> = values.iter().collect();
            let grads = backward(&loss, &refs, false)?;
            self.opt_g.step(&params, &grads)?;
            loss.item()?.to_f64()
        };
        Ok(LogRow { iter: it, l_d: 0.0, l_g, r1: 0.0, alpha, resolution: res })
    }

    /// Serialize parameters, optimizer moments and phase state.
    pub fn save_checkpoint(&mut self, path: &Path) -> Result<()> {
        let mut c = Checkpoint::default();
        let m = &mut c.meta;
        m.insert("kind".into(), "trainer".into());
        m.insert("fingerprint".into(), self.opts.fingerprint());
        m.insert("mode".into(), self.opts.mode.name().into());
        m.insert("seed".into(), self.opts.schedule.seed.to_string());
        m.insert("input_res".into(), self.opts.input_res.to_string());
        m.insert("output_res".into(), self.opts.schedule.output_res().to_string());
        m.insert("start_res".into(), self.gen.start_res().to_string());
        m.insert("cur_res".into(), self.gen.output_res().to_string());
        m.insert("ch_base".into(), self.opts.ch_base.to_string());
        m.insert("ch_max".into(), self.opts.ch_max.to_string());
        m.insert("skip_levels".into(), self.opts.skip_levels.to_string());
        m.insert("global_iter".into(), self.global_iter.to_string());
        m.insert("noise".into(), self.opts.noise.to_string());
        m.insert("progressive".into(), self.opts.progressive.to_string());
        let (tg, sg) = self.opt_g.state();
        m.insert("opt.g.step".into(), tg.to_string());
        for (key, data) in sg {
            let len = data.len();
            c.tensors.insert(format!("opt.g.{key}"), Tensor::new_unchecked(vec![len], data));
        }
        let (td, sd) = self.opt_d.state();
        m.insert("opt.d.step".into(), td.to_string());
        for (key, data) in sd {
            let len = data.len();
            c.tensors.insert(format!("opt.d.{key}"), Tensor::new_unchecked(vec![len], data));
        }
        for (name, p) in self.gen.params().into_iter().chain(self.disc.params()) {
            c.tensors.insert(name, p.get().detach());
        }
        c.save(path)?;
        self.last_checkpoint = Some(path.display().to_string());
        Ok(())
    }

    /// Rebuild a trainer mid-run from a checkpoint written with the same
    /// options. The options must match bit-for-bit (fingerprint check), so
    /// the resumed trajectory is the uninterrupted one.
    pub fn resume(opts: TrainOptions, path: &Path) -> Result<Trainer> {
        let c = Checkpoint::load(path)?;
        if c.meta_str("kind")? != "trainer" {
            return Err(PanError::Data(format!(
                "{} is not a trainer checkpoint",
                path.display()
            )));
        }
        let stored = c.meta_str("fingerprint")?;
        let ours = opts.fingerprint();
        if stored != ours {
            return Err(PanError::Config(format!(
                "checkpoint {} was written with different training options (fingerprint {} vs {})",
                path.display(),
                &stored[..12.min(stored.len())],
                &ours[..12]
            )));
        }
        let mut t = Trainer::new(opts)?;
        let cur_res = c.meta_usize("cur_res")?;
        while t.gen.output_res() < cur_res {
            t.gen.grow()?;
            t.disc.grow()?;
        }
        Self::load_params(&c, &t.gen.params())?;
        Self::load_params(&c, &t.disc.params())?;
        t.opt_g.load_state(c.meta_u64("opt.g.step")?, &Self::opt_entries(&c, "opt.g.")?)?;
        t.opt_d.load_state(c.meta_u64("opt.d.step")?, &Self::opt_entries(&c, "opt.d.")?)?;
        t.global_iter = c.meta_usize("global_iter")?;
        if t.global_iter > t.total_iters() {
            return Err(PanError::Data(format!(
                "checkpoint iteration {} exceeds the schedule's {} total",
                t.global_iter,
                t.total_iters()
            )));
        }
        t.last_checkpoint = Some(path.display().to_string());
        Ok(t)
    }

    fn load_params(c: &Checkpoint, params: &[(String, crate::net::Param<f32>)]) -> Result<()> {
        for (name, p) in params {
            p.set(c.tensor(name)?.detach())?;
        }
        Ok(())
    }

    fn opt_entries(c: &Checkpoint, prefix: &str) -> Result<Vec<(String, Vec<f32>)>> {
        let mut out = Vec::new();
        for (name, t) in &c.tensors {
            if let Some(key) = name.strip_prefix(prefix) {
                out.push((key.to_string(), t.data().to_vec()));
            }
        }
        Ok(out)
    }
}
