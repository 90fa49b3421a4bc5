//! Partial U-Net generator with progressive growth on both ends.
//!
//! The network encodes a low-resolution image down to a 4x4 bottleneck and
//! decodes upward. Decoder stages at or below the input resolution
//! concatenate the matching encoder feature (U-Net skips); stages above the
//! input resolution have no encoder mirror and instead receive per-channel
//! scaled noise, which is what lets the adversarial phase invent plausible
//! high-frequency texture.
//!
//! Growth doubles the output resolution per call. While the current
//! resolution is still at or below the input resolution, growing also
//! extends the encoder: a new RGB adapter plus encoder block are prepended,
//! and during the fade the entry feature blends the new block's output with
//! the previous adapter applied to a 2x box downsample of the input (the
//! same pattern the discriminator uses on its input side). The output side
//! always blends the newest RGB head against the upsampled previous head
//! via [`crate::tensor::ops::fade_in_output`].

use super::{
    channels, check_res, derive_seed, eq_conv, eq_conv_up, leaky_slope, Param, Registry, Stride,
};
use crate::error::{PanError, Result};
use crate::tensor::{ops, Element, Tensor};

/// How decoder stages above the input resolution are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// No perturbation; the forward pass is a deterministic map.
    Zero,
    /// Standard-normal planes drawn from this seed (one per injection site).
    Seeded(u64),
}

pub struct Generator<E: Element> {
    input_res: usize,
    max_res: usize,
    start_res: usize,
    cur_res: usize,
    ch_base: usize,
    ch_max: usize,
    skip_levels: usize,
    seed: u64,
    reg: Registry<E>,
}

impl<E: Element> Generator<E> {
    /// Build a generator that will read `input_res` images once fully grown
    /// and currently outputs at `start_res` (grow it to reach `max_res`).
    /// While `start_res < input_res` the encoder is also partial and reads
    /// `min(start_res, input_res)` images. `skip_levels` caps how many
    /// decoder stages, counted from the coarsest (8), use U-Net skips.
    pub fn new(
        input_res: usize,
        max_res: usize,
        start_res: usize,
        ch_base: usize,
        ch_max: usize,
        skip_levels: usize,
        seed: u64,
    ) -> Result<Self> {
        check_res("input_res", input_res)?;
        check_res("max_res", max_res)?;
        check_res("start_res", start_res)?;
        if input_res < 8 {
            return Err(PanError::Config(format!(
                "input_res {input_res} leaves no room above the 4x4 bottleneck"
            )));
        }
        if input_res > max_res {
            return Err(PanError::Config(format!(
                "input_res {input_res} exceeds max_res {max_res}"
            )));
        }
        if start_res < 8 || start_res > max_res {
            return Err(PanError::Config(format!(
                "start_res {start_res} must lie in [8, max_res {max_res}]"
            )));
        }
        if ch_base == 0 || ch_max < ch_base {
            return Err(PanError::Config(format!(
                "need 0 < ch_base <= ch_max, got {ch_base}, {ch_max}"
            )));
        }
        let mut g = Generator {
            input_res,
            max_res,
            start_res,
            cur_res: start_res,
            ch_base,
            ch_max,
            skip_levels,
            seed,
            reg: Registry::new(seed),
        };
        let in_res = g.in_res();
        let mut r = g.first_in_res();
        while r <= in_res {
            g.add_from_rgb(r);
            r *= 2;
        }
        let mut r = in_res;
        while r > 4 {
            g.add_encoder_block(r);
            r /= 2;
        }
        g.reg.add_randn("g.mid4.w", &[g.ch(4), g.ch(4), 3, 3]);
        g.reg.add_zeros("g.mid4.b", &[g.ch(4)]);
        let mut r = 8;
        while r <= start_res {
            g.add_decoder_block(r);
            r *= 2;
        }
        g.add_to_rgb(start_res);
        Ok(g)
    }

    fn ch(&self, res: usize) -> usize {
        channels(res, self.max_res, self.ch_base, self.ch_max)
    }

    /// Resolution the encoder currently reads.
    fn in_res(&self) -> usize {
        self.cur_res.min(self.input_res)
    }

    /// Resolution the encoder read when the network was first built.
    fn first_in_res(&self) -> usize {
        self.start_res.min(self.input_res)
    }

    /// Whether the decoder stage at `res` concatenates an encoder skip.
    fn skip_at(&self, res: usize) -> bool {
        res <= self.input_res && ((res.trailing_zeros() - 3) as usize) < self.skip_levels
    }

    fn add_from_rgb(&mut self, res: usize) {
        self.reg.add_randn(&format!("g.from_rgb{res}.w"), &[self.ch(res), 3, 1, 1]);
        self.reg.add_zeros(&format!("g.from_rgb{res}.b"), &[self.ch(res)]);
    }

    fn add_encoder_block(&mut self, res: usize) {
        self.reg.add_randn(&format!("g.enc{res}.c0.w"), &[self.ch(res), self.ch(res), 3, 3]);
        self.reg.add_zeros(&format!("g.enc{res}.c0.b"), &[self.ch(res)]);
        self.reg.add_randn(&format!("g.enc{res}.down.w"), &[self.ch(res / 2), self.ch(res), 3, 3]);
        self.reg.add_zeros(&format!("g.enc{res}.down.b"), &[self.ch(res / 2)]);
    }

    fn add_decoder_block(&mut self, res: usize) {
        let (clo, chi) = (self.ch(res / 2), self.ch(res));
        self.reg.add_randn(&format!("g.dec{res}.up.w"), &[clo, chi, 3, 3]);
        self.reg.add_zeros(&format!("g.dec{res}.up.b"), &[chi]);
        let cin = chi + if self.skip_at(res) { self.ch(res) } else { 0 };
        self.reg.add_randn(&format!("g.dec{res}.c0.w"), &[chi, cin, 3, 3]);
        self.reg.add_zeros(&format!("g.dec{res}.c0.b"), &[chi]);
        if res > self.input_res {
            self.reg.add_zeros(&format!("g.dec{res}.noise"), &[chi]);
        }
    }

    fn add_to_rgb(&mut self, res: usize) {
        self.reg.add_randn(&format!("g.to_rgb{res}.w"), &[3, self.ch(res), 1, 1]);
        self.reg.add_zeros(&format!("g.to_rgb{res}.b"), &[3]);
    }

    /// Double the output resolution. While still at or below the input
    /// resolution this extends both ends (new RGB adapter + encoder block on
    /// the way in, decoder block + RGB head on the way out); past the input
    /// resolution only the decoder grows and the new stage gains a noise
    /// site instead of a skip. Existing parameters are untouched (bit-exact
    /// preservation), and because every tensor is seeded by its own name,
    /// growing yields the same initialization the layer would have received
    /// had the network been built at the larger size from scratch.
    pub fn grow(&mut self) -> Result<()> {
        let next = self.cur_res * 2;
        if next > self.max_res {
            return Err(PanError::Config(format!(
                "cannot grow beyond max_res {} (currently {})",
                self.max_res, self.cur_res
            )));
        }
        if next <= self.input_res {
            self.add_from_rgb(next);
            self.add_encoder_block(next);
        }
        self.add_decoder_block(next);
        self.add_to_rgb(next);
        self.cur_res = next;
        Ok(())
    }

    pub fn input_res(&self) -> usize {
        self.input_res
    }

    /// Resolution `forward` expects right now (tracks growth until the
    /// encoder is complete).
    pub fn lr_res(&self) -> usize {
        self.in_res()
    }

    pub fn output_res(&self) -> usize {
        self.cur_res
    }

    pub fn start_res(&self) -> usize {
        self.start_res
    }

    pub fn max_res(&self) -> usize {
        self.max_res
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hyperparams(&self) -> (usize, usize, usize) {
        (self.ch_base, self.ch_max, self.skip_levels)
    }

    /// Decoder resolutions that inject noise, ascending.
    pub fn noise_sites(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut r = 8;
        while r <= self.cur_res {
            if r > self.input_res {
                out.push(r);
            }
            r *= 2;
        }
        out
    }

    /// Decoder resolutions that concatenate an encoder skip, ascending.
    pub fn skip_sites(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut r = 8;
        while r <= self.cur_res {
            if self.skip_at(r) {
                out.push(r);
            }
            r *= 2;
        }
        out
    }

    /// Parameters in name order.
    pub fn params(&self) -> Vec<(String, Param<E>)> {
        self.reg.entries()
    }

    pub fn num_values(&self) -> usize {
        self.reg.entries().iter().map(|(_, p)| p.get().len()).sum()
    }

    fn p(&self, name: &str) -> Param<E> {
        self.reg.p(name).clone()
    }

    fn from_rgb(&self, img: &Tensor<E>, res: usize) -> Result<Tensor<E>> {
        ops::leaky_relu(
            &eq_conv(
                img,
                &self.p(&format!("g.from_rgb{res}.w")),
                &self.p(&format!("g.from_rgb{res}.b")),
                Stride::One,
            )?,
            leaky_slope::<E>(),
        )
    }

    /// Encoder block at `res`: 3x3 conv, then stride-2 3x3 conv, leaky-relu
    /// after each. Returns the halved feature and the pre-downsample feature
    /// (the U-Net skip candidate).
    fn encode(&self, t: &Tensor<E>, res: usize) -> Result<(Tensor<E>, Tensor<E>)> {
        let slope = leaky_slope::<E>();
        let kept = ops::leaky_relu(
            &eq_conv(t, &self.p(&format!("g.enc{res}.c0.w")), &self.p(&format!("g.enc{res}.c0.b")), Stride::One)?,
            slope,
        )?;
        let down = ops::leaky_relu(
            &eq_conv(&kept, &self.p(&format!("g.enc{res}.down.w")), &self.p(&format!("g.enc{res}.down.b")), Stride::Down)?,
            slope,
        )?;
        Ok((down, kept))
    }

    fn to_rgb(&self, feat: &Tensor<E>, res: usize) -> Result<Tensor<E>> {
        eq_conv(
            feat,
            &self.p(&format!("g.to_rgb{res}.w")),
            &self.p(&format!("g.to_rgb{res}.b")),
            Stride::One,
        )
    }

    /// Run the generator on `lr` of shape `[N, 3, lr_res, lr_res]`.
    ///
    /// `alpha` in `[0,1]` is the fade-in weight after a grow (1.0 = fully
    /// grown path, only meaningful once the network has grown at least
    /// once). During a fade at or below the input resolution the same alpha
    /// drives the input-side blend and the output-side blend. `noise`
    /// perturbs decoder stages above the input resolution; with all noise
    /// scales zero the output is independent of the seed.
    pub fn forward(&self, lr: &Tensor<E>, alpha: f64, noise: Noise) -> Result<Tensor<E>> {
        let in_res = self.in_res();
        if lr.shape().len() != 4 || lr.shape()[1] != 3 || lr.shape()[2] != in_res || lr.shape()[3] != in_res {
            return Err(PanError::Geometry {
                op: "generator",
                detail: format!("expected [N,3,{0},{0}], got {1:?}", in_res, lr.shape()),
            });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PanError::Config(format!(
                "generator alpha must lie in [0,1], got {alpha}"
            )));
        }
        let fading = alpha < 1.0;
        if fading && self.cur_res == self.start_res {
            return Err(PanError::Config(
                "alpha < 1 needs a previous resolution to fade from".into(),
            ));
        }
        let slope = leaky_slope::<E>();
        let a = E::from_f64(alpha);

        // Encoder. While a freshly grown input stage fades in, the entry
        // feature blends the old adapter on a pooled image with the new
        // block, exactly mirroring the discriminator's input fade.
        let mut skips: Vec<(usize, Tensor<E>)> = Vec::new();
        let mut r;
        let mut t = if fading && self.cur_res <= self.input_res {
            let entry = self.from_rgb(lr, in_res)?;
            let (new, kept) = self.encode(&entry, in_res)?;
            skips.push((in_res, kept));
            let old = self.from_rgb(&ops::avg_pool_2x(lr)?, in_res / 2)?;
            r = in_res / 2;
            ops::add(&ops::scale(&old, E::one() - a)?, &ops::scale(&new, a)?)?
        } else {
            r = in_res;
            self.from_rgb(lr, in_res)?
        };
        while r > 4 {
            let (down, kept) = self.encode(&t, r)?;
            skips.push((r, kept));
            t = down;
            r /= 2;
        }
        t = ops::leaky_relu(&eq_conv(&t, &self.p("g.mid4.w"), &self.p("g.mid4.b"), Stride::One)?, slope)?;

        // Decoder: stride-2 transposed conv up, optional skip concat, 3x3
        // conv, noise above the input resolution, leaky-relu.
        let mut below = t;
        let mut fade_feat: Option<Tensor<E>> = None;
        let mut r = 8;
        while r <= self.cur_res {
            if fading && r == self.cur_res {
                fade_feat = Some(below.clone());
            }
            let up = ops::leaky_relu(
                &eq_conv_up(&below, &self.p(&format!("g.dec{r}.up.w")), &self.p(&format!("g.dec{r}.up.b")))?,
                slope,
            )?;
            let merged = if self.skip_at(r) {
                let skip = skips
                    .iter()
                    .find(|(sr, _)| *sr == r)
                    .map(|(_, s)| s.clone())
                    .expect("encoder skip missing for decoder stage");
                ops::concat_channels(&up, &skip)?
            } else {
                up
            };
            let mut u = eq_conv(&merged, &self.p(&format!("g.dec{r}.c0.w")), &self.p(&format!("g.dec{r}.c0.b")), Stride::One)?;
            if r > self.input_res {
                if let Noise::Seeded(seed) = noise {
                    let scales = self.p(&format!("g.dec{r}.noise"));
                    u = ops::inject_noise(&u, &scales.get(), derive_seed(seed, &format!("noise{r}")))?;
                }
            }
            below = ops::leaky_relu(&u, slope)?;
            r *= 2;
        }

        let rgb = self.to_rgb(&below, self.cur_res)?;
        if fading {
            let old = self.to_rgb(&fade_feat.expect("fade feature tracked above"), self.cur_res / 2)?;
            ops::fade_in_output(&old, &rgb, a)
        } else {
            Ok(rgb)
        }
    }
}
