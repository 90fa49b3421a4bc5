//! Mirror discriminator with progressive input growth.
//!
//! Structurally the generator's encoder run in reverse: per-resolution RGB
//! adapters feed convolution blocks that halve the resolution down to 4x4,
//! where a final convolution and a linear head produce one realism logit per
//! image. While a freshly added top block fades in, the input path blends
//! the new block's output with the previous adapter applied to a 2x box
//! downsample of the image.

use super::{channels, check_res, eq_conv, he_scale, leaky_slope, Param, Registry, Stride};
use crate::error::{PanError, Result};
use crate::tensor::{ops, Element, Tensor};

pub struct Discriminator<E: Element> {
    first_res: usize,
    max_res: usize,
    cur_res: usize,
    ch_base: usize,
    ch_max: usize,
    seed: u64,
    reg: Registry<E>,
}

impl<E: Element> Discriminator<E> {
    pub fn new(res: usize, max_res: usize, ch_base: usize, ch_max: usize, seed: u64) -> Result<Self> {
        check_res("res", res)?;
        check_res("max_res", max_res)?;
        if res > max_res {
            return Err(PanError::Config(format!("res {res} exceeds max_res {max_res}")));
        }
        if ch_base == 0 || ch_max < ch_base {
            return Err(PanError::Config(format!(
                "need 0 < ch_base <= ch_max, got {ch_base}, {ch_max}"
            )));
        }
        let mut d = Discriminator {
            first_res: res,
            max_res,
            cur_res: res,
            ch_base,
            ch_max,
            seed,
            reg: Registry::new(seed),
        };
        d.add_from_rgb(res);
        let mut r = res;
        while r > 4 {
            d.add_block(r);
            r /= 2;
        }
        d.reg.add_randn("d.mid4.w", &[d.ch(4), d.ch(4), 3, 3]);
        d.reg.add_zeros("d.mid4.b", &[d.ch(4)]);
        d.reg.add_randn("d.head.w", &[d.ch(4) * 16, 1]);
        d.reg.add_zeros("d.head.b", &[1]);
        Ok(d)
    }

    fn ch(&self, res: usize) -> usize {
        channels(res, self.max_res, self.ch_base, self.ch_max)
    }

    fn add_from_rgb(&mut self, res: usize) {
        self.reg.add_randn(&format!("d.from_rgb{res}.w"), &[self.ch(res), 3, 1, 1]);
        self.reg.add_zeros(&format!("d.from_rgb{res}.b"), &[self.ch(res)]);
    }

    fn add_block(&mut self, res: usize) {
        self.reg.add_randn(&format!("d.block{res}.c0.w"), &[self.ch(res), self.ch(res), 3, 3]);
        self.reg.add_zeros(&format!("d.block{res}.c0.b"), &[self.ch(res)]);
        self.reg.add_randn(&format!("d.block{res}.down.w"), &[self.ch(res / 2), self.ch(res), 3, 3]);
        self.reg.add_zeros(&format!("d.block{res}.down.b"), &[self.ch(res / 2)]);
    }

    /// Double the judged resolution by prepending an adapter and block.
    /// Existing parameters are untouched.
    pub fn grow(&mut self) -> Result<()> {
        let next = self.cur_res * 2;
        if next > self.max_res {
            return Err(PanError::Config(format!(
                "cannot grow beyond max_res {} (currently {})",
                self.max_res, self.cur_res
            )));
        }
        self.add_from_rgb(next);
        self.add_block(next);
        self.cur_res = next;
        Ok(())
    }

    pub fn input_res(&self) -> usize {
        self.cur_res
    }

    pub fn max_res(&self) -> usize {
        self.max_res
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hyperparams(&self) -> (usize, usize) {
        (self.ch_base, self.ch_max)
    }

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
                &self.p(&format!("d.from_rgb{res}.w")),
                &self.p(&format!("d.from_rgb{res}.b")),
                Stride::One,
            )?,
            leaky_slope::<E>(),
        )
    }

    fn block(&self, t: &Tensor<E>, res: usize) -> Result<Tensor<E>> {
        let slope = leaky_slope::<E>();
        let t = ops::leaky_relu(
            &eq_conv(t, &self.p(&format!("d.block{res}.c0.w")), &self.p(&format!("d.block{res}.c0.b")), Stride::One)?,
            slope,
        )?;
        ops::leaky_relu(
            &eq_conv(&t, &self.p(&format!("d.block{res}.down.w")), &self.p(&format!("d.block{res}.down.b")), Stride::Down)?,
            slope,
        )
    }

    /// One realism logit per image, shape `[N, 1]`. `alpha` fades the newest
    /// block in after a grow (1.0 = fully grown path).
    pub fn forward(&self, img: &Tensor<E>, alpha: f64) -> Result<Tensor<E>> {
        if img.shape().len() != 4 || img.shape()[1] != 3 || img.shape()[2] != self.cur_res || img.shape()[3] != self.cur_res {
            return Err(PanError::Dimension {
                op: "discriminator",
                detail: format!("expected [N,3,{0},{0}], got {1:?}", self.cur_res, img.shape()),
            });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PanError::Domain {
                op: "discriminator",
                detail: format!("alpha must lie in [0,1], got {alpha}"),
            });
        }
        let fading = alpha < 1.0;
        if fading && self.cur_res == self.first_res {
            return Err(PanError::Domain {
                op: "discriminator",
                detail: "alpha < 1 needs a previous resolution to fade from".into(),
            });
        }

        let mut r = self.cur_res;
        let mut t = if fading {
            let new = self.block(&self.from_rgb(img, r)?, r)?;
            let old = self.from_rgb(&ops::avg_pool_2x(img)?, r / 2)?;
            let a = E::from_f64(alpha);
            r /= 2;
            ops::add(&ops::scale(&old, E::one() - a)?, &ops::scale(&new, a)?)?
        } else {
            let t = self.from_rgb(img, r)?;
            if r > 4 {
                let t = self.block(&t, r)?;
                r /= 2;
                t
            } else {
                t
            }
        };
        while r > 4 {
            t = self.block(&t, r)?;
            r /= 2;
        }
        let t = ops::leaky_relu(&eq_conv(&t, &self.p("d.mid4.w"), &self.p("d.mid4.b"), Stride::One)?, leaky_slope::<E>())?;
        let n = t.shape()[0];
        let flat = ops::reshape(&t, &[n, self.ch(4) * 16])?;
        let w = self.p("d.head.w");
        let ws = ops::scale(&w.get(), he_scale::<E>(self.ch(4) * 16))?;
        ops::add_row_vec(&ops::matmul(&flat, &ws)?, &self.p("d.head.b").get())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Discriminator<f32> {
        Discriminator::new(8, 64, 8, 32, 17).unwrap()
    }

    #[test]
    fn logit_shape_and_determinism() {
        let d = small();
        let img = crate::tensor::rand_uniform::<f32>(&[3, 3, 8, 8], -1.0, 1.0, 1);
        let a = d.forward(&img, 1.0).unwrap();
        let b = d.forward(&img, 1.0).unwrap();
        assert_eq!(a.shape(), &[3, 1]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn grow_preserves_parameters_and_fade_matches_pooled_path() {
        let mut d = small();
        let before: Vec<(String, Vec<f32>)> = d
            .params()
            .iter()
            .map(|(n, p)| (n.clone(), p.get().data().to_vec()))
            .collect();
        let img16 = crate::tensor::rand_uniform::<f32>(&[2, 3, 16, 16], -1.0, 1.0, 2);
        let pooled = ops::avg_pool_2x(&img16).unwrap();
        let old_logits = d.forward(&pooled, 1.0).unwrap();
        d.grow().unwrap();
        assert_eq!(d.input_res(), 16);
        for (name, old) in &before {
            let now = d.params().into_iter().find(|(n, _)| n == name).unwrap().1;
            assert_eq!(now.get().data(), &old[..], "{name} changed across grow");
        }
        let faded = d.forward(&img16, 0.0).unwrap();
        assert!(faded.max_abs_diff(&old_logits).unwrap() < 1e-6);
        let full = d.forward(&img16, 1.0).unwrap();
        assert_eq!(full.shape(), &[2, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = small();
        let img = crate::tensor::rand_uniform::<f32>(&[1, 3, 16, 16], -1.0, 1.0, 3);
        assert!(matches!(d.forward(&img, 1.0), Err(PanError::Dimension { .. })));
        let ok = crate::tensor::rand_uniform::<f32>(&[1, 3, 8, 8], -1.0, 1.0, 4);
        assert!(matches!(d.forward(&ok, 0.3), Err(PanError::Domain { .. })));
    }
}
