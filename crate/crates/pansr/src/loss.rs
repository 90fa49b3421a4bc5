//! Training losses and the Adam optimizer.
//!
//! The adversarial pair is the non-saturating logistic loss with an R1
//! gradient penalty on real images, evaluated every discriminator step:
//!
//! ```text
//! L_D = mean softplus(-D(x)) + mean softplus(D(G(z))) + gamma * mean ||grad_x D(x)||^2
//! L_G = mean softplus(-D(G(z)))
//! ```
//!
//! The penalty differentiates the discriminator's input gradient, so the
//! loss value itself is produced with `create_graph = true` and the
//! discriminator's parameter gradients pick up the second-order term.

use std::collections::BTreeMap;

use crate::error::{PanError, Result};
use crate::net::Param;
use crate::tensor::tape::backward;
use crate::tensor::{ops, Element, Tensor};

/// Discriminator loss. `d_real` / `d_fake` are `[N,1]` logits that must have
/// been produced on the active tape from `real_images` / generator output,
/// and `real_images` must be gradient-tracked (the R1 term differentiates
/// through it).
///
/// The penalty is `gamma * mean_n ||grad_{x_n} D(x_n)||^2` exactly as
/// written — no implicit factor of one half.
pub fn d_loss<E: Element>(
    d_real: &Tensor<E>,
    d_fake: &Tensor<E>,
    real_images: &Tensor<E>,
    gamma: f64,
) -> Result<Tensor<E>> {
    Ok(d_loss_with_r1(d_real, d_fake, real_images, gamma)?.0)
}

/// Like [`d_loss`] but also returns the penalty term alone, which training
/// loops log as their divergence early-warning signal.
pub fn d_loss_with_r1<E: Element>(
    d_real: &Tensor<E>,
    d_fake: &Tensor<E>,
    real_images: &Tensor<E>,
    gamma: f64,
) -> Result<(Tensor<E>, Tensor<E>)> {
    check_logits("d_loss", d_real)?;
    check_logits("d_loss", d_fake)?;
    if gamma < 0.0 {
        return Err(PanError::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    let l_real = ops::mean_all(&ops::softplus(&ops::neg(d_real)?)?)?;
    let l_fake = ops::mean_all(&ops::softplus(d_fake)?)?;
    let base = ops::add(&l_real, &l_fake)?;
    if gamma == 0.0 {
        return Ok((base, Tensor::scalar(E::zero())));
    }
    let penalty = r1_penalty(d_real, real_images, gamma)?;
    Ok((ops::add(&base, &penalty)?, penalty))
}

/// The R1 term alone: `gamma * mean_n ||grad_{x_n} D(x_n)||^2`, built with
/// `create_graph` so optimizing through it reaches the second-order term.
pub fn r1_penalty<E: Element>(
    d_real: &Tensor<E>,
    real_images: &Tensor<E>,
    gamma: f64,
) -> Result<Tensor<E>> {
    check_logits("r1_penalty", d_real)?;
    // Per-sample logits depend only on their own image, so the gradient of
    // the batch sum stacks the per-sample input gradients.
    let total = ops::sum_all(d_real)?;
    let grad = backward(&total, &[real_images], true)?.remove(0);
    let n = real_images.shape()[0];
    let sq = ops::sum_all(&ops::mul(&grad, &grad)?)?;
    ops::scale(&sq, E::from_f64(gamma / n as f64))
}

/// Generator adversarial loss: `mean softplus(-D(G(z)))`.
pub fn g_loss<E: Element>(d_fake: &Tensor<E>) -> Result<Tensor<E>> {
    check_logits("g_loss", d_fake)?;
    ops::mean_all(&ops::softplus(&ops::neg(d_fake)?)?)
}

fn check_logits<E: Element>(op: &'static str, t: &Tensor<E>) -> Result<()> {
    if t.rank() != 2 || t.shape()[1] != 1 || t.shape()[0] == 0 {
        return Err(PanError::Dimension {
            op,
            detail: format!("logits must be [N,1] with N > 0, got {:?}", t.shape()),
        });
    }
    Ok(())
}

/// Pixel-space reconstruction losses for the ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelLoss {
    L1,
    L2,
}

impl PixelLoss {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(PixelLoss::L1),
            "l2" => Ok(PixelLoss::L2),
            other => Err(PanError::Config(format!("unknown pixel loss '{other}' (want l1 or l2)"))),
        }
    }
}

/// `mean |a-b|` or `mean (a-b)^2` over all elements.
pub fn pixel_loss<E: Element>(kind: PixelLoss, output: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    if output.shape() != target.shape() {
        return Err(PanError::Dimension {
            op: "pixel_loss",
            detail: format!("{:?} vs {:?}", output.shape(), target.shape()),
        });
    }
    let diff = ops::sub(output, target)?;
    match kind {
        PixelLoss::L1 => ops::mean_all(&ops::abs(&diff)?),
        PixelLoss::L2 => ops::mean_all(&ops::mul(&diff, &diff)?),
    }
}

/// Adam with bias correction. Defaults follow the adversarial training
/// setup: `beta1 = 0`, `beta2 = 0.99`, `eps = 1e-8`.
pub struct Adam<E: Element> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    slots: BTreeMap<String, (Vec<E>, Vec<E>)>,
}

impl<E: Element> Adam<E> {
    pub fn new(lr: f64) -> Self {
        Adam::with_betas(lr, 0.0, 0.99, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, slots: BTreeMap::new() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn betas(&self) -> (f64, f64) {
        (self.beta1, self.beta2)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i]` is the gradient for `params[i]`; moment
    /// slots are keyed by parameter name and created lazily at zero.
    pub fn step(&mut self, params: &[(String, Param<E>)], grads: &[Tensor<E>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(PanError::Dimension {
                op: "adam_step",
                detail: format!("{} params vs {} grads", params.len(), grads.len()),
            });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((name, param), grad) in params.iter().zip(grads) {
            let value = param.get();
            if grad.shape() != value.shape() {
                return Err(PanError::Dimension {
                    op: "adam_step",
                    detail: format!("{name}: grad {:?} vs param {:?}", grad.shape(), value.shape()),
                });
            }
            if !crate::tensor::element::all_finite(grad.data()) {
                return Err(PanError::Divergence {
                    what: format!("non-finite gradient for parameter {name}"),
                    last_checkpoint: None,
                });
            }
            let (m, v) = self
                .slots
                .entry(name.clone())
                .or_insert_with(|| (vec![E::zero(); value.len()], vec![E::zero(); value.len()]));
            let mut fresh = value.data().to_vec();
            for i in 0..fresh.len() {
                let g = grad.data()[i].to_f64();
                let mi = self.beta1 * m[i].to_f64() + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v[i].to_f64() + (1.0 - self.beta2) * g * g;
                m[i] = E::from_f64(mi);
                v[i] = E::from_f64(vi);
                let update = self.lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                fresh[i] = E::from_f64(fresh[i].to_f64() - update);
            }
            if !crate::tensor::element::all_finite(&fresh) {
                return Err(PanError::Divergence {
                    what: format!("parameter {name} became non-finite during the update"),
                    last_checkpoint: None,
                });
            }
            param.set(Tensor::new_unchecked(value.shape().to_vec(), fresh))?;
        }
        Ok(())
    }

    /// Moment slots plus step counter, for checkpointing. Names are
    /// `m.<param>` / `v.<param>`.
    pub fn state(&self) -> (u64, Vec<(String, Vec<E>)>) {
        let mut out = Vec::new();
        for (name, (m, v)) in &self.slots {
            out.push((format!("m.{name}"), m.clone()));
            out.push((format!("v.{name}"), v.clone()));
        }
        (self.step, out)
    }

    /// Restore from [`Adam::state`] output.
    pub fn load_state(&mut self, step: u64, entries: &[(String, Vec<E>)]) -> Result<()> {
        self.step = step;
        self.slots.clear();
        let mut halves: BTreeMap<String, (Option<Vec<E>>, Option<Vec<E>>)> = BTreeMap::new();
        for (key, data) in entries {
            if let Some(name) = key.strip_prefix("m.") {
                halves.entry(name.to_string()).or_default().0 = Some(data.clone());
            } else if let Some(name) = key.strip_prefix("v.") {
                halves.entry(name.to_string()).or_default().1 = Some(data.clone());
            } else {
                return Err(PanError::Data(format!("unrecognized optimizer state key '{key}'")));
            }
        }
        for (name, (m, v)) in halves {
            let (m, v) = match (m, v) {
                (Some(m), Some(v)) if m.len() == v.len() => (m, v),
                _ => {
                    return Err(PanError::Data(format!(
                        "optimizer state for '{name}' is incomplete or inconsistent"
                    )))
                }
            };
            self.slots.insert(name, (m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tape::GradTape;

    /// Independent scalar Adam reference (naive transliteration).
    fn adam_reference(grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64, x0: f64) -> f64 {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn adam_matches_scalar_reference() {
        let grads = [1.0, -0.5, 0.25, 2.0, -1.0, 0.0, 0.125];
        let mut opt = Adam::<f64>::new(0.05);
        let p = Param::new("x", Tensor::scalar(0.3));
        let params = vec![("x".to_string(), p.clone())];
        for &g in &grads {
            opt.step(&params, &[Tensor::scalar(g)]).unwrap();
        }
        let expect = adam_reference(&grads, 0.05, 0.0, 0.99, 1e-8, 0.3);
        assert!((p.get().item().unwrap() - expect).abs() < 1e-12);
        assert_eq!(opt.step_count(), grads.len() as u64);
    }

    #[test]
    fn adam_zero_grad_is_a_no_op_and_state_roundtrips() {
        let mut opt = Adam::<f32>::new(0.1);
        let p = Param::new("w", Tensor::from_vec(&[2], vec![1.0f32, -2.0]).unwrap());
        let params = vec![("w".to_string(), p.clone())];
        opt.step(&params, &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p.get().data(), &[1.0, -2.0]);

        opt.step(&params, &[Tensor::from_vec(&[2], vec![0.5f32, 0.5]).unwrap()]).unwrap();
        let (step, state) = opt.state();
        let mut opt2 = Adam::<f32>::new(0.1);
        opt2.load_state(step, &state).unwrap();
        let (s2, state2) = opt2.state();
        assert_eq!(step, s2);
        assert_eq!(state, state2);
    }

    #[test]
    fn pixel_losses_match_hand_values() {
        let a = Tensor::from_vec(&[4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[4], vec![0.0f64, 4.0, 3.0, 2.0]).unwrap();
        let l1 = pixel_loss(PixelLoss::L1, &a, &b).unwrap().item().unwrap();
        let l2 = pixel_loss(PixelLoss::L2, &a, &b).unwrap().item().unwrap();
        assert!((l1 - (1.0 + 2.0 + 0.0 + 2.0) / 4.0).abs() < 1e-12);
        assert!((l2 - (1.0 + 4.0 + 0.0 + 4.0) / 4.0).abs() < 1e-12);
        assert!(PixelLoss::parse("l1").is_ok());
        assert!(PixelLoss::parse("huber").is_err());
    }

    #[test]
    fn gan_losses_at_zero_logits_are_ln2_each_side() {
        let _tape = GradTape::<f64>::new();
        let real = Tensor::<f64>::zeros(&[4, 1]);
        let fake = Tensor::<f64>::zeros(&[4, 1]);
        let imgs = Tensor::<f64>::zeros(&[4, 3, 8, 8]);
        imgs.set_requires_grad(true);
        // gamma 0: pure logistic parts; both softplus(0) = ln 2.
        let ld = d_loss(&real, &fake, &imgs, 0.0).unwrap().item().unwrap();
        assert!((ld - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let lg = g_loss(&fake).unwrap().item().unwrap();
        assert!((lg - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn r1_penalty_matches_closed_form_on_linear_discriminator() {
        // D(x) = <w, x> has grad_x D = w for every sample, so
        // mean ||grad||^2 = ||w||^2 and d/dw of the penalty = 2 gamma w.
        let _tape = GradTape::<f64>::new();
        let n = 3;
        let w = Tensor::from_vec(&[4, 1], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        w.set_requires_grad(true);
        let x = crate::tensor::rand_uniform::<f64>(&[n, 4], -1.0, 1.0, 5);
        x.set_requires_grad(true);
        let logits = ops::matmul(&x, &w).unwrap();
        let fake = Tensor::<f64>::zeros(&[n, 1]);
        let gamma = 5.0;
        let loss = d_loss(&logits, &fake, &x, gamma).unwrap();

        let w_norm2: f64 = w.data().iter().map(|v| v * v).sum();
        // logistic parts at these logits:
        let logistic: f64 = logits.data().iter().map(|&l| (1f64 + (-l).exp()).ln()).sum::<f64>() / n as f64
            + std::f64::consts::LN_2;
        let expect = logistic + gamma * w_norm2;
        assert!((loss.item().unwrap() - expect).abs() < 1e-9);

        // Parameter gradient includes the second-order penalty term 2*gamma*w.
        let gw = backward(&loss, &[&w], false).unwrap().remove(0);
        for i in 0..4 {
            let logistic_part: f64 = (0..n)
                .map(|s| -x.data()[s * 4 + i] / (1.0 + logits.data()[s].exp()))
                .sum::<f64>()
                / n as f64;
            let expect_i = logistic_part + 2.0 * gamma * w.data()[i];
            assert!(
                (gw.data()[i] - expect_i).abs() < 1e-9,
                "grad[{i}] = {}, expected {expect_i}",
                gw.data()[i]
            );
        }
    }

    #[test]
    fn r1_on_quadratic_toy_discriminator_is_gamma_x_norm_exactly() {
        // D(x) = 0.5 ||x||^2 gives grad_x D = x, so the penalty is exactly
        // gamma * ||x||^2 / N. With x = [1, 2] and N = 1 that is 5 gamma.
        let _tape = GradTape::<f64>::new();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        x.set_requires_grad(true);
        let half_sq = ops::scale(&ops::mul(&x, &x).unwrap(), 0.5).unwrap();
        let ones = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let logits = ops::matmul(&half_sq, &ones).unwrap();
        let fake = Tensor::<f64>::zeros(&[1, 1]);
        for gamma in [5.0, 1.0, 0.25] {
            let (_, r1) = d_loss_with_r1(&logits, &fake, &x, gamma).unwrap();
            assert_eq!(r1.item().unwrap(), gamma * 5.0, "penalty must be exact");
        }
    }

    #[test]
    fn r1_is_zero_for_constant_discriminator() {
        let _tape = GradTape::<f64>::new();
        let x = crate::tensor::rand_uniform::<f64>(&[3, 4], -1.0, 1.0, 2);
        x.set_requires_grad(true);
        // The logits never read x, so grad_x D is exactly zero everywhere.
        let logits = Tensor::from_vec(&[3, 1], vec![1.5, 1.5, 1.5]).unwrap();
        logits.set_requires_grad(true);
        let (_, r1) = d_loss_with_r1(&logits, &Tensor::zeros(&[3, 1]), &x, 5.0).unwrap();
        assert_eq!(r1.item().unwrap(), 0.0);
    }

    #[test]
    fn adam_drives_a_quadratic_toward_zero() {
        let mut opt = Adam::<f64>::new(0.05);
        let p = Param::new("w", Tensor::scalar(1.0));
        let params = vec![("w".to_string(), p.clone())];
        for _ in 0..100 {
            let g = 2.0 * p.get().item().unwrap();
            opt.step(&params, &[Tensor::scalar(g)]).unwrap();
        }
        assert!(p.get().item().unwrap().abs() < 0.1);
    }

    #[test]
    fn adam_reports_divergence_with_the_parameter_name() {
        let mut opt = Adam::<f64>::new(0.05);
        let p = Param::new("g.mid4.w", Tensor::scalar(1.0));
        let params = vec![("g.mid4.w".to_string(), p.clone())];
        let err = opt.step(&params, &[Tensor::new_unchecked(vec![], vec![f64::NAN])]).unwrap_err();
        match err {
            PanError::Divergence { what, .. } => assert!(what.contains("g.mid4.w"), "{what}"),
            other => panic!("expected divergence, got {other:?}"),
        }
        // The parameter must be left untouched.
        assert_eq!(p.get().item().unwrap(), 1.0);
    }

    #[test]
    fn pixel_loss_matches_naive_loop_on_random_tensors() {
        let a = crate::tensor::rand_uniform::<f64>(&[2, 3, 5, 4], -1.0, 1.0, 31);
        let b = crate::tensor::rand_uniform::<f64>(&[2, 3, 5, 4], -1.0, 1.0, 32);
        let (mut l1, mut l2) = (0.0, 0.0);
        for (x, y) in a.data().iter().zip(b.data()) {
            l1 += (x - y).abs();
            l2 += (x - y) * (x - y);
        }
        l1 /= a.len() as f64;
        l2 /= a.len() as f64;
        assert!((pixel_loss(PixelLoss::L1, &a, &b).unwrap().item().unwrap() - l1).abs() < 1e-12);
        assert!((pixel_loss(PixelLoss::L2, &a, &b).unwrap().item().unwrap() - l2).abs() < 1e-12);
    }

    #[test]
    fn gan_losses_are_batch_permutation_invariant() {
        let _tape = GradTape::<f64>::new();
        let vals = vec![0.3, -1.2, 2.5, 0.0, -0.7];
        let mut rev = vals.clone();
        rev.reverse();
        let a = Tensor::from_vec(&[5, 1], vals).unwrap();
        let b = Tensor::from_vec(&[5, 1], rev).unwrap();
        let imgs = Tensor::<f64>::zeros(&[5, 2]);
        imgs.set_requires_grad(true);
        let la = d_loss(&a, &b, &imgs, 0.0).unwrap().item().unwrap();
        let lb = d_loss(&b, &a, &imgs, 0.0).unwrap().item().unwrap();
        assert!((la - lb).abs() < 1e-12);
        let ga = g_loss(&a).unwrap().item().unwrap();
        let gb = g_loss(&b).unwrap().item().unwrap();
        assert!((ga - gb).abs() < 1e-12);
    }

    #[test]
    fn d_loss_rejects_bad_logit_shapes() {
        let _tape = GradTape::<f64>::new();
        let bad = Tensor::<f64>::zeros(&[4]);
        let ok = Tensor::<f64>::zeros(&[4, 1]);
        let imgs = Tensor::<f64>::zeros(&[4, 3, 4, 4]);
        imgs.set_requires_grad(true);
        assert!(d_loss(&bad, &ok, &imgs, 5.0).is_err());
        assert!(g_loss(&bad).is_err());
    }
}
