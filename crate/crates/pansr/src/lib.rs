//! Progressive adversarial super-resolution in pure Rust.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] — a small reverse-mode autodiff engine over dense NCHW
//!   tensors, with higher-order gradients (needed for the R1 penalty).
//! * [`net`] — the progressive generator / discriminator pair.
//! * [`loss`] — non-saturating GAN losses, the R1 gradient penalty, pixel
//!   losses and Adam.
//! * [`train`] — resolution schedules, the progressive training loop and
//!   checkpointing.
//! * [`degrade`] — the blur / downsample / noise / compression pipeline used
//!   to synthesise low-resolution inputs.
//! * [`metrics`] — PSNR, SSIM, NIQE, FID and sliced Wasserstein distance.
//! * [`dimlab`] — the distance-concentration experiment behind the
//!   "work at low resolution first" argument.
//! * [`data`] / [`config`] — PNG and dataset plumbing, run configuration
//!   and manifests.

pub mod config;
pub mod data;
pub mod degrade;
pub mod dimlab;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod tensor;
pub mod train;

pub use error::{PanError, Result};
pub use tensor::Tensor;
