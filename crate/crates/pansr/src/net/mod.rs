//! The progressive generator / discriminator pair.
//!
//! Both networks are built from the same ingredients: 3x3 convolutions with
//! equalized learning-rate scaling, leaky ReLU (0.2), stride-2 resampling
//! convolutions, and per-resolution RGB adapters so partially grown networks
//! can produce / consume images while new blocks fade in.
//!
//! Parameters live in a name-keyed registry ([`Param`] handles with interior
//! mutability), which keeps growing, checkpointing and optimizer traversal
//! independent of the block structure. Initialization draws each layer's
//! values from a stream derived from the network seed and the layer name, so
//! a grown network is bit-identical to one built large from the start.

pub mod discriminator;
pub mod generator;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use sha2::{Digest, Sha256};

use crate::error::{PanError, Result};
use crate::tensor::{Element, Tensor};

pub use discriminator::Discriminator;
pub use generator::{Generator, Noise};

/// Channel width at resolution `res` for a network whose largest resolution
/// is `max_res`: doubles every halving of resolution starting from `ch_base`
/// at the top, capped at `ch_max`.
pub fn channels(res: usize, max_res: usize, ch_base: usize, ch_max: usize) -> usize {
    debug_assert!(res.is_power_of_two() && max_res.is_power_of_two() && res <= max_res);
    let e = max_res.trailing_zeros() - res.trailing_zeros();
    if e >= 24 {
        return ch_max;
    }
    (ch_base << e).min(ch_max)
}

/// Derive an independent 64-bit seed from a base seed and a purpose tag.
/// Used for layer init, per-call noise, data shuffling — every random draw
/// in training is a pure function of (root seed, tag), never of call order.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// A named, mutable parameter slot. Clones share the same storage, so the
/// optimizer can swap in updated tensors while the network sees the change.
#[derive(Clone)]
pub struct Param<E: Element> {
    name: String,
    value: Rc<RefCell<Tensor<E>>>,
}

impl<E: Element> Param<E> {
    pub fn new(name: &str, value: Tensor<E>) -> Self {
        value.set_requires_grad(true);
        Param { name: name.to_string(), value: Rc::new(RefCell::new(value)) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Cheap handle to the current tensor (shares storage and grad state).
    pub fn get(&self) -> Tensor<E> {
        self.value.borrow().clone()
    }

    /// Replace the tensor (optimizer step / checkpoint load). The new value
    /// keeps gradient tracking enabled.
    pub fn set(&self, value: Tensor<E>) -> Result<()> {
        if value.shape() != self.value.borrow().shape() {
            return Err(PanError::Dimension {
                op: "param_set",
                detail: format!(
                    "{}: shape {:?} cannot replace {:?}",
                    self.name,
                    value.shape(),
                    self.value.borrow().shape()
                ),
            });
        }
        value.set_requires_grad(true);
        *self.value.borrow_mut() = value;
        Ok(())
    }
}

/// Name-keyed parameter registry shared by both network kinds.
pub(crate) struct Registry<E: Element> {
    seed: u64,
    map: BTreeMap<String, Param<E>>,
}

impl<E: Element> Registry<E> {
    pub fn new(seed: u64) -> Self {
        Registry { seed, map: BTreeMap::new() }
    }

    /// Insert a normal-init weight (values from the layer's own stream).
    pub fn add_randn(&mut self, name: &str, shape: &[usize]) {
        let t = crate::tensor::randn::<E>(shape, derive_seed(self.seed, name));
        self.map.insert(name.to_string(), Param::new(name, t));
    }

    /// Insert a zero-init parameter (biases, noise scales).
    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) {
        self.map.insert(name.to_string(), Param::new(name, Tensor::zeros(shape)));
    }

    /// Lookup; missing names are an internal invariant violation.
    pub fn p(&self, name: &str) -> &Param<E> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} missing from registry"))
    }

    /// All parameters in name order (deterministic traversal).
    pub fn entries(&self) -> Vec<(String, Param<E>)> {
        self.map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// Equalized learning-rate factor: weights are stored unit-normal and scaled
/// by `sqrt(2 / fan_in)` at every use, so all layers see comparable gradient
/// magnitudes under plain per-element optimizers.
pub(crate) fn he_scale<E: Element>(fan_in: usize) -> E {
    E::from_f64((2.0 / fan_in as f64).sqrt())
}

pub(crate) fn leaky_slope<E: Element>() -> E {
    E::from_f64(0.2)
}

/// Validate a power-of-two resolution in `[4, 1024]`.
pub(crate) fn check_res(what: &str, res: usize) -> Result<()> {
    if !res.is_power_of_two() || !(4..=1024).contains(&res) {
        return Err(PanError::Config(format!(
            "{what} must be a power of two in [4, 1024], got {res}"
        )));
    }
    Ok(())
}

/// Scaled 3x3 (or 1x1) convolution + bias with equalized init.
pub(crate) fn eq_conv<E: Element>(
    x: &Tensor<E>,
    w: &Param<E>,
    b: &Param<E>,
    stride: Stride,
) -> Result<Tensor<E>> {
    let wt = w.get();
    let fan_in = wt.shape()[1] * wt.shape()[2] * wt.shape()[3];
    let ws = crate::tensor::ops::scale(&wt, he_scale::<E>(fan_in))?;
    match stride {
        Stride::One => crate::tensor::ops::conv2d(x, &ws, &b.get()),
        Stride::Down => crate::tensor::ops::conv2d_downscale(x, &ws, &b.get()),
    }
}

/// Scaled stride-2 transposed convolution + bias (weight `[Ci,Co,k,k]`).
pub(crate) fn eq_conv_up<E: Element>(x: &Tensor<E>, w: &Param<E>, b: &Param<E>) -> Result<Tensor<E>> {
    let wt = w.get();
    let fan_in = wt.shape()[0] * wt.shape()[2] * wt.shape()[3];
    let ws = crate::tensor::ops::scale(&wt, he_scale::<E>(fan_in))?;
    crate::tensor::ops::conv2d_upscale(x, &ws, &b.get())
}

pub(crate) enum Stride {
    One,
    Down,
}
