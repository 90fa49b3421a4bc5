//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, contiguous, row-major buffer plus shape.
//! Cloning is cheap (reference-counted buffer). Gradient bookkeeping lives in
//! a small shared metadata cell so that every clone of a tensor observes the
//! same `requires_grad` flag and tape registration — parameters are held by
//! the network across iterations while a fresh tape is opened per step.
//!
//! Differentiable operations live in [`ops`]; the tape and `backward` live in
//! [`tape`]. Everything is generic over [`Element`] (`f32` default path,
//! `f64` verification path).

pub mod element;
pub mod kernels;
pub mod ops;
pub mod tape;

use std::cell::Cell;
use std::rc::Rc;

pub use element::Element;

use crate::error::{PanError, Result};

/// Shared gradient metadata: one per logical tensor, shared by clones.
#[derive(Debug, Default)]
pub(crate) struct Meta {
    requires_grad: Cell<bool>,
    /// Registration on the *current* tape: (tape generation, node id).
    /// Stale generations are ignored, so handles survive across tapes.
    node: Cell<Option<(u64, usize)>>,
}

/// Immutable rank-0..4 tensor. See the module docs.
#[derive(Debug, Clone)]
pub struct Tensor<E: Element> {
    data: Rc<Vec<E>>,
    shape: Vec<usize>,
    pub(crate) meta: Rc<Meta>,
}

impl<E: Element> Tensor<E> {
    /// Build from a flat row-major buffer. The element count must match the
    /// shape product (a rank-0 tensor has shape `[]` and exactly 1 element).
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(PanError::Dimension {
                op: "from_vec",
                detail: format!("shape {:?} wants {} elements, got {}", shape, n, data.len()),
            });
        }
        Ok(Self::new_unchecked(shape.to_vec(), data))
    }

    pub(crate) fn new_unchecked(shape: Vec<usize>, data: Vec<E>) -> Self {
        Tensor {
            data: Rc::new(data),
            shape,
            meta: Rc::new(Meta::default()),
        }
    }

    pub fn scalar(v: E) -> Self {
        Self::new_unchecked(vec![], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new_unchecked(shape.to_vec(), vec![E::zero(); shape.iter().product()])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::new_unchecked(shape.to_vec(), vec![E::one(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        Self::new_unchecked(shape.to_vec(), vec![v; shape.iter().product()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    /// The single value of a rank-0 tensor.
    pub fn item(&self) -> Result<E> {
        if self.rank() != 0 {
            return Err(PanError::Rank(format!(
                "item() needs a rank-0 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Mark (or unmark) this tensor as a gradient target. All clones share
    /// the flag.
    pub fn set_requires_grad(&self, yes: bool) {
        self.meta.requires_grad.set(yes);
    }

    pub fn requires_grad(&self) -> bool {
        self.meta.requires_grad.get()
    }

    /// A handle to the same buffer with fresh metadata: gradients never flow
    /// through a detached handle.
    pub fn detach(&self) -> Self {
        Tensor {
            data: Rc::clone(&self.data),
            shape: self.shape.clone(),
            meta: Rc::new(Meta::default()),
        }
    }

    /// Node id on the tape of generation `gen`, if registered there.
    pub(crate) fn node_on(&self, gen: u64) -> Option<usize> {
        match self.meta.node.get() {
            Some((g, id)) if g == gen => Some(id),
            _ => None,
        }
    }

    pub(crate) fn set_node(&self, gen: u64, id: usize) {
        self.meta.node.set(Some((gen, id)));
    }

    /// Max |a - b| over two same-shaped tensors (helper for tests/metrics).
    pub fn max_abs_diff(&self, other: &Tensor<E>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(PanError::Dimension {
                op: "max_abs_diff",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        let mut m = 0.0f64;
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            m = m.max((Element::to_f64(a) - Element::to_f64(b)).abs());
        }
        Ok(m)
    }

    /// Convert elementwise through f64 (used by the f32 <-> f64 bridges).
    pub fn cast<T: Element>(&self) -> Tensor<T> {
        Tensor::<T>::new_unchecked(
            self.shape.clone(),
            self.data.iter().map(|&v| T::from_f64(Element::to_f64(v))).collect(),
        )
    }
}

/// Standard-normal tensor from a dedicated seeded stream.
pub fn randn<E: Element>(shape: &[usize], seed: u64) -> Tensor<E> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n)
        .map(|_| {
            let v: f64 = rand_distr::StandardNormal.sample(&mut rng);
            E::from_f64(v)
        })
        .collect();
    Tensor::new_unchecked(shape.to_vec(), data)
}

/// Uniform `[lo, hi)` tensor from a dedicated seeded stream.
pub fn rand_uniform<E: Element>(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<E> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n)
        .map(|_| E::from_f64(rng.random_range(lo..hi)))
        .collect();
    Tensor::new_unchecked(shape.to_vec(), data)
}
