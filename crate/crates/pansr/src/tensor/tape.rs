//! The gradient tape (Wengert list) and reverse-mode `backward`.
//!
//! One tape per element type lives in thread-local storage. Opening a
//! [`GradTape`] activates recording; every differentiable op appends a node
//! while a tape is active and any input requires grad. `backward` replays the
//! recorded segment in reverse exactly once, pruning branches that cannot
//! reach a requested gradient target.
//!
//! Double backprop: `backward(..., create_graph = true)` evaluates each
//! vector-Jacobian product through the *public ops*, so the gradient
//! computation itself is appended to the same tape and can be differentiated
//! by a subsequent `backward` call. With `create_graph = false` the same VJP
//! code runs under a no-grad guard and nothing is appended.

use super::element::Element;
use super::ops;
use super::Tensor;
use crate::error::{PanError, Result};
use crate::tensor::kernels::ConvGeom;

/// Recorded operation kind. Payloads carry whatever the VJP needs beyond the
/// saved input/output tensors (a few are redundant with the saved inputs but
/// kept so `Debug` dumps of a tape are self-describing).
#[derive(Debug, Clone)]
#[allow(dead_code)]
pub(crate) enum Op<E: Element> {
    /// Gradient-target registration marker; no inputs, no VJP.
    Leaf,
    /// Cross-correlation, inputs `[x, w]`.
    Conv2d(ConvGeom),
    /// Transposed convolution (adjoint of `Conv2d` with the same geometry),
    /// inputs `[y, w]`.
    ConvT2d(ConvGeom),
    /// Weight gradient of `Conv2d`, inputs `[x, gy]`.
    ConvWgrad(ConvGeom),
    /// inputs `[x, b]`: per-channel bias broadcast over `[N,C,H,W]`.
    AddBias,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(E),
    AddScalarC(E),
    LeakyRelu(E),
    Sigmoid,
    Softplus,
    Log,
    Abs,
    SumAll,
    /// Scalar broadcast to a full shape.
    BroadcastScalar,
    /// inputs `[x, s]`: multiply channel `c` of x by `s[c]`.
    ScaleChannels,
    /// `[N,C,H,W] -> [C]` reduction.
    ChannelSum,
    /// `[C] -> [N,C,H,W]` broadcast.
    BroadcastChannels { n: usize, h: usize, w: usize },
    AvgPool2x,
    NearestUp2x,
    /// inputs `[a, b]`, concatenated along the channel axis.
    ConcatCh,
    SliceCh { from: usize, to: usize },
    PadCh { before: usize, after: usize },
    Reshape,
    /// inputs `[a (m,k), b (k,n)]`.
    MatMul,
    Transpose2d,
    /// inputs `[x (n,f), v (f)]`: add v to every row.
    AddRowVec,
    /// `[n,f] -> [f]` column sum.
    ColSum,
    BroadcastRows { n: usize },
}

impl<E: Element> Op<E> {
    #[allow(dead_code)]
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d(_) => "conv2d",
            Op::ConvT2d(_) => "conv2d_transpose",
            Op::ConvWgrad(_) => "conv2d_wgrad",
            Op::AddBias => "add_bias",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Scale(_) => "scale",
            Op::AddScalarC(_) => "add_scalar",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Sigmoid => "sigmoid",
            Op::Softplus => "softplus",
            Op::Log => "log",
            Op::Abs => "abs",
            Op::SumAll => "sum",
            Op::BroadcastScalar => "broadcast_scalar",
            Op::ScaleChannels => "scale_channels",
            Op::ChannelSum => "channel_sum",
            Op::BroadcastChannels { .. } => "broadcast_channels",
            Op::AvgPool2x => "avg_pool_2x",
            Op::NearestUp2x => "nearest_up_2x",
            Op::ConcatCh => "concat_channels",
            Op::SliceCh { .. } => "slice_channels",
            Op::PadCh { .. } => "pad_channels",
            Op::Reshape => "reshape",
            Op::MatMul => "matmul",
            Op::Transpose2d => "transpose",
            Op::AddRowVec => "add_row_vec",
            Op::ColSum => "col_sum",
            Op::BroadcastRows { .. } => "broadcast_rows",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node<E: Element> {
    pub op: Op<E>,
    pub ins: Vec<Tensor<E>>,
    pub out: Tensor<E>,
}

/// Thread-local tape state for one element type.
pub struct TapeState<E: Element> {
    /// Generation of the active tape; 0 means no tape is active.
    pub(crate) gen: u64,
    pub(crate) next_gen: u64,
    pub(crate) grad_enabled: bool,
    pub(crate) nodes: Vec<Node<E>>,
}

impl<E: Element> TapeState<E> {
    pub fn new() -> Self {
        TapeState { gen: 0, next_gen: 1, grad_enabled: true, nodes: Vec::new() }
    }
}

impl<E: Element> Default for TapeState<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// RAII guard that activates a fresh tape for element type `E` on this
/// thread. Dropping it discards the recording. Tapes do not nest: double
/// backprop records the gradient pass onto the *same* tape via
/// `create_graph`, so opening a second tape while one is active is a bug.
pub struct GradTape<E: Element> {
    gen: u64,
    _not_send: std::marker::PhantomData<*const E>,
}

impl<E: Element> GradTape<E> {
    pub fn new() -> Self {
        let gen = E::with_tape(|cell| {
            let mut st = cell.borrow_mut();
            assert_eq!(st.gen, 0, "a GradTape is already active on this thread");
            st.gen = st.next_gen;
            st.next_gen += 1;
            st.grad_enabled = true;
            st.nodes.clear();
            st.gen
        });
        GradTape { gen, _not_send: std::marker::PhantomData }
    }

    /// Number of recorded nodes so far (diagnostics / tests).
    pub fn len(&self) -> usize {
        E::with_tape(|cell| cell.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: Element> Default for GradTape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Drop for GradTape<E> {
    fn drop(&mut self) {
        E::with_tape(|cell| {
            let mut st = cell.borrow_mut();
            debug_assert_eq!(st.gen, self.gen, "tape generations out of order");
            st.gen = 0;
            st.nodes = Vec::new();
        });
    }
}

/// Run `f` with gradient recording suspended (used for inference passes and
/// for VJP evaluation when `create_graph` is false).
pub fn no_grad<E: Element, R>(f: impl FnOnce() -> R) -> R {
    let prev = E::with_tape(|cell| {
        let mut st = cell.borrow_mut();
        std::mem::replace(&mut st.grad_enabled, false)
    });
    let r = f();
    E::with_tape(|cell| cell.borrow_mut().grad_enabled = prev);
    r
}

/// Append a node if recording is live and any input requires grad; register
/// unseen gradient-target leaves on the way. Returns the (possibly
/// tape-linked) output tensor.
pub(crate) fn record<E: Element>(op: Op<E>, ins: &[&Tensor<E>], out: Tensor<E>) -> Tensor<E> {
    E::with_tape(|cell| {
        let mut st = cell.borrow_mut();
        if st.gen == 0 || !st.grad_enabled || !ins.iter().any(|t| t.requires_grad()) {
            return out;
        }
        let gen = st.gen;
        for t in ins {
            if t.requires_grad() && t.node_on(gen).is_none() {
                let id = st.nodes.len();
                t.set_node(gen, id);
                st.nodes.push(Node { op: Op::Leaf, ins: Vec::new(), out: (*t).clone() });
            }
        }
        let id = st.nodes.len();
        out.set_node(gen, id);
        out.set_requires_grad(true);
        st.nodes.push(Node { op, ins: ins.iter().map(|t| (*t).clone()).collect(), out: out.clone() });
        out
    })
}

/// Reverse-mode gradient of a rank-0 `root` with respect to each tensor in
/// `wrt`. Unreachable targets get zero gradients.
///
/// With `create_graph = true` the VJPs are recorded onto the active tape so
/// the returned gradients are themselves differentiable (double backprop).
pub fn backward<E: Element>(
    root: &Tensor<E>,
    wrt: &[&Tensor<E>],
    create_graph: bool,
) -> Result<Vec<Tensor<E>>> {
    if root.rank() != 0 {
        return Err(PanError::Rank(format!(
            "backward root must be rank 0, got shape {:?}",
            root.shape()
        )));
    }
    let (gen, n_nodes) = E::with_tape(|cell| {
        let st = cell.borrow();
        (st.gen, st.nodes.len())
    });
    if gen == 0 {
        return Err(PanError::Tape("backward called with no active tape".into()));
    }
    let root_id = root
        .node_on(gen)
        .ok_or_else(|| PanError::Tape("backward root is not on the active tape".into()))?;
    debug_assert!(root_id < n_nodes);

    // Mark nodes that can reach a gradient target, walking ids in ascending
    // order (inputs always precede consumers on the tape).
    let mut useful = vec![false; root_id + 1];
    for t in wrt {
        if let Some(id) = t.node_on(gen) {
            if id <= root_id {
                useful[id] = true;
            }
        }
    }
    E::with_tape(|cell| {
        let st = cell.borrow();
        for i in 0..=root_id {
            if !useful[i] {
                useful[i] = st.nodes[i]
                    .ins
                    .iter()
                    .any(|t| t.node_on(gen).map(|id| useful[id]).unwrap_or(false));
            }
        }
    });

    let mut grads: Vec<Option<Tensor<E>>> = vec![None; root_id + 1];
    if useful[root_id] {
        grads[root_id] = Some(Tensor::scalar(E::one()));
    }

    let run_vjp = |node: &Node<E>, upstream: &Tensor<E>, need: &[bool]| -> Result<Vec<Option<Tensor<E>>>> {
        if create_graph {
            ops::vjp(node, upstream, need)
        } else {
            no_grad::<E, _>(|| ops::vjp(node, upstream, need))
        }
    };

    for id in (0..=root_id).rev() {
        let Some(upstream) = grads[id].clone() else { continue };
        if !useful[id] {
            continue;
        }
        let node = E::with_tape(|cell| cell.borrow().nodes[id].clone());
        if matches!(node.op, Op::Leaf) {
            continue;
        }
        let need: Vec<bool> = node
            .ins
            .iter()
            .map(|t| t.node_on(gen).map(|i| i <= root_id && useful[i]).unwrap_or(false))
            .collect();
        let contribs = run_vjp(&node, &upstream, &need)?;
        grads[id] = None; // release as soon as consumed
        for (slot, contrib) in contribs.into_iter().enumerate() {
            let Some(g) = contrib else { continue };
            let iid = node.ins[slot].node_on(gen).expect("needed slot has a node");
            let merged = match grads[iid].take() {
                None => g,
                Some(prev) => {
                    if create_graph {
                        ops::add(&prev, &g)?
                    } else {
                        no_grad::<E, _>(|| ops::add(&prev, &g))?
                    }
                }
            };
            grads[iid] = Some(merged);
        }
    }

    Ok(wrt
        .iter()
        .map(|t| {
            t.node_on(gen)
                .filter(|&id| id <= root_id)
                .and_then(|id| grads[id].clone())
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect())
}
