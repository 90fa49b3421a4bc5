//! Differentiable tensor operations.
//!
//! Each op validates shapes, computes eagerly through [`kernels`], scans the
//! result for non-finite values (raising immediately with the op name), and
//! records a tape node when gradients are live. Vector-Jacobian products are
//! themselves built from these public ops, which is what makes higher-order
//! differentiation (`backward(..., create_graph = true)`) work.

use super::element::{all_finite, Element};
use super::kernels::{self, ConvGeom};
use super::tape::{record, Node, Op};
use super::Tensor;
use crate::error::{PanError, Result};

// ---------------------------------------------------------------------------
// helpers

fn finite<E: Element>(op: &'static str, data: &[E]) -> Result<()> {
    if all_finite(data) {
        Ok(())
    } else {
        Err(PanError::NonFinite { op })
    }
}

fn dim_err<E: Element>(op: &'static str, detail: String) -> Result<Tensor<E>> {
    Err(PanError::Dimension { op, detail })
}

/// Deterministic higher-precision sum: accumulate through f64 with eight
/// lanes so the loop vectorizes without reassociating element order.
fn sum_f64<E: Element>(data: &[E]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = data.chunks_exact(8);
    let rem = chunks.remainder();
    for ch in chunks {
        for i in 0..8 {
            acc[i] += ch[i].to_f64();
        }
    }
    let mut t = 0.0;
    for a in acc {
        t += a;
    }
    for &x in rem {
        t += x.to_f64();
    }
    t
}

fn nchw<E: Element>(op: &'static str, t: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(PanError::Dimension {
            op,
            detail: format!("expected [N,C,H,W], got {:?}", s),
        });
    }
    Ok((s[0], s[1], s[2], s[3]))
}

// ---------------------------------------------------------------------------
// convolution primitives

fn check_conv_inputs<E: Element>(
    op: &'static str,
    x_shape: &[usize],
    w: &Tensor<E>,
    expect_ci: usize,
) -> Result<(usize, usize, usize)> {
    let ws = w.shape();
    if ws.len() != 4 {
        return Err(PanError::Dimension { op, detail: format!("weight must be rank 4, got {:?}", ws) });
    }
    if ws[1] != expect_ci {
        return Err(PanError::Dimension {
            op,
            detail: format!("weight in-channels {} do not match input channels {} (input {:?}, weight {:?})", ws[1], expect_ci, x_shape, ws),
        });
    }
    Ok((ws[0], ws[2], ws[3]))
}

/// Internal general cross-correlation (no bias). Used by the public stride-2
/// ops, the stride-1 block convs, and every conv VJP.
pub(crate) fn conv_raw<E: Element>(x: &Tensor<E>, w: &Tensor<E>, g: ConvGeom) -> Result<Tensor<E>> {
    let (n, ci, h, wd) = nchw("conv2d", x)?;
    if (n, ci, h, wd) != (g.n, g.ci, g.h, g.w) {
        return dim_err("conv2d", format!("input {:?} does not match geometry {:?}", x.shape(), g));
    }
    let (co, kh, kw) = check_conv_inputs("conv2d", x.shape(), w, ci)?;
    if (co, kh, kw) != (g.co, g.kh, g.kw) {
        return dim_err("conv2d", format!("weight {:?} does not match geometry {:?}", w.shape(), g));
    }
    let data = kernels::conv2d_forward(x.data(), w.data(), &g);
    finite("conv2d", &data)?;
    let out = Tensor::new_unchecked(vec![g.n, g.co, g.ho, g.wo], data);
    Ok(record(Op::Conv2d(g), &[x, w], out))
}

/// Internal transposed convolution: exact adjoint of [`conv_raw`] with the
/// same `g` and weight. Maps `[N, co, ho, wo]` to `[N, ci, h, w]`.
pub(crate) fn convt_raw<E: Element>(y: &Tensor<E>, w: &Tensor<E>, g: ConvGeom) -> Result<Tensor<E>> {
    let (n, co, ho, wo) = nchw("conv2d_transpose", y)?;
    if (n, co, ho, wo) != (g.n, g.co, g.ho, g.wo) {
        return dim_err("conv2d_transpose", format!("input {:?} does not match geometry {:?}", y.shape(), g));
    }
    let ws = w.shape();
    if ws != [g.co, g.ci, g.kh, g.kw] {
        return dim_err("conv2d_transpose", format!("weight {:?} does not match geometry {:?}", ws, g));
    }
    let data = kernels::conv2d_transpose_forward(y.data(), w.data(), &g);
    finite("conv2d_transpose", &data)?;
    let out = Tensor::new_unchecked(vec![g.n, g.ci, g.h, g.w], data);
    Ok(record(Op::ConvT2d(g), &[y, w], out))
}

/// Internal conv weight gradient: `[N,ci,h,w] x [N,co,ho,wo] -> [co,ci,kh,kw]`.
pub(crate) fn wgrad_raw<E: Element>(x: &Tensor<E>, gy: &Tensor<E>, g: ConvGeom) -> Result<Tensor<E>> {
    let xs = x.shape();
    let gs = gy.shape();
    if xs != [g.n, g.ci, g.h, g.w] || gs != [g.n, g.co, g.ho, g.wo] {
        return dim_err("conv2d_wgrad", format!("inputs {:?}, {:?} do not match geometry {:?}", xs, gs, g));
    }
    let data = kernels::conv2d_wgrad(x.data(), gy.data(), &g);
    finite("conv2d_wgrad", &data)?;
    let out = Tensor::new_unchecked(vec![g.co, g.ci, g.kh, g.kw], data);
    Ok(record(Op::ConvWgrad(g), &[x, gy], out))
}

/// Stride-1 same-padded convolution plus bias (the workhorse inside blocks).
/// Kernel must be odd so the padding `(k-1)/2` keeps the extent.
pub fn conv2d<E: Element>(x: &Tensor<E>, w: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, ci, h, wd) = nchw("conv2d", x)?;
    let (co, kh, kw) = check_conv_inputs("conv2d", x.shape(), w, ci)?;
    if kh != kw || kh % 2 == 0 {
        return Err(PanError::Geometry { op: "conv2d", detail: format!("kernel must be square and odd, got {kh}x{kw}") });
    }
    let pad = (kh - 1) / 2;
    let g = ConvGeom { n, ci, h, w: wd, co, kh, kw, stride: 1, pad, ho: h, wo: wd };
    let y = conv_raw(x, w, g)?;
    add_bias(&y, b)
}

/// Stride-2 downscaling convolution plus bias: `[N,Ci,H,W] -> [N,Co,H/2,W/2]`.
/// H and W must be even; the kernel odd (default 3) with padding `(k-1)/2`.
pub fn conv2d_downscale<E: Element>(x: &Tensor<E>, w: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, ci, h, wd) = nchw("conv2d_downscale", x)?;
    if h % 2 != 0 || wd % 2 != 0 {
        return Err(PanError::Geometry {
            op: "conv2d_downscale",
            detail: format!("spatial extent must be even, got {h}x{wd}"),
        });
    }
    let (co, kh, kw) = check_conv_inputs("conv2d_downscale", x.shape(), w, ci)?;
    if kh != kw || kh % 2 == 0 {
        return Err(PanError::Geometry {
            op: "conv2d_downscale",
            detail: format!("kernel must be square and odd, got {kh}x{kw}"),
        });
    }
    let pad = (kh - 1) / 2;
    let ho = ConvGeom::out_extent(h, kh, 2, pad).ok_or(PanError::Geometry {
        op: "conv2d_downscale",
        detail: format!("kernel {kh} too large for input {h}x{wd}"),
    })?;
    let wo = ConvGeom::out_extent(wd, kw, 2, pad).unwrap();
    debug_assert_eq!((ho, wo), (h / 2, wd / 2));
    let g = ConvGeom { n, ci, h, w: wd, co, kh, kw, stride: 2, pad, ho, wo };
    let y = conv_raw(x, w, g)?;
    add_bias(&y, b)
}

/// Stride-2 transposed convolution plus bias: `[N,Ci,H,W] -> [N,Co,2H,2W]`.
/// Weight layout is `[Ci, Co, k, k]`; any square kernel with k >= 2 works,
/// padded by `(k-1)/2` (integer division), which makes the output exactly
/// double for either parity.
///
/// For zero bias this is the exact adjoint of the matching stride-2
/// convolution: `<conv2d_downscale(a; w), b> == <a, conv2d_upscale(b; w')>`
/// where `w'` is the same buffer read in `[Ci,Co,k,k]` order.
pub fn conv2d_upscale<E: Element>(x: &Tensor<E>, w: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, ci, h, wd) = nchw("conv2d_upscale", x)?;
    let ws = w.shape();
    if ws.len() != 4 || ws[0] != ci {
        return dim_err("conv2d_upscale", format!("weight must be [Ci,Co,k,k] with Ci={ci}, got {:?}", ws));
    }
    let (co, kh, kw) = (ws[1], ws[2], ws[3]);
    if kh != kw || kh < 2 {
        return Err(PanError::Geometry {
            op: "conv2d_upscale",
            detail: format!("kernel must be square with k >= 2, got {kh}x{kw}"),
        });
    }
    // (k-1)/2 rounds to (k-2)/2 for even k; either parity lands on exactly 2H.
    let pad = (kh - 1) / 2;
    // Geometry of the conv being transposed: [N, co..? ] — the forward conv
    // maps [N, up_out, 2H, 2W] -> [N, up_in, H, W], so ci/co swap roles here.
    let g = ConvGeom { n, ci: co, h: 2 * h, w: 2 * wd, co: ci, kh, kw, stride: 2, pad, ho: h, wo: wd };
    let y = convt_raw(x, w, g)?;
    add_bias(&y, b)
}

/// Per-channel bias broadcast over `[N,C,H,W]`.
pub fn add_bias<E: Element>(x: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("add_bias", x)?;
    if b.shape() != [c] {
        return dim_err("add_bias", format!("bias {:?} does not match channels {c}", b.shape()));
    }
    let mut data = x.data().to_vec();
    let plane = h * w;
    for ni in 0..n {
        for ci in 0..c {
            let bv = b.data()[ci];
            for v in &mut data[(ni * c + ci) * plane..(ni * c + ci + 1) * plane] {
                *v += bv;
            }
        }
    }
    finite("add_bias", &data)?;
    let out = Tensor::new_unchecked(x.shape().to_vec(), data);
    Ok(record(Op::AddBias, &[x, b], out))
}

// ---------------------------------------------------------------------------
// elementwise

/// Shapes must match exactly, or one operand may be rank 0 (scalar).
fn binary_shape<E: Element>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<Vec<usize>> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if a.rank() == 0 {
        Ok(b.shape().to_vec())
    } else if b.rank() == 0 {
        Ok(a.shape().to_vec())
    } else {
        Err(PanError::Dimension {
            op,
            detail: format!("shapes {:?} and {:?} must match (or one be scalar)", a.shape(), b.shape()),
        })
    }
}

fn binary<E: Element>(
    op: Op<E>,
    name: &'static str,
    a: &Tensor<E>,
    b: &Tensor<E>,
    f: impl Fn(E, E) -> E,
) -> Result<Tensor<E>> {
    let shape = binary_shape(name, a, b)?;
    let data: Vec<E> = if a.shape() == b.shape() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else if a.rank() == 0 {
        let av = a.data()[0];
        b.data().iter().map(|&y| f(av, y)).collect()
    } else {
        let bv = b.data()[0];
        a.data().iter().map(|&x| f(x, bv)).collect()
    };
    finite(name, &data)?;
    let out = Tensor::new_unchecked(shape, data);
    Ok(record(op, &[a, b], out))
}

pub fn add<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    binary(Op::Add, "add", a, b, |x, y| x + y)
}

pub fn sub<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    binary(Op::Sub, "sub", a, b, |x, y| x - y)
}

pub fn mul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    binary(Op::Mul, "mul", a, b, |x, y| x * y)
}

pub fn div<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    binary(Op::Div, "div", a, b, |x, y| x / y)
}

fn unary<E: Element>(
    op: Op<E>,
    name: &'static str,
    x: &Tensor<E>,
    f: impl Fn(E) -> E,
) -> Result<Tensor<E>> {
    let data: Vec<E> = x.data().iter().map(|&v| f(v)).collect();
    finite(name, &data)?;
    let out = Tensor::new_unchecked(x.shape().to_vec(), data);
    Ok(record(op, &[x], out))
}

pub fn neg<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    unary(Op::Neg, "neg", x, |v| -v)
}

pub fn scale<E: Element>(x: &Tensor<E>, c: E) -> Result<Tensor<E>> {
    unary(Op::Scale(c), "scale", x, |v| v * c)
}

pub fn add_scalar<E: Element>(x: &Tensor<E>, c: E) -> Result<Tensor<E>> {
    unary(Op::AddScalarC(c), "add_scalar", x, |v| v + c)
}

/// `max(x, 0) + slope * min(x, 0)`; the network uses slope 0.2 throughout.
pub fn leaky_relu<E: Element>(x: &Tensor<E>, slope: E) -> Result<Tensor<E>> {
    unary(Op::LeakyRelu(slope), "leaky_relu", x, |v| {
        if v >= E::zero() { v } else { v * slope }
    })
}

pub fn sigmoid<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    unary(Op::Sigmoid, "sigmoid", x, |v| {
        // Branch keeps exp bounded for both signs.
        if v >= E::zero() {
            E::one() / (E::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (E::one() + e)
        }
    })
}

/// `ln(1 + exp(x))`, evaluated stably; `-ln(sigmoid(x)) == softplus(-x)`.
pub fn softplus<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    unary(Op::Softplus, "softplus", x, |v| {
        let m = if v > E::zero() { v } else { E::zero() };
        m + (-(v.abs())).exp().ln_1p()
    })
}

/// Natural log. Inputs must be strictly positive (domain error otherwise).
pub fn log<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if let Some(v) = x.data().iter().find(|v| **v <= E::zero()) {
        return Err(PanError::Domain {
            op: "log",
            detail: format!("log requires strictly positive input, found {v}"),
        });
    }
    unary(Op::Log, "log", x, |v| v.ln())
}

pub fn abs<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    unary(Op::Abs, "abs", x, |v| v.abs())
}

// ---------------------------------------------------------------------------
// reductions / broadcasts

pub fn sum_all<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let s = E::from_f64(sum_f64(x.data()));
    finite("sum", std::slice::from_ref(&s))?;
    let out = Tensor::new_unchecked(vec![], vec![s]);
    Ok(record(Op::SumAll, &[x], out))
}

pub fn mean_all<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if x.is_empty() {
        return Err(PanError::Domain { op: "mean", detail: "mean of empty tensor".into() });
    }
    let s = sum_all(x)?;
    scale(&s, E::from_f64(1.0 / x.len() as f64))
}

/// Broadcast a rank-0 tensor to a full shape.
pub fn broadcast_scalar<E: Element>(s: &Tensor<E>, shape: &[usize]) -> Result<Tensor<E>> {
    if s.rank() != 0 {
        return Err(PanError::Rank(format!("broadcast_scalar wants rank 0, got {:?}", s.shape())));
    }
    let out = Tensor::full(shape, s.data()[0]);
    Ok(record(Op::BroadcastScalar, &[s], out))
}

/// Multiply channel `c` of `[N,C,H,W]` by `s[c]`.
pub fn scale_channels<E: Element>(x: &Tensor<E>, s: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("scale_channels", x)?;
    if s.shape() != [c] {
        return dim_err("scale_channels", format!("scales {:?} vs channels {c}", s.shape()));
    }
    let plane = h * w;
    let mut data = x.data().to_vec();
    for ni in 0..n {
        for ci in 0..c {
            let sv = s.data()[ci];
            for v in &mut data[(ni * c + ci) * plane..(ni * c + ci + 1) * plane] {
                *v *= sv;
            }
        }
    }
    finite("scale_channels", &data)?;
    let out = Tensor::new_unchecked(x.shape().to_vec(), data);
    Ok(record(Op::ScaleChannels, &[x, s], out))
}

/// `[N,C,H,W] -> [C]`: sum over batch and spatial dims.
pub fn channel_sum<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("channel_sum", x)?;
    let plane = h * w;
    let mut data = vec![E::zero(); c];
    for ci in 0..c {
        let mut acc = 0.0f64;
        for ni in 0..n {
            acc += sum_f64(&x.data()[(ni * c + ci) * plane..(ni * c + ci + 1) * plane]);
        }
        data[ci] = E::from_f64(acc);
    }
    finite("channel_sum", &data)?;
    let out = Tensor::new_unchecked(vec![c], data);
    Ok(record(Op::ChannelSum, &[x], out))
}

/// `[C] -> [N,C,H,W]` broadcast.
pub fn broadcast_channels<E: Element>(s: &Tensor<E>, n: usize, h: usize, w: usize) -> Result<Tensor<E>> {
    if s.rank() != 1 {
        return Err(PanError::Rank(format!("broadcast_channels wants rank 1, got {:?}", s.shape())));
    }
    let c = s.shape()[0];
    let plane = h * w;
    let mut data = vec![E::zero(); n * c * plane];
    for ni in 0..n {
        for ci in 0..c {
            data[(ni * c + ci) * plane..(ni * c + ci + 1) * plane].fill(s.data()[ci]);
        }
    }
    let out = Tensor::new_unchecked(vec![n, c, h, w], data);
    Ok(record(Op::BroadcastChannels { n, h, w }, &[s], out))
}

// ---------------------------------------------------------------------------
// resizing / structure

/// 2x box downsample: each output pixel is the mean of its 2x2 block.
pub fn avg_pool_2x<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("avg_pool_2x", x)?;
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(PanError::Geometry {
            op: "avg_pool_2x",
            detail: format!("spatial extent must be even, got {h}x{w}"),
        });
    }
    let data = kernels::avg_pool_2x(x.data(), n, c, h, w);
    let out = Tensor::new_unchecked(vec![n, c, h / 2, w / 2], data);
    Ok(record(Op::AvgPool2x, &[x], out))
}

/// 2x nearest-neighbour upsample.
pub fn nearest_up_2x<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("nearest_up_2x", x)?;
    let data = kernels::nearest_up_2x(x.data(), n, c, h, w);
    let out = Tensor::new_unchecked(vec![n, c, 2 * h, 2 * w], data);
    Ok(record(Op::NearestUp2x, &[x], out))
}

/// Concatenate two `[N,*,H,W]` tensors along channels.
pub fn concat_channels<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (na, ca, ha, wa) = nchw("concat_channels", a)?;
    let (nb, cb, hb, wb) = nchw("concat_channels", b)?;
    if (na, ha, wa) != (nb, hb, wb) {
        return dim_err(
            "concat_channels",
            format!("batch/spatial mismatch: {:?} vs {:?}", a.shape(), b.shape()),
        );
    }
    let plane = ha * wa;
    let mut data = vec![E::zero(); na * (ca + cb) * plane];
    for ni in 0..na {
        let dst = &mut data[ni * (ca + cb) * plane..(ni + 1) * (ca + cb) * plane];
        dst[..ca * plane].copy_from_slice(&a.data()[ni * ca * plane..(ni + 1) * ca * plane]);
        dst[ca * plane..].copy_from_slice(&b.data()[ni * cb * plane..(ni + 1) * cb * plane]);
    }
    let out = Tensor::new_unchecked(vec![na, ca + cb, ha, wa], data);
    Ok(record(Op::ConcatCh, &[a, b], out))
}

/// Channel slice `[from, to)` of `[N,C,H,W]`.
pub fn slice_channels<E: Element>(x: &Tensor<E>, from: usize, to: usize) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("slice_channels", x)?;
    if from >= to || to > c {
        return dim_err("slice_channels", format!("range {from}..{to} out of 0..{c}"));
    }
    let plane = h * w;
    let cs = to - from;
    let mut data = vec![E::zero(); n * cs * plane];
    for ni in 0..n {
        data[ni * cs * plane..(ni + 1) * cs * plane]
            .copy_from_slice(&x.data()[(ni * c + from) * plane..(ni * c + to) * plane]);
    }
    let out = Tensor::new_unchecked(vec![n, cs, h, w], data);
    Ok(record(Op::SliceCh { from, to }, &[x], out))
}

/// Zero-pad channels: `before` zero channels in front, `after` behind.
pub fn pad_channels<E: Element>(x: &Tensor<E>, before: usize, after: usize) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("pad_channels", x)?;
    let plane = h * w;
    let cf = before + c + after;
    let mut data = vec![E::zero(); n * cf * plane];
    for ni in 0..n {
        data[(ni * cf + before) * plane..(ni * cf + before + c) * plane]
            .copy_from_slice(&x.data()[ni * c * plane..(ni + 1) * c * plane]);
    }
    let out = Tensor::new_unchecked(vec![n, cf, h, w], data);
    Ok(record(Op::PadCh { before, after }, &[x], out))
}

pub fn reshape<E: Element>(x: &Tensor<E>, shape: &[usize]) -> Result<Tensor<E>> {
    let n: usize = shape.iter().product();
    if n != x.len() {
        return dim_err("reshape", format!("{:?} ({} elems) -> {:?} ({} elems)", x.shape(), x.len(), shape, n));
    }
    let out = Tensor::new_unchecked(shape.to_vec(), x.data().to_vec());
    Ok(record(Op::Reshape, &[x], out))
}

// ---------------------------------------------------------------------------
// dense (discriminator head)

pub fn matmul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return dim_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape()));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut data = vec![E::zero(); m * n];
    kernels::gemm_nn(m, k, n, a.data(), b.data(), E::zero(), &mut data);
    finite("matmul", &data)?;
    let out = Tensor::new_unchecked(vec![m, n], data);
    Ok(record(Op::MatMul, &[a, b], out))
}

pub fn transpose2d<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() != 2 {
        return Err(PanError::Rank(format!("transpose wants rank 2, got {:?}", x.shape())));
    }
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let mut data = vec![E::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = x.data()[i * n + j];
        }
    }
    let out = Tensor::new_unchecked(vec![n, m], data);
    Ok(record(Op::Transpose2d, &[x], out))
}

/// `[N,F] + [F]` broadcast over rows.
pub fn add_row_vec<E: Element>(x: &Tensor<E>, v: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() != 2 || v.rank() != 1 || x.shape()[1] != v.shape()[0] {
        return dim_err("add_row_vec", format!("{:?} + {:?}", x.shape(), v.shape()));
    }
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let mut data = x.data().to_vec();
    for r in 0..n {
        for c in 0..f {
            data[r * f + c] += v.data()[c];
        }
    }
    finite("add_row_vec", &data)?;
    let out = Tensor::new_unchecked(vec![n, f], data);
    Ok(record(Op::AddRowVec, &[x, v], out))
}

/// `[N,F] -> [F]` column sums.
pub fn col_sum<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() != 2 {
        return Err(PanError::Rank(format!("col_sum wants rank 2, got {:?}", x.shape())));
    }
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let mut acc = vec![0.0f64; f];
    for r in 0..n {
        for c in 0..f {
            acc[c] += x.data()[r * f + c].to_f64();
        }
    }
    let data: Vec<E> = acc.into_iter().map(E::from_f64).collect();
    finite("col_sum", &data)?;
    let out = Tensor::new_unchecked(vec![f], data);
    Ok(record(Op::ColSum, &[x], out))
}

/// `[F] -> [N,F]` broadcast.
pub fn broadcast_rows<E: Element>(v: &Tensor<E>, n: usize) -> Result<Tensor<E>> {
    if v.rank() != 1 {
        return Err(PanError::Rank(format!("broadcast_rows wants rank 1, got {:?}", v.shape())));
    }
    let f = v.shape()[0];
    let mut data = vec![E::zero(); n * f];
    for r in 0..n {
        data[r * f..(r + 1) * f].copy_from_slice(v.data());
    }
    let out = Tensor::new_unchecked(vec![n, f], data);
    Ok(record(Op::BroadcastRows { n }, &[v], out))
}

// ---------------------------------------------------------------------------
// composites used by the network

/// Additive per-channel noise: `y = x + scales[c] * eps`, with a single
/// noise plane `eps ~ N(0,1)` of shape `[N,1,H,W]` drawn from `seed` and
/// shared across channels. With `scales == [1]` and one channel the output
/// minus the input reproduces the noise plane exactly.
pub fn inject_noise<E: Element>(x: &Tensor<E>, scales: &Tensor<E>, seed: u64) -> Result<Tensor<E>> {
    let (n, c, h, w) = nchw("inject_noise", x)?;
    if scales.shape() != [c] {
        return dim_err("inject_noise", format!("scales {:?} vs channels {c}", scales.shape()));
    }
    let plane = super::randn::<E>(&[n, 1, h, w], seed);
    // Repeat the plane across channels as a constant (noise is not a
    // gradient path; the scales are).
    let mut rep = vec![E::zero(); n * c * h * w];
    for ni in 0..n {
        for ci in 0..c {
            rep[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w]
                .copy_from_slice(&plane.data()[ni * h * w..(ni + 1) * h * w]);
        }
    }
    let rep = Tensor::new_unchecked(vec![n, c, h, w], rep);
    let scaled = scale_channels(&rep, scales)?;
    add(x, &scaled)
}

/// Progressive-growing output blend: `(1 - alpha) * nearest_up(old) + alpha * new`.
/// `old` is the previous-resolution RGB, `new` the doubled-resolution RGB.
pub fn fade_in_output<E: Element>(old: &Tensor<E>, new: &Tensor<E>, alpha: E) -> Result<Tensor<E>> {
    if alpha < E::zero() || alpha > E::one() {
        return Err(PanError::Domain {
            op: "fade_in_output",
            detail: format!("alpha must lie in [0,1], got {alpha}"),
        });
    }
    let (n, c, h, w) = nchw("fade_in_output", old)?;
    if new.shape() != [n, c, 2 * h, 2 * w] {
        return dim_err(
            "fade_in_output",
            format!("new {:?} must be the 2x of old {:?}", new.shape(), old.shape()),
        );
    }
    let up = nearest_up_2x(old)?;
    let a = scale(&up, E::one() - alpha)?;
    let b = scale(new, alpha)?;
    add(&a, &b)
}

// ---------------------------------------------------------------------------
// vector-Jacobian products

/// Constant (non-differentiable) tensor derived from saved data.
fn constant<E: Element>(shape: &[usize], data: Vec<E>) -> Tensor<E> {
    Tensor::new_unchecked(shape.to_vec(), data)
}

/// Reduce a gradient to a scalar if the forward operand was rank 0 while the
/// output was not (scalar-broadcast binary ops).
fn reduce_if_scalar<E: Element>(g: Tensor<E>, operand: &Tensor<E>) -> Result<Tensor<E>> {
    if operand.rank() == 0 && g.rank() != 0 {
        sum_all(&g)
    } else {
        Ok(g)
    }
}

/// Compute the VJP contributions of `node` given `upstream` (the gradient of
/// the root with respect to the node output). `need[i]` gates input slot `i`;
/// un-needed slots return `None` and skip their work entirely.
pub(crate) fn vjp<E: Element>(
    node: &Node<E>,
    upstream: &Tensor<E>,
    need: &[bool],
) -> Result<Vec<Option<Tensor<E>>>> {
    let ins = &node.ins;
    let u = upstream;
    let want = |i: usize| need.get(i).copied().unwrap_or(false);
    Ok(match &node.op {
        Op::Leaf => vec![],
        Op::Conv2d(g) => vec![
            if want(0) { Some(convt_raw(u, &ins[1], *g)?) } else { None },
            if want(1) { Some(wgrad_raw(&ins[0], u, *g)?) } else { None },
        ],
        Op::ConvT2d(g) => vec![
            if want(0) { Some(conv_raw(u, &ins[1], *g)?) } else { None },
            if want(1) { Some(wgrad_raw(u, &ins[0], *g)?) } else { None },
        ],
        Op::ConvWgrad(g) => vec![
            if want(0) { Some(convt_raw(&ins[1], u, *g)?) } else { None },
            if want(1) { Some(conv_raw(&ins[0], u, *g)?) } else { None },
        ],
        Op::AddBias => vec![
            if want(0) { Some(u.clone()) } else { None },
            if want(1) { Some(channel_sum(u)?) } else { None },
        ],
        Op::Add => vec![
            if want(0) { Some(reduce_if_scalar(u.clone(), &ins[0])?) } else { None },
            if want(1) { Some(reduce_if_scalar(u.clone(), &ins[1])?) } else { None },
        ],
        Op::Sub => vec![
            if want(0) { Some(reduce_if_scalar(u.clone(), &ins[0])?) } else { None },
            if want(1) { Some(reduce_if_scalar(neg(u)?, &ins[1])?) } else { None },
        ],
        Op::Mul => vec![
            if want(0) { Some(reduce_if_scalar(mul(u, &ins[1])?, &ins[0])?) } else { None },
            if want(1) { Some(reduce_if_scalar(mul(u, &ins[0])?, &ins[1])?) } else { None },
        ],
        Op::Div => {
            let a = &ins[0];
            let b = &ins[1];
            vec![
                if want(0) { Some(reduce_if_scalar(div(u, b)?, a)?) } else { None },
                if want(1) {
                    let num = mul(u, a)?;
                    let den = mul(b, b)?;
                    Some(reduce_if_scalar(neg(&div(&num, &den)?)?, b)?)
                } else {
                    None
                },
            ]
        }
        Op::Neg => vec![if want(0) { Some(neg(u)?) } else { None }],
        Op::Scale(c) => vec![if want(0) { Some(scale(u, *c)?) } else { None }],
        Op::AddScalarC(_) => vec![if want(0) { Some(u.clone()) } else { None }],
        Op::LeakyRelu(slope) => vec![if want(0) {
            let x = &ins[0];
            let mask: Vec<E> = x
                .data()
                .iter()
                .map(|&v| if v >= E::zero() { E::one() } else { *slope })
                .collect();
            Some(mul(u, &constant(x.shape(), mask))?)
        } else {
            None
        }],
        Op::Sigmoid => vec![if want(0) {
            // y' = y (1 - y), expressed through the live output tensor so the
            // second derivative remains exact.
            let y = &node.out;
            let one_minus = add_scalar(&neg(y)?, E::one())?;
            Some(mul(u, &mul(y, &one_minus)?)?)
        } else {
            None
        }],
        Op::Softplus => vec![if want(0) { Some(mul(u, &sigmoid(&ins[0])?)?) } else { None }],
        Op::Log => vec![if want(0) { Some(div(u, &ins[0])?) } else { None }],
        Op::Abs => vec![if want(0) {
            let x = &ins[0];
            let sign: Vec<E> = x
                .data()
                .iter()
                .map(|&v| if v >= E::zero() { E::one() } else { -E::one() })
                .collect();
            Some(mul(u, &constant(x.shape(), sign))?)
        } else {
            None
        }],
        Op::SumAll => vec![if want(0) { Some(broadcast_scalar(u, ins[0].shape())?) } else { None }],
        Op::BroadcastScalar => vec![if want(0) { Some(sum_all(u)?) } else { None }],
        Op::ScaleChannels => vec![
            if want(0) { Some(scale_channels(u, &ins[1])?) } else { None },
            if want(1) { Some(channel_sum(&mul(u, &ins[0])?)?) } else { None },
        ],
        Op::ChannelSum => {
            let (n, _, h, w) = nchw("channel_sum", &ins[0])?;
            vec![if want(0) { Some(broadcast_channels(u, n, h, w)?) } else { None }]
        }
        Op::BroadcastChannels { .. } => vec![if want(0) { Some(channel_sum(u)?) } else { None }],
        Op::AvgPool2x => vec![if want(0) {
            Some(scale(&nearest_up_2x(u)?, E::from_f64(0.25))?)
        } else {
            None
        }],
        Op::NearestUp2x => vec![if want(0) {
            Some(scale(&avg_pool_2x(u)?, E::from_f64(4.0))?)
        } else {
            None
        }],
        Op::ConcatCh => {
            let ca = ins[0].shape()[1];
            let cb = ins[1].shape()[1];
            vec![
                if want(0) { Some(slice_channels(u, 0, ca)?) } else { None },
                if want(1) { Some(slice_channels(u, ca, ca + cb)?) } else { None },
            ]
        }
        Op::SliceCh { from, to } => {
            let c = ins[0].shape()[1];
            vec![if want(0) { Some(pad_channels(u, *from, c - to)?) } else { None }]
        }
        Op::PadCh { before, .. } => {
            let c = ins[0].shape()[1];
            vec![if want(0) { Some(slice_channels(u, *before, before + c)?) } else { None }]
        }
        Op::Reshape => vec![if want(0) { Some(reshape(u, ins[0].shape())?) } else { None }],
        Op::MatMul => vec![
            if want(0) { Some(matmul(u, &transpose2d(&ins[1])?)?) } else { None },
            if want(1) { Some(matmul(&transpose2d(&ins[0])?, u)?) } else { None },
        ],
        Op::Transpose2d => vec![if want(0) { Some(transpose2d(u)?) } else { None }],
        Op::AddRowVec => vec![
            if want(0) { Some(u.clone()) } else { None },
            if want(1) { Some(col_sum(u)?) } else { None },
        ],
        Op::ColSum => {
            let n = ins[0].shape()[0];
            vec![if want(0) { Some(broadcast_rows(u, n)?) } else { None }]
        }
        Op::BroadcastRows { .. } => vec![if want(0) { Some(col_sum(u)?) } else { None }],
    })
}
