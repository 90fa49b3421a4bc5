//! Raw compute kernels behind the differentiable ops: gemm-backed batched
//! convolution (forward / transposed / weight-gradient), pooling, and the
//! elementwise loops. No tape logic here — pure functions on slices.
//!
//! Layout everywhere is `[N, C, H, W]` row-major. Convolutions lower each
//! sample to a column matrix (im2col) and run one gemm per sample, which
//! keeps the output layout contiguous without a post-transpose.

use super::element::Element;

/// Geometry of one 2-D cross-correlation. `ho/wo` are the output extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Output extent of a cross-correlation along one axis, or None if the
    /// padded input is smaller than the kernel.
    pub fn out_extent(inp: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = inp + 2 * pad;
        if padded < k {
            return None;
        }
        Some((padded - k) / stride + 1)
    }
}

/// A^(m x k) * B^(k x n) -> C, all row-major. `beta` scales existing C.
pub fn gemm_nn<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], beta: E, c: &mut [E]) {
    E::gemm(m, k, n, E::one(), a, b, beta, c);
}

/// im2col for one sample: `cols[(ci*kh*kw + kidx), (oh*wo + ow)]`.
///
/// Rows are kernel-tap slices of the input; out-of-bounds taps are zero
/// (zero padding). For stride 1 the inner copy is a contiguous memcpy.
pub fn im2col<E: Element>(x: &[E], g: &ConvGeom, cols: &mut [E]) {
    let row_len = g.ho * g.wo;
    debug_assert_eq!(x.len(), g.ci * g.h * g.w);
    debug_assert_eq!(cols.len(), g.ci * g.kh * g.kw * row_len);
    for ci in 0..g.ci {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for kh in 0..g.kh {
            for kw in 0..g.kw {
                let row = &mut cols[(ci * g.kh * g.kw + kh * g.kw + kw) * row_len..][..row_len];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    let dst = &mut row[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        dst.fill(E::zero());
                        continue;
                    }
                    let src_row = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    // iw = ow*stride + kw - pad must land in [0, w)
                    let kw_off = kw as isize - g.pad as isize;
                    if g.stride == 1 {
                        // Valid ow range is a single contiguous run.
                        let lo = (-kw_off).max(0) as usize;
                        let hi_excl = ((g.w as isize - kw_off).min(g.wo as isize)).max(0) as usize;
                        dst[..lo.min(g.wo)].fill(E::zero());
                        if hi_excl > lo {
                            dst[lo..hi_excl]
                                .copy_from_slice(&src_row[(lo as isize + kw_off) as usize..][..hi_excl - lo]);
                        }
                        if hi_excl < g.wo {
                            dst[hi_excl..].fill(E::zero());
                        }
                    } else {
                        for ow in 0..g.wo {
                            let iw = (ow * g.stride) as isize + kw_off;
                            dst[ow] = if iw >= 0 && iw < g.w as isize {
                                src_row[iw as usize]
                            } else {
                                E::zero()
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of [`im2col`]: accumulates `cols` back into `x`.
pub fn col2im_add<E: Element>(cols: &[E], g: &ConvGeom, x: &mut [E]) {
    let row_len = g.ho * g.wo;
    debug_assert_eq!(x.len(), g.ci * g.h * g.w);
    debug_assert_eq!(cols.len(), g.ci * g.kh * g.kw * row_len);
    for ci in 0..g.ci {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for kh in 0..g.kh {
            for kw in 0..g.kw {
                let row = &cols[(ci * g.kh * g.kw + kh * g.kw + kw) * row_len..][..row_len];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let kw_off = kw as isize - g.pad as isize;
                    let src = &row[oh * g.wo..(oh + 1) * g.wo];
                    for ow in 0..g.wo {
                        let iw = (ow * g.stride) as isize + kw_off;
                        if iw >= 0 && iw < g.w as isize {
                            dst_row[iw as usize] += src[ow];
                        }
                    }
                }
            }
        }
    }
}

/// Batched cross-correlation: `y[n,co,oh,ow] = sum x[n,ci,ih,iw] * w[co,ci,kh,kw]`.
pub fn conv2d_forward<E: Element>(x: &[E], w: &[E], g: &ConvGeom) -> Vec<E> {
    let row_len = g.ho * g.wo;
    let kdim = g.ci * g.kh * g.kw;
    let mut y = vec![E::zero(); g.n * g.co * row_len];
    let mut cols = vec![E::zero(); kdim * row_len];
    let in_stride = g.ci * g.h * g.w;
    let out_stride = g.co * row_len;
    for n in 0..g.n {
        im2col(&x[n * in_stride..(n + 1) * in_stride], g, &mut cols);
        gemm_nn(g.co, kdim, row_len, w, &cols, E::zero(), &mut y[n * out_stride..(n + 1) * out_stride]);
    }
    y
}

/// Batched transposed convolution (exact adjoint of [`conv2d_forward`] with
/// the same weight and geometry): maps `[n, co, ho, wo]` back to
/// `[n, ci, h, w]`. The caller supplies the *conv* geometry `g`; this runs it
/// in reverse.
pub fn conv2d_transpose_forward<E: Element>(y: &[E], w: &[E], g: &ConvGeom) -> Vec<E> {
    let row_len = g.ho * g.wo;
    let kdim = g.ci * g.kh * g.kw;
    let mut x = vec![E::zero(); g.n * g.ci * g.h * g.w];
    let mut cols = vec![E::zero(); kdim * row_len];
    let in_stride = g.ci * g.h * g.w;
    let out_stride = g.co * row_len;
    for n in 0..g.n {
        // cols = W^T (kdim x co) * y_n (co x row_len)
        E::gemm_tn(kdim, g.co, row_len, w, &y[n * out_stride..(n + 1) * out_stride], &mut cols);
        col2im_add(&cols, g, &mut x[n * in_stride..(n + 1) * in_stride]);
    }
    x
}

/// Weight gradient of [`conv2d_forward`]: `dw[co,ci,kh,kw] = sum_n,oh,ow
/// x[n,ci,ih,iw] * gy[n,co,oh,ow]` with the same tap geometry.
pub fn conv2d_wgrad<E: Element>(x: &[E], gy: &[E], g: &ConvGeom) -> Vec<E> {
    let row_len = g.ho * g.wo;
    let kdim = g.ci * g.kh * g.kw;
    let mut dw = vec![E::zero(); g.co * kdim];
    let mut cols = vec![E::zero(); kdim * row_len];
    let in_stride = g.ci * g.h * g.w;
    let out_stride = g.co * row_len;
    for n in 0..g.n {
        im2col(&x[n * in_stride..(n + 1) * in_stride], g, &mut cols);
        // dw += gy_n (co x row_len) * cols^T (row_len x kdim)
        E::gemm_nt(g.co, row_len, kdim, &gy[n * out_stride..(n + 1) * out_stride], &cols, &mut dw);
    }
    dw
}

/// 2x average pooling: `[n,c,2h,2w] -> [n,c,h,w]`, each output the mean of
/// its 2x2 block.
pub fn avg_pool_2x<E: Element>(x: &[E], n: usize, c: usize, h2: usize, w2: usize) -> Vec<E> {
    let (h, w) = (h2 / 2, w2 / 2);
    let quarter = E::from_f64(0.25);
    let mut y = vec![E::zero(); n * c * h * w];
    for pc in 0..n * c {
        let src = &x[pc * h2 * w2..(pc + 1) * h2 * w2];
        let dst = &mut y[pc * h * w..(pc + 1) * h * w];
        for oh in 0..h {
            let r0 = &src[(2 * oh) * w2..(2 * oh + 1) * w2];
            let r1 = &src[(2 * oh + 1) * w2..(2 * oh + 2) * w2];
            let drow = &mut dst[oh * w..(oh + 1) * w];
            for ow in 0..w {
                drow[ow] = (r0[2 * ow] + r0[2 * ow + 1] + r1[2 * ow] + r1[2 * ow + 1]) * quarter;
            }
        }
    }
    y
}

/// 2x nearest-neighbour upsampling: `[n,c,h,w] -> [n,c,2h,2w]`.
pub fn nearest_up_2x<E: Element>(x: &[E], n: usize, c: usize, h: usize, w: usize) -> Vec<E> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut y = vec![E::zero(); n * c * h2 * w2];
    for pc in 0..n * c {
        let src = &x[pc * h * w..(pc + 1) * h * w];
        let dst = &mut y[pc * h2 * w2..(pc + 1) * h2 * w2];
        for ih in 0..h {
            let srow = &src[ih * w..(ih + 1) * w];
            {
                let drow = &mut dst[(2 * ih) * w2..(2 * ih + 1) * w2];
                for iw in 0..w {
                    drow[2 * iw] = srow[iw];
                    drow[2 * iw + 1] = srow[iw];
                }
            }
            let (top, bottom) = dst.split_at_mut((2 * ih + 1) * w2);
            bottom[..w2].copy_from_slice(&top[(2 * ih) * w2..(2 * ih + 1) * w2]);
        }
    }
    y
}
