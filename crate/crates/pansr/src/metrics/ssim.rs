//! Structural similarity on the luminance channel.
//!
//! Uses the standard single-scale construction: BT.601 luminance on the
//! 0..255 scale, an 11-tap Gaussian window with sigma 1.5, stabilizers
//! K1 = 0.01 and K2 = 0.03 at L = 255, and the mean over valid window
//! positions only (no padding). The moment maps are produced by separable
//! filtering, which the tests cross-check against a direct per-window loop.

use crate::error::{PanError, Result};
use crate::metrics::{image_batch_dims, luma_255};
use crate::Tensor;

pub(crate) const WINDOW: usize = 11;
pub(crate) const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

/// Per-image SSIM between two equal-shape batches.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Vec<f64>> {
    let (n, h, w) = image_batch_dims(a, "ssim")?;
    if a.shape() != b.shape() {
        return Err(PanError::Dimension {
            op: "ssim",
            detail: format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    if h < WINDOW || w < WINDOW {
        return Err(PanError::Geometry {
            op: "ssim",
            detail: format!("{h}x{w} image is smaller than the {WINDOW}x{WINDOW} window"),
        });
    }
    let kernel = gaussian_taps();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ya = luma_255(a, n, h, w, i);
        let yb = luma_255(b, n, h, w, i);
        out.push(ssim_planes(&ya, &yb, h, w, &kernel));
    }
    Ok(out)
}

pub(crate) fn gaussian_taps() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn ssim_planes(ya: &[f64], yb: &[f64], h: usize, w: usize, kernel: &[f64; WINDOW]) -> f64 {
    let prods: Vec<f64> = ya.iter().zip(yb).map(|(&x, &y)| x * y).collect();
    let sq_a: Vec<f64> = ya.iter().map(|&x| x * x).collect();
    let sq_b: Vec<f64> = yb.iter().map(|&y| y * y).collect();
    let mu_a = blur_valid(ya, h, w, kernel);
    let mu_b = blur_valid(yb, h, w, kernel);
    let m_aa = blur_valid(&sq_a, h, w, kernel);
    let m_bb = blur_valid(&sq_b, h, w, kernel);
    let m_ab = blur_valid(&prods, h, w, kernel);

    let c1 = (K1 * L) * (K1 * L);
    let c2 = (K2 * L) * (K2 * L);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = m_aa[i] - ma * ma;
        let var_b = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Separable Gaussian filtering restricted to fully covered positions;
/// the result has (h-10) x (w-10) entries.
fn blur_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let wv = w - WINDOW + 1;
    let mut rows = vec![0.0; h * wv];
    for y in 0..h {
        for x in 0..wv {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * plane[y * w + x + t];
            }
            rows[y * wv + x] = acc;
        }
    }
    let hv = h - WINDOW + 1;
    let mut out = vec![0.0; hv * wv];
    for y in 0..hv {
        for x in 0..wv {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * rows[(y + t) * wv + x];
            }
            out[y * wv + x] = acc;
        }
    }
    out
}
