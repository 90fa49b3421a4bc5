//! No-reference naturalness score (NIQE-style).
//!
//! A pristine-image model is fitted once: every corpus image is reduced to
//! MSCN coefficients (local mean/variance normalization with a 7x7 Gaussian
//! of sigma 7/6, reflect padding), a generalized Gaussian is moment-matched
//! to the coefficients and asymmetric generalized Gaussians to their four
//! pairwise neighbor products, at two scales — 18 + 18 = 36 features per
//! patch. Sharp patches (local variance above a fraction of the per-image
//! peak) feed a 36-dim Gaussian model. Scoring computes the same statistics
//! on all patches of the test image and measures the Mahalanobis-type
//! distance between the two Gaussians, with a pseudo-inverse when the
//! pooled covariance is singular. Lower is better.

use std::path::Path;
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{PanError, Result};
use crate::metrics::{image_batch_dims, luma_255};
use crate::Tensor;

const FEATURE_DIM: usize = 36;
const MIN_CORPUS: usize = 50;
const DEFAULT_PATCH: usize = 16;
const DEFAULT_SHARPNESS: f64 = 0.75;

/// Fitted pristine model: Gaussian over 36-dim patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct NiqeModel {
    /// Feature mean, length 36.
    pub mean: Vec<f64>,
    /// Feature covariance, 36x36 row-major.
    pub cov: Vec<f64>,
    /// Patch size at the finest scale.
    pub patch: usize,
    /// Fraction of the per-image peak sharpness a patch must reach to
    /// enter the fit.
    pub sharpness_threshold: f64,
}

/// Fits the pristine model on a corpus batch of at least 50 images.
pub fn niqe_fit(corpus: &Tensor<f32>) -> Result<NiqeModel> {
    let (n, h, w) = image_batch_dims(corpus, "niqe_fit")?;
    if n < MIN_CORPUS {
        return Err(PanError::Data(format!(
            "niqe fit needs at least {MIN_CORPUS} pristine images, got {n}"
        )));
    }
    let patch = DEFAULT_PATCH;
    let mut selected: Vec<[f64; FEATURE_DIM]> = Vec::new();
    for i in 0..n {
        let luma = luma_255(corpus, n, h, w, i);
        let patches = patch_features(&luma, h, w, patch)?;
        let peak = patches
            .iter()
            .map(|p| p.sharpness)
            .fold(f64::NEG_INFINITY, f64::max);
        for p in &patches {
            if p.sharpness > DEFAULT_SHARPNESS * peak {
                selected.push(p.features);
            }
        }
    }
    if selected.len() < 2 {
        return Err(PanError::Data(format!(
            "niqe fit selected only {} sharp patches from the corpus",
            selected.len()
        )));
    }
    let (mean, cov) = gaussian_stats(&selected);
    Ok(NiqeModel {
        mean,
        cov,
        patch,
        sharpness_threshold: DEFAULT_SHARPNESS,
    })
}

/// Scores each image of a batch against the pristine model; lower means
/// more natural.
pub fn niqe_score(images: &Tensor<f32>, model: &NiqeModel) -> Result<Vec<f64>> {
    let (n, h, w) = image_batch_dims(images, "niqe_score")?;
    if model.mean.len() != FEATURE_DIM || model.cov.len() != FEATURE_DIM * FEATURE_DIM {
        return Err(PanError::Data(format!(
            "niqe model has {} mean / {} cov entries, expected {FEATURE_DIM}/{}",
            model.mean.len(),
            model.cov.len(),
            FEATURE_DIM * FEATURE_DIM
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let luma = luma_255(images, n, h, w, i);
        let patches = patch_features(&luma, h, w, model.patch)?;
        if patches.len() < 2 {
            return Err(PanError::Geometry {
                op: "niqe_score",
                detail: format!(
                    "{h}x{w} image yields {} patch(es) of size {}, need at least 2",
                    patches.len(),
                    model.patch
                ),
            });
        }
        let rows: Vec<[f64; FEATURE_DIM]> = patches.iter().map(|p| p.features).collect();
        let (mean, cov) = gaussian_stats(&rows);
        out.push(score_stats(model, &mean, &cov));
    }
    Ok(out)
}

/// Mahalanobis-type distance between the model Gaussian and test-image
/// statistics, using the pooled covariance's pseudo-inverse.
pub(crate) fn score_stats(model: &NiqeModel, mean: &[f64], cov: &[f64]) -> f64 {
    let d = FEATURE_DIM;
    let mut pooled = nalgebra::DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            pooled[(r, c)] = 0.5 * (model.cov[r * d + c] + cov[r * d + c]);
        }
    }
    let delta = nalgebra::DVector::from_iterator(
        d,
        model.mean.iter().zip(mean.iter()).map(|(a, b)| a - b),
    );
    let eig = nalgebra::SymmetricEigen::new(pooled);
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = max_eig * 1e-12;
    let rotated = eig.eigenvectors.transpose() * delta;
    let mut dist_sq = 0.0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            dist_sq += rotated[i] * rotated[i] / lambda;
        }
    }
    dist_sq.max(0.0).sqrt()
}

impl NiqeModel {
    /// Writes the model as a one-line text header plus little-endian `f64`
    /// mean and covariance.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(
            format!(
                "pansr-niqe v1 dim={FEATURE_DIM} patch={} threshold={}\n",
                self.patch, self.sharpness_threshold
            )
            .as_bytes(),
        );
        for v in self.mean.iter().chain(self.cov.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| {
            PanError::Data(format!("{}: missing niqe model header", path.display()))
        })?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| PanError::Data(format!("{}: header is not UTF-8", path.display())))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("pansr-niqe") || fields.next() != Some("v1") {
            return Err(PanError::Data(format!(
                "{}: not a niqe model (header `{header}`)",
                path.display()
            )));
        }
        let mut patch = None;
        let mut threshold = None;
        let mut dim = None;
        for field in fields {
            match field.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("patch", v)) => patch = v.parse::<usize>().ok(),
                Some(("threshold", v)) => threshold = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (Some(dim), Some(patch), Some(threshold)) = (dim, patch, threshold) else {
            return Err(PanError::Data(format!(
                "{}: header `{header}` is missing dim/patch/threshold",
                path.display()
            )));
        };
        if dim != FEATURE_DIM {
            return Err(PanError::Data(format!(
                "{}: model dimension {dim} does not match {FEATURE_DIM}",
                path.display()
            )));
        }
        let body = &bytes[nl + 1..];
        let expected = (FEATURE_DIM + FEATURE_DIM * FEATURE_DIM) * 8;
        if body.len() != expected {
            return Err(PanError::Data(format!(
                "{}: expected {expected} model bytes, found {}",
                path.display(),
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(NiqeModel {
            mean: values[..FEATURE_DIM].to_vec(),
            cov: values[FEATURE_DIM..].to_vec(),
            patch,
            sharpness_threshold: threshold,
        })
    }
}

struct PatchFeatures {
    features: [f64; FEATURE_DIM],
    sharpness: f64,
}

/// All grid patches of one luminance plane, 36 features each.
fn patch_features(luma: &[f64], h: usize, w: usize, patch: usize) -> Result<Vec<PatchFeatures>> {
    if patch < 4 || patch % 2 != 0 {
        return Err(PanError::Config(format!(
            "niqe patch size must be an even number of at least 4, got {patch}"
        )));
    }
    if h < patch || w < patch {
        return Err(PanError::Geometry {
            op: "niqe",
            detail: format!("{h}x{w} image is smaller than a {patch}x{patch} patch"),
        });
    }
    let (mscn1, sigma1) = mscn(luma, h, w);
    // Half-scale plane by 2x2 box averaging of the even-cropped plane.
    let (h2, w2) = ((h & !1) / 2, (w & !1) / 2);
    let mut half = vec![0.0; h2 * w2];
    for y in 0..h2 {
        for x in 0..w2 {
            half[y * w2 + x] = 0.25
                * (luma[2 * y * w + 2 * x]
                    + luma[2 * y * w + 2 * x + 1]
                    + luma[(2 * y + 1) * w + 2 * x]
                    + luma[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    let (mscn2, _) = mscn(&half, h2, w2);

    let p2 = patch / 2;
    let (gy, gx) = (h / patch, w / patch);
    let mut out = Vec::with_capacity(gy * gx);
    let mut block1 = vec![0.0; patch * patch];
    let mut block2 = vec![0.0; p2 * p2];
    for py in 0..gy {
        for px in 0..gx {
            for y in 0..patch {
                for x in 0..patch {
                    block1[y * patch + x] = mscn1[(py * patch + y) * w + px * patch + x];
                }
            }
            for y in 0..p2 {
                for x in 0..p2 {
                    block2[y * p2 + x] = mscn2[(py * p2 + y) * w2 + px * p2 + x];
                }
            }
            let mut features = [0.0; FEATURE_DIM];
            features18(&block1, patch, patch, &mut features[..18]);
            features18(&block2, p2, p2, &mut features[18..]);
            let mut sharp = 0.0;
            for y in 0..patch {
                for x in 0..patch {
                    sharp += sigma1[(py * patch + y) * w + px * patch + x];
                }
            }
            out.push(PatchFeatures {
                features,
                sharpness: sharp / (patch * patch) as f64,
            });
        }
    }
    Ok(out)
}

/// MSCN coefficients and the local deviation map of a plane.
fn mscn(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mu = gaussian_blur(plane, h, w);
    let sq: Vec<f64> = plane.iter().map(|&v| v * v).collect();
    let musq = gaussian_blur(&sq, h, w);
    let mut mscn = vec![0.0; h * w];
    let mut sigma = vec![0.0; h * w];
    for i in 0..h * w {
        let s = (musq[i] - mu[i] * mu[i]).max(0.0).sqrt();
        sigma[i] = s;
        mscn[i] = (plane[i] - mu[i]) / (s + 1.0);
    }
    (mscn, sigma)
}

/// 7x7 Gaussian blur (sigma 7/6) with reflect padding, separable.
fn gaussian_blur(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    static TAPS: OnceLock<[f64; 7]> = OnceLock::new();
    let taps = TAPS.get_or_init(|| {
        let sigma = 7.0 / 6.0;
        let mut k = [0.0; 7];
        let mut sum = 0.0;
        for (i, v) in k.iter_mut().enumerate() {
            let d = i as f64 - 3.0;
            *v = (-d * d / (2.0 * sigma * sigma)).exp();
            sum += *v;
        }
        for v in &mut k {
            *v /= sum;
        }
        k
    });
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = (2 * n - 2).max(1);
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - j;
        }
        j as usize
    };
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                acc += k * plane[y * w + reflect(x as isize + t as isize - 3, w)];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                acc += k * rows[reflect(y as isize + t as isize - 3, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// 18 NSS features of one MSCN block: GGD on the coefficients, AGGD on the
/// four pairwise neighbor products.
fn features18(block: &[f64], bh: usize, bw: usize, out: &mut [f64]) {
    let (alpha, sigma_sq) = ggd_fit(block);
    out[0] = alpha;
    out[1] = sigma_sq;
    let mut idx = 2;
    for pair in 0..4 {
        let mut prods = Vec::with_capacity(bh * bw);
        for y in 0..bh {
            for x in 0..bw {
                let (ny, nx) = match pair {
                    0 => (y, x + 1),              // horizontal
                    1 => (y + 1, x),              // vertical
                    2 => (y + 1, x + 1),          // main diagonal
                    _ => (y + 1, x.wrapping_sub(1)), // anti-diagonal
                };
                if ny < bh && nx < bw {
                    prods.push(block[y * bw + x] * block[ny * bw + nx]);
                }
            }
        }
        let (a, eta, sl, sr) = aggd_fit(&prods);
        out[idx] = a;
        out[idx + 1] = eta;
        out[idx + 2] = sl;
        out[idx + 3] = sr;
        idx += 4;
    }
}

/// Moment-matched generalized Gaussian: returns (shape, variance).
fn ggd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    if mean_sq < 1e-24 {
        return (2.0, 0.0);
    }
    let rho = mean_abs * mean_abs / mean_sq;
    (lookup_alpha(rho), mean_sq)
}

/// Moment-matched asymmetric generalized Gaussian on a product array:
/// returns (shape, mean offset, left variance, right variance).
fn aggd_fit(x: &[f64]) -> (f64, f64, f64, f64) {
    let mut left_sq = 0.0;
    let mut left_n = 0usize;
    let mut right_sq = 0.0;
    let mut right_n = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &v in x {
        abs_sum += v.abs();
        sq_sum += v * v;
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
    }
    let n = x.len() as f64;
    if n == 0.0 || sq_sum / n < 1e-24 {
        return (2.0, 0.0, 0.0, 0.0);
    }
    let sigma_l = if left_n > 0 { (left_sq / left_n as f64).sqrt() } else { 0.0 };
    let sigma_r = if right_n > 0 { (right_sq / right_n as f64).sqrt() } else { 0.0 };
    let gamma_hat = if sigma_r > 1e-24 { sigma_l / sigma_r } else { 1e12 };
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let rho = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat * gamma_hat + 1.0).powi(2);
    let alpha = lookup_alpha(rho);
    // eta = (b_r - b_l) * Gamma(2/a)/Gamma(1/a) with b = sigma *
    // sqrt(Gamma(1/a)/Gamma(3/a)), the mean of the fitted AGGD.
    let g1 = ln_gamma(1.0 / alpha);
    let g2 = ln_gamma(2.0 / alpha);
    let g3 = ln_gamma(3.0 / alpha);
    let eta = (sigma_r - sigma_l) * (g2 - g1).exp() * ((g1 - g3) / 2.0).exp();
    (alpha, eta, sigma_l * sigma_l, sigma_r * sigma_r)
}

/// Grid of the moment ratio g(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)),
/// which is strictly increasing on the grid, paired with its alpha.
fn ratio_grid() -> &'static Vec<(f64, f64)> {
    static GRID: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut g = Vec::with_capacity(9801);
        for i in 0..=9800 {
            let alpha = 0.2 + i as f64 * 0.001;
            let val =
                (2.0 * ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha))
                    .exp();
            g.push((val, alpha));
        }
        g
    })
}

/// Shape parameter whose moment ratio is closest to `rho`.
fn lookup_alpha(rho: f64) -> f64 {
    let grid = ratio_grid();
    let pos = grid.partition_point(|&(v, _)| v < rho);
    if pos == 0 {
        return grid[0].1;
    }
    if pos >= grid.len() {
        return grid[grid.len() - 1].1;
    }
    let (lo_v, lo_a) = grid[pos - 1];
    let (hi_v, hi_a) = grid[pos];
    if rho - lo_v <= hi_v - rho {
        lo_a
    } else {
        hi_a
    }
}

/// Sample mean and unbiased covariance of feature rows.
fn gaussian_stats(rows: &[[f64; FEATURE_DIM]]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let mut mean = vec![0.0; FEATURE_DIM];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; FEATURE_DIM * FEATURE_DIM];
    for row in rows {
        for a in 0..FEATURE_DIM {
            let da = row[a] - mean[a];
            for b in a..FEATURE_DIM {
                cov[a * FEATURE_DIM + b] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1).max(1) as f64;
    for a in 0..FEATURE_DIM {
        for b in a..FEATURE_DIM {
            cov[a * FEATURE_DIM + b] /= denom;
            cov[b * FEATURE_DIM + a] = cov[a * FEATURE_DIM + b];
        }
    }
    (mean, cov)
}
