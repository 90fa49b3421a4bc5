//! Sliced Wasserstein distance over Laplacian-pyramid patch descriptors.
//!
//! Per requested level: both image sets are reduced to that resolution's
//! Laplacian band, `n_patches` 7x7x3 descriptors are sampled per image at
//! seeded positions (shared between the two sets, so a set compared against
//! itself scores exactly zero), each color channel is normalized by its own
//! set's mean and standard deviation, and the descriptors are projected onto
//! seeded random unit directions. The reported value is the mean over
//! directions of the 1-D Wasserstein distance between the sorted
//! projections, scaled by 1e3.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PanError, Result};
use crate::metrics::image_batch_dims;
use crate::net::derive_seed;
use crate::Tensor;

const PATCH: usize = 7;
const DESC: usize = PATCH * PATCH * 3;

/// Sliced Wasserstein distance per pyramid level, reported as
/// `(level, value * 1e3)` pairs in the order the levels were given.
pub fn swd(
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    levels: &[usize],
    n_patches: usize,
    n_projections: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let (n_real, h, w) = image_batch_dims(real, "swd")?;
    let (n_fake, hf, wf) = image_batch_dims(fake, "swd")?;
    if (h, w) != (hf, wf) {
        return Err(PanError::Dimension {
            op: "swd",
            detail: format!("resolution mismatch: real {h}x{w} vs fake {hf}x{wf}"),
        });
    }
    if h != w {
        return Err(PanError::Geometry {
            op: "swd",
            detail: format!("expected square images, got {h}x{w}"),
        });
    }
    if n_real == 0 || n_fake == 0 || n_patches == 0 || n_projections == 0 {
        return Err(PanError::Data(
            "swd: cannot sample patches from an empty set or with zero patches/projections"
                .into(),
        ));
    }
    for &level in levels {
        if level < 16 || level > h || !(h / level).is_power_of_two() || h % level != 0 {
            return Err(PanError::Geometry {
                op: "swd",
                detail: format!("level {level} is not a pyramid resolution of {h}x{h} (min 16)"),
            });
        }
    }

    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let d_real = descriptors(real, n_real, h, level, n_patches, seed)?;
        let d_fake = descriptors(fake, n_fake, h, level, n_patches, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("swd.proj.{level}")));
        let mut total = 0.0;
        for _ in 0..n_projections {
            let dir = unit_direction(&mut rng);
            let mut pa = project(&d_real, &dir);
            let mut pb = project(&d_fake, &dir);
            pa.sort_by(f64::total_cmp);
            pb.sort_by(f64::total_cmp);
            total += wasserstein_1d_sorted(&pa, &pb);
        }
        out.push((level, total / n_projections as f64 * 1e3));
    }
    Ok(out)
}

/// Normalized patch descriptors for one set at one level, flattened to
/// rows of `DESC` values. The patch positions are drawn once per level and
/// shared by every image, which keeps the descriptor multiset — and hence
/// the distance — invariant under permutations of either image set.
fn descriptors(
    x: &Tensor<f32>,
    n: usize,
    res: usize,
    level: usize,
    n_patches: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let plane = res * res;
    let data = x.data();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("swd.pos.{level}")));
    let positions: Vec<(usize, usize)> = (0..n_patches)
        .map(|_| {
            (
                rng.random_range(0..=(level - PATCH)),
                rng.random_range(0..=(level - PATCH)),
            )
        })
        .collect();
    let mut rows = vec![0.0f64; n * n_patches * DESC];
    for i in 0..n {
        let bands: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                let p: Vec<f64> = data[(i * 3 + c) * plane..(i * 3 + c + 1) * plane]
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                band_at(&p, res, level)
            })
            .collect::<Result<_>>()?;
        for (pidx, &(y0, x0)) in positions.iter().enumerate() {
            let base = (i * n_patches + pidx) * DESC;
            for (c, band) in bands.iter().enumerate() {
                for dy in 0..PATCH {
                    for dx in 0..PATCH {
                        rows[base + (c * PATCH + dy) * PATCH + dx] =
                            band[(y0 + dy) * level + x0 + dx];
                    }
                }
            }
        }
    }
    // Normalize each color channel by the set's own mean and std.
    let rows_total = n * n_patches;
    for c in 0..3 {
        let mut mean = 0.0;
        let mut count = 0usize;
        for r in 0..rows_total {
            for k in 0..PATCH * PATCH {
                mean += rows[r * DESC + c * PATCH * PATCH + k];
                count += 1;
            }
        }
        mean /= count as f64;
        let mut var = 0.0;
        for r in 0..rows_total {
            for k in 0..PATCH * PATCH {
                let d = rows[r * DESC + c * PATCH * PATCH + k] - mean;
                var += d * d;
            }
        }
        let std = (var / count as f64).sqrt().max(1e-12);
        for r in 0..rows_total {
            for k in 0..PATCH * PATCH {
                let v = &mut rows[r * DESC + c * PATCH * PATCH + k];
                *v = (*v - mean) / std;
            }
        }
    }
    Ok(rows)
}

/// Laplacian band at `level`: the Gaussian-pyramid plane at `level` minus
/// the upsampled next-coarser plane.
pub(crate) fn band_at(plane: &[f64], res: usize, level: usize) -> Result<Vec<f64>> {
    let mut cur = plane.to_vec();
    let mut r = res;
    while r > level {
        cur = down2(&cur, r)?;
        r /= 2;
    }
    let coarse = down2(&cur, r)?;
    let up = up2_nearest(&coarse, r / 2);
    Ok(cur.iter().zip(up.iter()).map(|(a, b)| a - b).collect())
}

/// 2x2 box downsample of a square plane.
pub(crate) fn down2(plane: &[f64], res: usize) -> Result<Vec<f64>> {
    if res % 2 != 0 || res < 2 {
        return Err(PanError::Geometry {
            op: "swd.pyramid",
            detail: format!("cannot halve a {res}x{res} plane"),
        });
    }
    let half = res / 2;
    let mut out = vec![0.0; half * half];
    for y in 0..half {
        for x in 0..half {
            out[y * half + x] = 0.25
                * (plane[2 * y * res + 2 * x]
                    + plane[2 * y * res + 2 * x + 1]
                    + plane[(2 * y + 1) * res + 2 * x]
                    + plane[(2 * y + 1) * res + 2 * x + 1]);
        }
    }
    Ok(out)
}

/// Nearest-neighbor 2x upsample of a square plane.
pub(crate) fn up2_nearest(plane: &[f64], res: usize) -> Vec<f64> {
    let out_res = res * 2;
    let mut out = vec![0.0; out_res * out_res];
    for y in 0..out_res {
        for x in 0..out_res {
            out[y * out_res + x] = plane[(y / 2) * res + x / 2];
        }
    }
    out
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; DESC] {
    let mut dir = [0.0f64; DESC];
    loop {
        let mut norm_sq = 0.0;
        for v in &mut dir {
            *v = StandardNormal.sample(rng);
            norm_sq += *v * *v;
        }
        if norm_sq > 1e-24 {
            let inv = norm_sq.sqrt().recip();
            for v in &mut dir {
                *v *= inv;
            }
            return dir;
        }
    }
}

fn project(rows: &[f64], dir: &[f64; DESC]) -> Vec<f64> {
    rows.chunks_exact(DESC)
        .map(|row| row.iter().zip(dir.iter()).map(|(a, b)| a * b).sum())
        .collect()
}

/// 1-D Wasserstein-1 distance between two sorted samples, matching
/// quantiles at the midpoints of the finer of the two grids. For equal
/// sample counts this is exactly the mean absolute difference of the
/// sorted values.
fn wasserstein_1d_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
    }
    let k = a.len().max(b.len());
    let mut total = 0.0;
    for i in 0..k {
        let q = (i as f64 + 0.5) / k as f64;
        let qa = a[((q * a.len() as f64) as usize).min(a.len() - 1)];
        let qb = b[((q * b.len() as f64) as usize).min(b.len() - 1)];
        total += (qa - qb).abs();
    }
    total / k as f64
}
