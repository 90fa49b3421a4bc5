//! Self-contained feature embedder for distribution metrics.
//!
//! Desk-scale stand-in for an external feature network: each image is
//! reduced to Laplacian-band cell statistics (mean and standard deviation
//! over a fixed 4x4 grid, two pyramid bands, three channels — 192 raw
//! values) and projected to 64 dimensions with a fixed-seed Gaussian
//! matrix. Purely per-image work, so batch order permutes rows and nothing
//! else. Paper-grade FID remains possible by importing features produced
//! elsewhere; this embedder only keeps the suite runnable offline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PanError, Result};
use crate::metrics::swd::band_at;
use crate::metrics::{image_batch_dims, Features};
use crate::net::derive_seed;
use crate::Tensor;

/// Identity string stamped into [`Features`] and reports.
pub const DEFAULT_EMBEDDER_ID: &str = "lapstat64-v1";

const GRID: usize = 4;
const RAW_DIM: usize = 2 * 3 * GRID * GRID * 2; // bands x channels x cells x (mean, std)
const OUT_DIM: usize = 64;
const PROJECTION_SEED: u64 = 0x70616e_5253;

/// Embeds a `[N,3,R,R]` batch (square, power-of-two, R >= 16) into
/// `[N,64]` features.
pub fn default_embedder(images: &Tensor<f32>) -> Result<Features> {
    let (n, h, w) = image_batch_dims(images, "default_embedder")?;
    if h != w || h < 16 || !h.is_power_of_two() {
        return Err(PanError::Geometry {
            op: "default_embedder",
            detail: format!("expected square power-of-two images of at least 16, got {h}x{w}"),
        });
    }
    let projection = projection_matrix();
    let plane = h * w;
    let data = images.data();
    let mut out = Vec::with_capacity(n * OUT_DIM);
    for i in 0..n {
        let mut raw = Vec::with_capacity(RAW_DIM);
        for level in [h, h / 2] {
            for c in 0..3 {
                let p: Vec<f64> = data[(i * 3 + c) * plane..(i * 3 + c + 1) * plane]
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                let band = band_at(&p, h, level)?;
                cell_stats(&band, level, &mut raw);
            }
        }
        debug_assert_eq!(raw.len(), RAW_DIM);
        for j in 0..OUT_DIM {
            let mut acc = 0.0;
            for (k, &v) in raw.iter().enumerate() {
                acc += projection[j * RAW_DIM + k] * v;
            }
            out.push(acc as f32);
        }
    }
    Features::new(OUT_DIM, n, DEFAULT_EMBEDDER_ID, out)
}

/// Mean and standard deviation of each cell of a fixed 4x4 grid.
fn cell_stats(band: &[f64], res: usize, out: &mut Vec<f64>) {
    let cell = res / GRID;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let mut mean = 0.0;
            for y in 0..cell {
                for x in 0..cell {
                    mean += band[(gy * cell + y) * res + gx * cell + x];
                }
            }
            mean /= (cell * cell) as f64;
            let mut var = 0.0;
            for y in 0..cell {
                for x in 0..cell {
                    let d = band[(gy * cell + y) * res + gx * cell + x] - mean;
                    var += d * d;
                }
            }
            out.push(mean);
            out.push((var / (cell * cell) as f64).sqrt());
        }
    }
}

fn projection_matrix() -> Vec<f64> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(PROJECTION_SEED, "embed.projection"));
    let scale = 1.0 / (RAW_DIM as f64).sqrt();
    (0..OUT_DIM * RAW_DIM)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}
