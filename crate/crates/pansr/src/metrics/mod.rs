//! Evaluation suite: PSNR, SSIM, NIQE, FID, and sliced Wasserstein distance.
//!
//! All metrics consume `[N, 3, H, W]` image batches in `[-1, 1]` and are
//! deterministic: distribution metrics (FID, SWD) are permutation-invariant
//! over the image set, per-image metrics (PSNR, SSIM, NIQE) depend only on
//! the image itself. Feature-based metrics go through a [`Features`] set
//! tagged with the embedder that produced it, so sets from different
//! embedders cannot be compared by accident.

mod embed;
mod fid;
mod niqe;
mod psnr;
mod ssim;
mod swd;

pub use embed::{default_embedder, DEFAULT_EMBEDDER_ID};
pub use fid::fid;
pub use niqe::{niqe_fit, niqe_score, NiqeModel};
pub use psnr::{psnr, PSNR_CAP_DB};
pub use ssim::ssim;
pub use swd::swd;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{PanError, Result};

/// A set of feature vectors produced by one embedder: `count` rows of
/// `dims` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dims: usize,
    pub count: usize,
    pub embedder_id: String,
    pub data: Vec<f32>,
}

impl Features {
    pub fn new(dims: usize, count: usize, embedder_id: &str, data: Vec<f32>) -> Result<Self> {
        if data.len() != dims * count {
            return Err(PanError::Dimension {
                op: "features",
                detail: format!(
                    "{} values do not fill {count} rows of {dims}",
                    data.len()
                ),
            });
        }
        Ok(Self { dims, count, embedder_id: embedder_id.into(), data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Writes the set as a one-line text header followed by raw
    /// little-endian `f32` values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(64 + self.data.len() * 4);
        out.extend_from_slice(
            format!(
                "pansr-features v1 dims={} count={} embedder={}\n",
                self.dims, self.count, self.embedder_id
            )
            .as_bytes(),
        );
        for v in &self.data {
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
            PanError::Data(format!("{}: missing feature header", path.display()))
        })?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| PanError::Data(format!("{}: header is not UTF-8", path.display())))?;
        let mut dims = None;
        let mut count = None;
        let mut embedder = None;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("pansr-features") || fields.next() != Some("v1") {
            return Err(PanError::Data(format!(
                "{}: not a feature file (header `{header}`)",
                path.display()
            )));
        }
        for field in fields {
            match field.split_once('=') {
                Some(("dims", v)) => dims = v.parse::<usize>().ok(),
                Some(("count", v)) => count = v.parse::<usize>().ok(),
                Some(("embedder", v)) => embedder = Some(v.to_string()),
                _ => {}
            }
        }
        let (dims, count, embedder_id) = match (dims, count, embedder) {
            (Some(d), Some(c), Some(e)) => (d, c, e),
            _ => {
                return Err(PanError::Data(format!(
                    "{}: header `{header}` is missing dims/count/embedder",
                    path.display()
                )))
            }
        };
        let body = &bytes[nl + 1..];
        if body.len() != dims * count * 4 {
            return Err(PanError::Data(format!(
                "{}: expected {} feature bytes, found {}",
                path.display(),
                dims * count * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(dims, count, &embedder_id, data)
    }
}

/// One row of the `evaluate` report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    /// Pyramid level for SWD rows; empty otherwise.
    pub level: Option<usize>,
    pub value: f64,
    pub n_images: usize,
    pub embedder_id: String,
    pub seed: u64,
    pub config_hash: String,
}

/// Renders report rows as CSV with a fixed header.
pub fn report_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from("metric,level,value,n_images,embedder_id,seed,config_hash\n");
    for r in rows {
        let level = r.level.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{:.6},{},{},{},{}",
            r.metric, level, r.value, r.n_images, r.embedder_id, r.seed, r.config_hash
        );
    }
    s
}

/// Checks that a batch looks like `[N, 3, H, W]` images and returns
/// `(n, h, w)`.
pub(crate) fn image_batch_dims(
    x: &crate::Tensor<f32>,
    op: &'static str,
) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(PanError::Dimension {
            op,
            detail: format!("expected [N,3,H,W] image batch, got {s:?}"),
        });
    }
    Ok((s[0], s[2], s[3]))
}

/// Extracts one image's BT.601 luminance plane on the 0..255 scale.
pub(crate) fn luma_255(x: &crate::Tensor<f32>, n: usize, h: usize, w: usize, i: usize) -> Vec<f64> {
    debug_assert!(i < n);
    let d = x.data();
    let plane = h * w;
    let base = i * 3 * plane;
    let mut out = Vec::with_capacity(plane);
    for p in 0..plane {
        let r = (d[base + p] as f64 + 1.0) * 127.5;
        let g = (d[base + plane + p] as f64 + 1.0) * 127.5;
        let b = (d[base + 2 * plane + p] as f64 + 1.0) * 127.5;
        out.push(0.299 * r + 0.587 * g + 0.114 * b);
    }
    out
}
