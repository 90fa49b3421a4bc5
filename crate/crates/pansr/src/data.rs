//! Image sources and PNG plumbing.
//!
//! Training and evaluation consume an [`ImageSource`]: an indexed collection
//! of `[3,R,R]` tensors in `[-1,1]`. Two implementations live here — a
//! procedural [`SynthDataset`] whose images are pure functions of
//! `(seed, index)`, and [`FolderSource`], which ingests a directory of PNGs
//! (center-crop to square, box-resize, stable filename order).
//!
//! PNG is the only interchange format: 8-bit RGB, written with
//! `round((v+1)*127.5)` and read back as `k/127.5 - 1`, so a write/read
//! round-trip is lossless at 8-bit quantization.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PanError, Result};
use crate::net::derive_seed;
use crate::tensor::Tensor;

/// An indexed set of square RGB images on the `[-1,1]` scale.
pub trait ImageSource {
    fn len(&self) -> usize;
    fn resolution(&self) -> usize;
    /// Image `i` as a `[3,R,R]` tensor.
    fn get(&self, i: usize) -> Result<Tensor<f32>>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stack `indices` from a source into one `[N,3,R,R]` batch.
pub fn batch_from(source: &dyn ImageSource, indices: &[usize]) -> Result<Tensor<f32>> {
    let r = source.resolution();
    let mut data = Vec::with_capacity(indices.len() * 3 * r * r);
    for &i in indices {
        data.extend_from_slice(source.get(i)?.data());
    }
    Tensor::from_vec(&[indices.len(), 3, r, r], data)
}

// ---------------------------------------------------------------------------
// Procedural synthetic dataset
// ---------------------------------------------------------------------------

/// Procedural images: a linear gradient background, a handful of
/// anti-aliased rotated ellipses, and a fine sinusoidal stripe texture on
/// top. Smooth regions plus pixel-scale texture, so super-resolution has
/// detail worth recovering. Image `i` depends only on `(seed, i)`.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    n: usize,
    resolution: usize,
    seed: u64,
}

impl SynthDataset {
    pub fn new(n: usize, resolution: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(PanError::Config("synthetic dataset needs at least 1 image".into()));
        }
        if resolution < 8 {
            return Err(PanError::Config(format!(
                "synthetic dataset resolution must be at least 8, got {resolution}"
            )));
        }
        Ok(SynthDataset { n, resolution, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn render(&self, i: usize) -> Tensor<f32> {
        let r = self.resolution;
        let rf = r as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("img{i}")));
        fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
            [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
        }

        // Background: linear gradient between two colors along a random axis.
        let c0 = color(&mut rng, -1.0, 1.0);
        let c1 = color(&mut rng, -1.0, 1.0);
        let gdir = rng.random_range(0.0..std::f64::consts::TAU);
        let (gx, gy) = (gdir.cos(), gdir.sin());

        // Ellipses: center, semi-axes, rotation, color, opacity.
        struct Ellipse {
            cx: f64,
            cy: f64,
            a: f64,
            b: f64,
            cos: f64,
            sin: f64,
            color: [f64; 3],
            opacity: f64,
        }
        let count = rng.random_range(3..=6usize);
        let ellipses: Vec<Ellipse> = (0..count)
            .map(|_| {
                let cx = rng.random_range(0.15..0.85) * rf;
                let cy = rng.random_range(0.15..0.85) * rf;
                let a = (rng.random_range(0.08..0.35) * rf).max(1.5);
                let b = (rng.random_range(0.08..0.35) * rf).max(1.5);
                let rot = rng.random_range(0.0..std::f64::consts::PI);
                let col = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let opacity = rng.random_range(0.6..1.0);
                Ellipse { cx, cy, a, b, cos: rot.cos(), sin: rot.sin(), color: col, opacity }
            })
            .collect();

        // Stripes: period of 2..6 px so the texture survives at every scale.
        let stripe_dir = rng.random_range(0.0..std::f64::consts::PI);
        let (sx, sy) = (stripe_dir.cos(), stripe_dir.sin());
        let omega = std::f64::consts::TAU / rng.random_range(2.0..6.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = color(&mut rng, 0.04, 0.20);

        let mut data = vec![0f32; 3 * r * r];
        for y in 0..r {
            for x in 0..r {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = (0.5 + (px / rf - 0.5) * gx + (py / rf - 0.5) * gy).clamp(0.0, 1.0);
                let mut pix = [
                    c0[0] + (c1[0] - c0[0]) * t,
                    c0[1] + (c1[1] - c0[1]) * t,
                    c0[2] + (c1[2] - c0[2]) * t,
                ];
                for e in &ellipses {
                    let (dx, dy) = (px - e.cx, py - e.cy);
                    let xr = dx * e.cos + dy * e.sin;
                    let yr = -dx * e.sin + dy * e.cos;
                    let q = (xr / e.a).powi(2) + (yr / e.b).powi(2);
                    // Linearized signed distance to the boundary, in pixels,
                    // for a one-pixel anti-aliasing ramp.
                    let d = (q - 1.0) * e.a.min(e.b) * 0.5;
                    let cover = (0.5 - d).clamp(0.0, 1.0) * e.opacity;
                    if cover > 0.0 {
                        for c in 0..3 {
                            pix[c] += (e.color[c] - pix[c]) * cover;
                        }
                    }
                }
                let s = (omega * (px * sx + py * sy) + phase).sin();
                for c in 0..3 {
                    data[c * r * r + y * r + x] = ((pix[c] + amp[c] * s).clamp(-1.0, 1.0)) as f32;
                }
            }
        }
        Tensor::new_unchecked(vec![3, r, r], data)
    }
}

impl ImageSource for SynthDataset {
    fn len(&self) -> usize {
        self.n
    }

    fn resolution(&self) -> usize {
        self.resolution
    }

    fn get(&self, i: usize) -> Result<Tensor<f32>> {
        if i >= self.n {
            return Err(PanError::Data(format!(
                "image index {i} out of range for dataset of {}",
                self.n
            )));
        }
        Ok(self.render(i))
    }
}

// ---------------------------------------------------------------------------
// Folder ingestion
// ---------------------------------------------------------------------------

/// Eagerly loaded PNG folder: each file center-cropped to a square,
/// box-resized to the requested resolution, mapped to `[-1,1]`. Order is
/// stable (sorted by filename).
pub struct FolderSource {
    resolution: usize,
    images: Vec<Tensor<f32>>,
    paths: Vec<PathBuf>,
}

impl FolderSource {
    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

impl ImageSource for FolderSource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn resolution(&self) -> usize {
        self.resolution
    }

    fn get(&self, i: usize) -> Result<Tensor<f32>> {
        self.images
            .get(i)
            .cloned()
            .ok_or_else(|| PanError::Data(format!("image index {i} out of range for folder of {}", self.images.len())))
    }
}

/// Load every `.png` under `path` (non-recursive). Unreadable or undersized
/// files abort the run with a per-file listing unless `skip_bad` is set, in
/// which case they are dropped. An empty result is always an error.
pub fn load_folder(path: &Path, resolution: usize, skip_bad: bool) -> Result<FolderSource> {
    if resolution == 0 {
        return Err(PanError::Config("folder resolution must be positive".into()));
    }
    let entries = std::fs::read_dir(path)
        .map_err(|e| PanError::Data(format!("cannot read dataset folder {}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();

    let mut images = Vec::new();
    let mut kept = Vec::new();
    let mut problems = Vec::new();
    for file in files {
        match load_one(&file, resolution) {
            Ok(t) => {
                images.push(t);
                kept.push(file);
            }
            Err(e) => problems.push(format!("{}: {e}", file.display())),
        }
    }
    if !problems.is_empty() && !skip_bad {
        return Err(PanError::Data(format!(
            "{} unusable image(s) in {} (pass skip-bad to drop them):\n  {}",
            problems.len(),
            path.display(),
            problems.join("\n  ")
        )));
    }
    if images.is_empty() {
        return Err(PanError::Data(format!(
            "no usable PNG images in {} at resolution {resolution}",
            path.display()
        )));
    }
    Ok(FolderSource { resolution, images, paths: kept })
}

fn load_one(path: &Path, resolution: usize) -> Result<Tensor<f32>> {
    let img = read_png(path)?;
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let side = h.min(w);
    if side < resolution {
        return Err(PanError::Data(format!(
            "image is {w}x{h}, smaller than the requested resolution {resolution}"
        )));
    }
    // Center-crop to a square.
    let (y0, x0) = ((h - side) / 2, (w - side) / 2);
    let mut plane = vec![0f64; side * side];
    let mut out = Vec::with_capacity(3 * resolution * resolution);
    for c in 0..3 {
        let src = &img.data()[c * h * w..(c + 1) * h * w];
        for y in 0..side {
            for x in 0..side {
                plane[y * side + x] = src[(y0 + y) * w + x0 + x] as f64;
            }
        }
        out.extend(box_resize_plane(&plane, side, resolution).into_iter().map(|v| v as f32));
    }
    Tensor::from_vec(&[3, resolution, resolution], out)
}

/// Area-averaging resample of an `s x s` plane down to `r x r` (`s >= r`).
/// Each destination pixel averages its exact source footprint, so `s == r`
/// is the identity and `s == 2r` equals 2x2 average pooling.
fn box_resize_plane(src: &[f64], s: usize, r: usize) -> Vec<f64> {
    if s == r {
        return src.to_vec();
    }
    let scale = s as f64 / r as f64;
    let axis: Vec<Vec<(usize, f64)>> = (0..r)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut p = lo.floor() as usize;
            while (p as f64) < hi && p < s {
                let cover = hi.min(p as f64 + 1.0) - lo.max(p as f64);
                if cover > 1e-12 {
                    taps.push((p, cover));
                }
                p += 1;
            }
            taps
        })
        .collect();
    let mut tmp = vec![0f64; r * s]; // rows collapsed
    for (i, taps) in axis.iter().enumerate() {
        for x in 0..s {
            let mut acc = 0f64;
            for &(p, w) in taps {
                acc += w * src[p * s + x];
            }
            tmp[i * s + x] = acc;
        }
    }
    let mut out = vec![0f64; r * r];
    let norm = 1.0 / (scale * scale);
    for y in 0..r {
        for (j, taps) in axis.iter().enumerate() {
            let mut acc = 0f64;
            for &(p, w) in taps {
                acc += w * tmp[y * s + p];
            }
            out[y * r + j] = acc * norm;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// PNG I/O
// ---------------------------------------------------------------------------

/// Read an RGB(A) PNG into a `[3,H,W]` tensor on `[-1,1]`.
pub fn read_png(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .map_err(|e| PanError::Data(format!("cannot decode {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let mut data = vec![0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[c * h * w + y * w + x] = (raw[(y * w + x) * 3 + c] as f32) / 127.5 - 1.0;
            }
        }
    }
    Ok(Tensor::new_unchecked(vec![3, h, w], data))
}

/// Write a `[3,H,W]` tensor on `[-1,1]` as an 8-bit RGB PNG.
pub fn write_png(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let shape = img.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(PanError::Dimension {
            op: "write_png",
            detail: format!("expected [3,H,W], got {shape:?}"),
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let mut raw = vec![0u8; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = img.data()[c * h * w + y * w + x] as f64;
                raw[(y * w + x) * 3 + c] = ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let buf: image::RgbImage = image::ImageBuffer::from_raw(w as u32, h as u32, raw)
        .expect("buffer sized to dimensions");
    buf.save(path)
        .map_err(|e| PanError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
