//! Online random image degradation: blur, downsample, noise, JPEG surrogate.
//!
//! Low-quality inputs are modeled as `jpeg((x (*) k (*) b) v s + n)`: an
//! aperture blur `k` (isotropic Gaussian), a handshake blur `b` (linear
//! motion kernel), box downsampling by `s`, additive Gaussian noise, and a
//! quantized-DCT stand-in for JPEG compression. Every image draws its own
//! parameters from the configured ranges, seeded by `(seed, image index)`,
//! so results never depend on batch composition or worker scheduling.
//!
//! The JPEG stage is a surrogate, not a codec: per 8x8 block it quantizes
//! DCT coefficients against the standard luminance table scaled by the
//! usual quality curve, then reconstructs. That reproduces the
//! training-relevant artifact (quantization blockiness) while staying
//! deterministic and dependency-free; there is no entropy coding and no
//! chroma subsampling. Like a real codec it works on 8-bit samples:
//! planes are rounded to the 0..255 grid on entry and the reconstruction
//! is rounded back to it, which keeps the quality-100 round-trip within
//! one 8-bit level of grid-aligned input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{PanError, Result};
use crate::net::derive_seed;
use crate::tensor::Tensor;

/// Point-spread-function families for [`make_psf`].
#[derive(Debug, Clone, Copy)]
pub enum PsfKind {
    Gaussian { sigma: f64 },
    Motion { length: f64, angle: f64 },
}

/// Sampling ranges for the random degradation, plus the integer downsampling
/// factor and the seed that fixes every draw.
#[derive(Debug, Clone)]
pub struct DegradationParams {
    /// Aperture blur sigma range, in pixels. Must be positive.
    pub sigma: (f64, f64),
    /// Handshake blur length range, in pixels.
    pub motion_len: (f64, f64),
    /// Additive Gaussian noise sigma range, on the [-1,1] pixel scale.
    pub noise_sigma: (f64, f64),
    /// JPEG-surrogate quality range, or `None` to skip the stage entirely.
    pub quality: Option<(u8, u8)>,
    /// Integer downsampling factor (1 = keep resolution).
    pub scale: usize,
    pub seed: u64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        DegradationParams {
            sigma: (0.2, 3.0),
            motion_len: (0.0, 5.0),
            noise_sigma: (0.0, 0.05),
            quality: Some((30, 95)),
            scale: 1,
            seed: 0,
        }
    }
}

impl DegradationParams {
    /// The near-no-op configuration: vanishing blur, no motion, no noise,
    /// quality-100 JPEG. Only the JPEG rounding survives, bounded by 2/255.
    pub fn identity(seed: u64) -> Self {
        DegradationParams {
            sigma: (1e-9, 1e-9),
            motion_len: (0.0, 0.0),
            noise_sigma: (0.0, 0.0),
            quality: Some((100, 100)),
            scale: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.sigma.0, self.sigma.1) || self.sigma.0 <= 0.0 {
            return Err(PanError::Config(format!(
                "sigma range must be positive and ordered, got {:?}",
                self.sigma
            )));
        }
        if !ordered(self.motion_len.0, self.motion_len.1) || self.motion_len.0 < 0.0 {
            return Err(PanError::Config(format!(
                "motion length range must be non-negative and ordered, got {:?}",
                self.motion_len
            )));
        }
        if !ordered(self.noise_sigma.0, self.noise_sigma.1) || self.noise_sigma.0 < 0.0 {
            return Err(PanError::Config(format!(
                "noise sigma range must be non-negative and ordered, got {:?}",
                self.noise_sigma
            )));
        }
        if let Some((lo, hi)) = self.quality {
            if lo > hi || lo < 10 || hi > 100 {
                return Err(PanError::Config(format!(
                    "quality range must lie in [10,100] and be ordered, got {lo}..{hi}"
                )));
            }
        }
        if self.scale == 0 {
            return Err(PanError::Config("scale must be at least 1".into()));
        }
        Ok(())
    }
}

/// The values one image actually drew; written to sidecar manifests so a
/// degraded set can be reproduced or audited.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawnParams {
    pub index: u64,
    pub sigma: f64,
    pub motion_len: f64,
    pub motion_angle: f64,
    pub noise_sigma: f64,
    pub quality: Option<u8>,
}

impl DrawnParams {
    pub fn manifest_line(&self) -> String {
        format!(
            "index={} sigma={} motion_len={} motion_angle={} noise_sigma={} quality={}",
            self.index,
            self.sigma,
            self.motion_len,
            self.motion_angle,
            self.noise_sigma,
            self.quality.map_or_else(|| "off".to_string(), |q| q.to_string()),
        )
    }
}

/// Build a normalized discrete PSF.
///
/// Gaussians are truncated at three sigma; motion kernels rasterize a line
/// segment of the given length through the kernel center with bilinear
/// weights (length 0 collapses to the 1x1 identity).
pub fn make_psf(kind: PsfKind) -> Result<Tensor<f32>> {
    match kind {
        PsfKind::Gaussian { sigma } => {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(PanError::Config(format!("gaussian sigma must be positive, got {sigma}")));
            }
            let radius = ((3.0 * sigma).ceil() as usize).min(64);
            let k = 2 * radius + 1;
            let mut w = vec![0f64; k * k];
            let mut sum = 0f64;
            for y in 0..k {
                for x in 0..k {
                    let (dx, dy) = (x as f64 - radius as f64, y as f64 - radius as f64);
                    let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                    w[y * k + x] = v;
                    sum += v;
                }
            }
            let data: Vec<f32> = w.iter().map(|v| (v / sum) as f32).collect();
            Ok(Tensor::new_unchecked(vec![k, k], data))
        }
        PsfKind::Motion { length, angle } => {
            if length < 0.0 || !length.is_finite() || !angle.is_finite() {
                return Err(PanError::Config(format!(
                    "motion kernel needs finite length >= 0 and angle, got {length}, {angle}"
                )));
            }
            if length < 1e-12 {
                return Ok(Tensor::new_unchecked(vec![1, 1], vec![1.0]));
            }
            let radius = ((length / 2.0).ceil() as usize).min(64);
            let k = 2 * radius + 1;
            let mut w = vec![0f64; k * k];
            let (dx, dy) = (angle.cos(), angle.sin());
            let steps = ((length * 16.0).ceil() as usize).max(2);
            for i in 0..steps {
                let t = -length / 2.0 + length * i as f64 / (steps - 1) as f64;
                let (x, y) = (t * dx + radius as f64, t * dy + radius as f64);
                let (x0, y0) = (x.floor(), y.floor());
                let (fx, fy) = (x - x0, y - y0);
                for (cx, cy, wt) in [
                    (x0, y0, (1.0 - fx) * (1.0 - fy)),
                    (x0 + 1.0, y0, fx * (1.0 - fy)),
                    (x0, y0 + 1.0, (1.0 - fx) * fy),
                    (x0 + 1.0, y0 + 1.0, fx * fy),
                ] {
                    if wt > 0.0 && (0.0..k as f64).contains(&cx) && (0.0..k as f64).contains(&cy) {
                        w[cy as usize * k + cx as usize] += wt;
                    }
                }
            }
            let sum: f64 = w.iter().sum();
            let data: Vec<f32> = w.iter().map(|v| (v / sum) as f32).collect();
            Ok(Tensor::new_unchecked(vec![k, k], data))
        }
    }
}

/// Mirror an out-of-range index back into `[0, n)` without repeating the
/// edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let p = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(p);
    if i >= n as isize {
        i = p - i;
    }
    i as usize
}

/// Plane convolution with reflect padding; `k` is odd-sided.
fn conv_reflect(src: &[f32], h: usize, w: usize, kernel: &[f32], k: usize) -> Vec<f32> {
    if k == 1 {
        let scale = kernel[0] as f64;
        return src.iter().map(|&v| (v as f64 * scale) as f32).collect();
    }
    let r = (k - 1) / 2;
    let mut out = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f64;
            for ky in 0..k {
                let sy = reflect(y as isize + ky as isize - r as isize, h);
                for kx in 0..k {
                    let sx = reflect(x as isize + kx as isize - r as isize, w);
                    acc += kernel[ky * k + kx] as f64 * src[sy * w + sx] as f64;
                }
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

fn box_down(src: &[f32], h: usize, w: usize, s: usize) -> Vec<f32> {
    if s == 1 {
        return src.to_vec();
    }
    let (ho, wo) = (h / s, w / s);
    let mut out = vec![0f32; ho * wo];
    let inv = 1.0 / (s * s) as f64;
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0f64;
            for dy in 0..s {
                for dx in 0..s {
                    acc += src[(y * s + dy) * w + x * s + dx] as f64;
                }
            }
            out[y * wo + x] = (acc * inv) as f32;
        }
    }
    out
}

/// The standard luminance quantization table.
const LUMA_TABLE: [u32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn quality_table(quality: u8) -> [f64; 64] {
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0f64; 64];
    for (o, &base) in out.iter_mut().zip(&LUMA_TABLE) {
        *o = ((base * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// Orthonormal 8-point DCT-II matrix.
fn dct_matrix() -> [[f64; 8]; 8] {
    let mut c = [[0f64; 8]; 8];
    for (k, row) in c.iter_mut().enumerate() {
        let norm = if k == 0 { (1.0 / 8.0f64).sqrt() } else { (2.0 / 8.0f64).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = norm * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
}

/// Quantized-DCT compression surrogate. Needs spatial dims divisible by 8;
/// operates per channel plane on the 8-bit 0..255 grid, so input already on
/// that grid (e.g. decoded from PNG) round-trips at quality 100 within one
/// level, i.e. 2/255 on the [-1,1] scale.
pub fn jpeg_surrogate(x: &Tensor<f32>, quality: u8) -> Result<Tensor<f32>> {
    if !(10..=100).contains(&quality) {
        return Err(PanError::Config(format!("jpeg quality must lie in [10,100], got {quality}")));
    }
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(PanError::Geometry {
            op: "jpeg_surrogate",
            detail: format!("need at least [H,W], got {shape:?}"),
        });
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h % 8 != 0 || w % 8 != 0 {
        return Err(PanError::Geometry {
            op: "jpeg_surrogate",
            detail: format!("spatial dims must be multiples of 8, got {h}x{w}"),
        });
    }
    let planes = x.len() / (h * w);
    let tbl = quality_table(quality);
    let c = dct_matrix();
    let mut data = x.data().to_vec();
    let mut block = [[0f64; 8]; 8];
    for p in 0..planes {
        let plane = &mut data[p * h * w..(p + 1) * h * w];
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                for y in 0..8 {
                    for xx in 0..8 {
                        let v = (plane[(by + y) * w + bx + xx] as f64 + 1.0) * 127.5;
                        block[y][xx] = v.round().clamp(0.0, 255.0);
                    }
                }
                let f = mat8(&c, &block, false);
                let mut q = [[0f64; 8]; 8];
                for y in 0..8 {
                    for xx in 0..8 {
                        let step = tbl[y * 8 + xx];
                        q[y][xx] = (f[y][xx] / step).round() * step;
                    }
                }
                let rec = mat8(&c, &q, true);
                for y in 0..8 {
                    for xx in 0..8 {
                        let v = rec[y][xx].round().clamp(0.0, 255.0);
                        plane[(by + y) * w + bx + xx] = (v / 127.5 - 1.0) as f32;
                    }
                }
            }
        }
    }
    Ok(Tensor::new_unchecked(shape.to_vec(), data))
}

/// `C m C^T` (forward DCT) or `C^T m C` (inverse) for one 8x8 block.
fn mat8(c: &[[f64; 8]; 8], m: &[[f64; 8]; 8], inverse: bool) -> [[f64; 8]; 8] {
    let mut tmp = [[0f64; 8]; 8];
    let mut out = [[0f64; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = 0f64;
            for k in 0..8 {
                acc += if inverse { c[k][i] * m[k][j] } else { c[i][k] * m[k][j] };
            }
            tmp[i][j] = acc;
        }
    }
    for i in 0..8 {
        for j in 0..8 {
            let mut acc = 0f64;
            for k in 0..8 {
                acc += if inverse { tmp[i][k] * c[k][j] } else { tmp[i][k] * c[j][k] };
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Degrade one `[C,H,W]` image. `index` seeds this image's parameter draws
/// and noise, so the result is a pure function of `(img, params, index)`.
pub fn degrade_image(img: &Tensor<f32>, p: &DegradationParams, index: u64) -> Result<(Tensor<f32>, DrawnParams)> {
    p.validate()?;
    let shape = img.shape();
    if shape.len() != 3 {
        return Err(PanError::Geometry {
            op: "degrade",
            detail: format!("expected [C,H,W], got {shape:?}"),
        });
    }
    let (ch, h, w) = (shape[0], shape[1], shape[2]);
    if h % p.scale != 0 || w % p.scale != 0 {
        return Err(PanError::Geometry {
            op: "degrade",
            detail: format!("spatial dims {h}x{w} not divisible by scale {}", p.scale),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(p.seed, &format!("degrade.img{index}")));
    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let sigma = draw(p.sigma);
    let motion_len = draw(p.motion_len);
    let motion_angle = draw((0.0, std::f64::consts::PI));
    let noise_sigma = draw(p.noise_sigma);
    let quality = p.quality.map(|(lo, hi)| rng.random_range(lo..=hi));
    let drawn = DrawnParams { index, sigma, motion_len, motion_angle, noise_sigma, quality };

    let aperture = make_psf(PsfKind::Gaussian { sigma })?;
    let handshake = make_psf(PsfKind::Motion { length: motion_len, angle: motion_angle })?;
    let (ho, wo) = (h / p.scale, w / p.scale);
    let mut out = Vec::with_capacity(ch * ho * wo);
    for c in 0..ch {
        let plane = &img.data()[c * h * w..(c + 1) * h * w];
        let blurred = conv_reflect(plane, h, w, aperture.data(), aperture.shape()[0]);
        let blurred = conv_reflect(&blurred, h, w, handshake.data(), handshake.shape()[0]);
        out.extend(box_down(&blurred, h, w, p.scale));
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("validated sigma");
        for v in &mut out {
            *v = (*v as f64 + normal.sample(&mut rng)) as f32;
        }
    }
    let mut t = Tensor::new_unchecked(vec![ch, ho, wo], out);
    if let Some(q) = quality {
        t = jpeg_surrogate(&t, q)?;
    }
    let clamped: Vec<f32> = t.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    Ok((Tensor::new_unchecked(vec![ch, ho, wo], clamped), drawn))
}

/// Degrade an `[N,C,H,W]` batch; `indices[i]` seeds image `i` so the output
/// never depends on how a dataset was split into batches.
pub fn degrade_batch(
    x: &Tensor<f32>,
    p: &DegradationParams,
    indices: &[u64],
) -> Result<(Tensor<f32>, Vec<DrawnParams>)> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(PanError::Geometry {
            op: "degrade",
            detail: format!("expected [N,C,H,W], got {shape:?}"),
        });
    }
    if indices.len() != shape[0] {
        return Err(PanError::Dimension {
            op: "degrade",
            detail: format!("{} indices for a batch of {}", indices.len(), shape[0]),
        });
    }
    let (n, ch, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut data = Vec::with_capacity(x.len() / (p.scale * p.scale));
    let mut drawn = Vec::with_capacity(n);
    let mut out_hw = (h, w);
    for i in 0..n {
        let img = Tensor::new_unchecked(
            vec![ch, h, w],
            x.data()[i * ch * h * w..(i + 1) * ch * h * w].to_vec(),
        );
        let (d, params) = degrade_image(&img, p, indices[i])?;
        out_hw = (d.shape()[1], d.shape()[2]);
        data.extend_from_slice(d.data());
        drawn.push(params);
    }
    Ok((Tensor::new_unchecked(vec![n, ch, out_hw.0, out_hw.1], data), drawn))
}
