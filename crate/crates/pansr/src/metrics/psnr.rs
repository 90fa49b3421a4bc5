//! Peak signal-to-noise ratio on 8-bit-quantized RGB.
//!
//! Both images are snapped to the 0..255 integer grid first, matching what
//! a PNG round trip would store, so the score reflects the files a viewer
//! would actually compare. Identical images produce `f64::INFINITY`; report
//! writers cap the sentinel at [`PSNR_CAP_DB`].

use crate::error::{PanError, Result};
use crate::metrics::image_batch_dims;
use crate::Tensor;

/// Cap applied to the +inf sentinel when PSNR is written to a report.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Per-image PSNR in dB between two equal-shape batches.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Vec<f64>> {
    let (n, h, w) = image_batch_dims(a, "psnr")?;
    if a.shape() != b.shape() {
        return Err(PanError::Dimension {
            op: "psnr",
            detail: format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let (da, db) = (a.data(), b.data());
    let per_image = 3 * h * w;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sq = 0.0f64;
        for p in 0..per_image {
            let qa = quantize(da[i * per_image + p]);
            let qb = quantize(db[i * per_image + p]);
            let d = qa - qb;
            sq += d * d;
        }
        let mse = sq / per_image as f64;
        out.push(if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0 * 255.0 / mse).log10()
        });
    }
    Ok(out)
}

fn quantize(v: f32) -> f64 {
    ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor;

    #[test]
    fn identical_images_hit_the_sentinel() {
        let x = tensor::rand_uniform::<f32>(&[2, 3, 8, 8], -1.0, 1.0, 5);
        let scores = psnr(&x, &x).unwrap();
        assert!(scores.iter().all(|s| s.is_infinite()), "{scores:?}");
    }

    #[test]
    fn uniform_one_level_difference_is_the_analytic_value() {
        // A constant offset of exactly one 8-bit level gives MSE 1, so
        // PSNR = 10*log10(255^2) = 48.1308...
        let a = Tensor::zeros(&[1, 3, 8, 8]);
        let b = Tensor::full(&[1, 3, 8, 8], 1.0f32 / 127.5);
        let scores = psnr(&a, &b).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0).log10();
        assert!((scores[0] - expected).abs() < 1e-9, "{} vs {expected}", scores[0]);
    }

    #[test]
    fn decreases_as_noise_amplitude_grows() {
        let base = tensor::rand_uniform::<f32>(&[1, 3, 16, 16], -0.5, 0.5, 11);
        let mut last = f64::INFINITY;
        for amp in [0.02f32, 0.05, 0.1, 0.2] {
            let noise = tensor::rand_uniform::<f32>(&[1, 3, 16, 16], -1.0, 1.0, 13);
            let noisy = Tensor::from_vec(
                &[1, 3, 16, 16],
                base.data()
                    .iter()
                    .zip(noise.data().iter())
                    .map(|(&x, &e)| x + amp * e)
                    .collect(),
            )
            .unwrap();
            let s = psnr(&base, &noisy).unwrap()[0];
            assert!(s < last, "psnr {s} did not drop below {last} at amp {amp}");
            last = s;
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let a = Tensor::zeros(&[1, 3, 8, 8]);
        let b = Tensor::zeros(&[1, 3, 8, 4]);
        assert!(psnr(&a, &b).is_err());
    }
}
