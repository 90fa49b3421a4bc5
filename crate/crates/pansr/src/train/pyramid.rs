//! The coarse-to-fine data pyramid.
//!
//! Targets at every phase resolution come from repeated 2x2 average pooling
//! of the HR batch, so `pool(target at 2r) == target at r` holds by
//! construction. Low-resolution inputs are the HR batch pooled down to the
//! generator's input resolution, optionally passed through the random
//! degradation, then pooled further for phases below the input resolution —
//! which makes the generator's input-side fade an exact identity at
//! `alpha = 0`.

use std::collections::BTreeMap;

use crate::degrade::{degrade_batch, DegradationParams, DrawnParams};
use crate::error::{PanError, Result};
use crate::tensor::{ops, Tensor};

/// Per-resolution training pairs for one HR batch.
pub struct DataPyramid {
    input_res: usize,
    /// resolution -> (lr input at `min(r, input_res)`, target at `r`).
    levels: BTreeMap<usize, (Tensor<f32>, Tensor<f32>)>,
    drawn: Vec<DrawnParams>,
}

impl DataPyramid {
    pub fn input_res(&self) -> usize {
        self.input_res
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.levels.keys().copied().collect()
    }

    /// Generator input for the phase at resolution `r`.
    pub fn lr_at(&self, r: usize) -> Result<&Tensor<f32>> {
        self.levels
            .get(&r)
            .map(|(lr, _)| lr)
            .ok_or_else(|| PanError::Config(format!("pyramid has no level at resolution {r}")))
    }

    /// Real/target batch for the phase at resolution `r`.
    pub fn target_at(&self, r: usize) -> Result<&Tensor<f32>> {
        self.levels
            .get(&r)
            .map(|(_, t)| t)
            .ok_or_else(|| PanError::Config(format!("pyramid has no level at resolution {r}")))
    }

    /// Degradation parameters drawn per image (empty when degradation off).
    pub fn drawn(&self) -> &[DrawnParams] {
        &self.drawn
    }

    /// Gather `indices` from both tensors of level `r` into batch pairs.
    pub fn batch_at(&self, r: usize, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        Ok((gather(self.lr_at(r)?, indices)?, gather(self.target_at(r)?, indices)?))
    }
}

/// Select rows of an `[N,C,H,W]` tensor.
pub fn gather(x: &Tensor<f32>, indices: &[usize]) -> Result<Tensor<f32>> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(PanError::Dimension {
            op: "gather",
            detail: format!("expected [N,C,H,W], got {shape:?}"),
        });
    }
    let row = shape[1] * shape[2] * shape[3];
    let mut data = Vec::with_capacity(indices.len() * row);
    for &i in indices {
        if i >= shape[0] {
            return Err(PanError::Data(format!("index {i} out of range for batch of {}", shape[0])));
        }
        data.extend_from_slice(&x.data()[i * row..(i + 1) * row]);
    }
    Tensor::from_vec(&[indices.len(), shape[1], shape[2], shape[3]], data)
}

/// Build the pyramid for one `[N,3,R,R]` HR batch.
///
/// `resolutions` lists the phase resolutions (strictly doubling, ending at
/// the HR resolution). `indices[i]` is image `i`'s stable dataset index,
/// which seeds its degradation draws — results never depend on batch
/// composition. Pass `degrade = None` for the clean pooling-only chain.
pub fn build_pyramid(
    hr: &Tensor<f32>,
    input_res: usize,
    degrade: Option<&DegradationParams>,
    indices: &[u64],
    resolutions: &[usize],
) -> Result<DataPyramid> {
    let shape = hr.shape();
    if shape.len() != 4 || shape[2] != shape[3] {
        return Err(PanError::Geometry {
            op: "build_pyramid",
            detail: format!("expected square [N,C,R,R] batch, got {shape:?}"),
        });
    }
    let out_res = shape[2];
    if resolutions.is_empty() || *resolutions.last().unwrap() != out_res {
        return Err(PanError::Geometry {
            op: "build_pyramid",
            detail: format!("resolutions {resolutions:?} must end at the HR resolution {out_res}"),
        });
    }
    for pair in resolutions.windows(2) {
        if pair[1] != pair[0] * 2 {
            return Err(PanError::Geometry {
                op: "build_pyramid",
                detail: format!("resolutions must strictly double, got {} then {}", pair[0], pair[1]),
            });
        }
    }
    let min_res = resolutions[0];
    if !min_res.is_power_of_two() || min_res < 1 {
        return Err(PanError::Geometry {
            op: "build_pyramid",
            detail: format!("bad minimum resolution {min_res}"),
        });
    }
    if !(min_res..=out_res).contains(&input_res) || !input_res.is_power_of_two() {
        return Err(PanError::Geometry {
            op: "build_pyramid",
            detail: format!("input resolution {input_res} outside pyramid range {min_res}..={out_res}"),
        });
    }
    if let Some(p) = degrade {
        if p.scale != 1 {
            return Err(PanError::Config(format!(
                "pyramid degradation must keep resolution (scale 1), got scale {}",
                p.scale
            )));
        }
        if indices.len() != shape[0] {
            return Err(PanError::Dimension {
                op: "build_pyramid",
                detail: format!("{} image indices for a batch of {}", indices.len(), shape[0]),
            });
        }
    }

    // Targets: repeated 2x2 mean pooling down to the smallest phase.
    let mut targets: BTreeMap<usize, Tensor<f32>> = BTreeMap::new();
    let mut cur = hr.clone();
    targets.insert(out_res, cur.clone());
    let mut r = out_res;
    while r > min_res {
        cur = ops::avg_pool_2x(&cur)?;
        r /= 2;
        targets.insert(r, cur.clone());
    }

    // LR inputs: pool HR to input_res, degrade there, pool further below.
    let mut lr = hr.clone();
    let mut r = out_res;
    while r > input_res {
        lr = ops::avg_pool_2x(&lr)?;
        r /= 2;
    }
    let mut drawn = Vec::new();
    if let Some(p) = degrade {
        let (d, dr) = degrade_batch(&lr, p, indices)?;
        lr = d;
        drawn = dr;
    }
    let mut lr_levels: BTreeMap<usize, Tensor<f32>> = BTreeMap::new();
    lr_levels.insert(input_res, lr.clone());
    while r > min_res {
        lr = ops::avg_pool_2x(&lr)?;
        r /= 2;
        lr_levels.insert(r, lr.clone());
    }

    let levels = resolutions
        .iter()
        .map(|&r| {
            let input = lr_levels.get(&r.min(input_res)).expect("constructed above").clone();
            let target = targets.get(&r).expect("constructed above").clone();
            (r, (input, target))
        })
        .collect();
    Ok(DataPyramid { input_res, levels, drawn })
}
