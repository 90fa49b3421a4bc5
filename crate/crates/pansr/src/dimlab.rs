//! Distance-concentration experiment across dimensions.
//!
//! For uniform random point clouds in increasing dimension, the relative
//! gap between each point's nearest and k-th-nearest neighbor collapses
//! toward zero: per point the statistic is
//! `(dist_max - dist_min) / dist_min` over its k nearest neighbors. The
//! sweep reports the mean and, because the classic figure is ambiguous
//! about its error bars, both the std over points and the std over
//! repeats.
//!
//! Neighbor search is an exhaustive O(n^2) scan — at n = 500 any index
//! structure would cost more than it saves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PanError, Result};
use crate::net::derive_seed;
use crate::Tensor;

/// Configuration for the dimension sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DimExperimentConfig {
    /// Strictly increasing list of dimensions.
    pub dims: Vec<usize>,
    pub n_points: usize,
    /// Neighbors searched per point; derived as floor(log(n_points)) in
    /// the configured base.
    pub k_neighbors: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl DimExperimentConfig {
    /// Default experiment: d in {1, 10, 100, 1e3, 1e4, 1e5}, 500 points,
    /// k = floor(ln 500) = 6, 5 repeats.
    pub fn default_sweep(seed: u64) -> Self {
        Self::new(
            vec![1, 10, 100, 1_000, 10_000, 100_000],
            500,
            5,
            seed,
            std::f64::consts::E,
        )
        .expect("default experiment config is valid")
    }

    /// Builds a config, deriving k from `n_points` and the log base.
    pub fn new(
        dims: Vec<usize>,
        n_points: usize,
        repeats: usize,
        seed: u64,
        log_base: f64,
    ) -> Result<Self> {
        if !(log_base.is_finite() && log_base > 1.0) {
            return Err(PanError::Config(format!(
                "log base must be a finite number above 1, got {log_base}"
            )));
        }
        let k_neighbors = ((n_points as f64).ln() / log_base.ln()).floor() as usize;
        let cfg = Self { dims, n_points, k_neighbors, repeats, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || !self.dims.windows(2).all(|w| w[0] < w[1]) {
            return Err(PanError::Config(format!(
                "dims must be non-empty and strictly increasing, got {:?}",
                self.dims
            )));
        }
        if self.dims[0] == 0 {
            return Err(PanError::Config("dimension 0 is not meaningful".into()));
        }
        if self.k_neighbors < 2 || self.k_neighbors >= self.n_points {
            return Err(PanError::Config(format!(
                "need n > k >= 2, got n = {} and k = {}",
                self.n_points, self.k_neighbors
            )));
        }
        if self.repeats == 0 {
            return Err(PanError::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-point ratio statistics of one point set.
#[derive(Debug, Clone)]
pub struct RatioStats {
    /// One ratio per non-excluded point, in point order.
    pub ratios: Vec<f64>,
    pub mean: f64,
    /// Population std over points.
    pub std: f64,
    /// Points dropped because a duplicate made dist_min zero.
    pub excluded: usize,
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    pub mean_ratio: f64,
    /// Mean over repeats of the per-repeat std over points.
    pub std_points: f64,
    /// Population std over the repeats' mean ratios.
    pub std_repeats: f64,
    pub excluded: usize,
}

/// Neighbor-distance ratio per point of an `[n, d]` point set.
///
/// For each point the k nearest others (Euclidean, ties broken by point
/// index) define `dist_min` (nearest) and `dist_max` (k-th); the point
/// contributes `(dist_max - dist_min) / dist_min`. Points whose nearest
/// neighbor coincides with them are excluded and counted.
pub fn distance_ratio(points: &Tensor<f64>, k: usize) -> Result<RatioStats> {
    let shape = points.shape();
    if shape.len() != 2 {
        return Err(PanError::Dimension {
            op: "distance_ratio",
            detail: format!("expected [n, d] points, got {shape:?}"),
        });
    }
    let (n, d) = (shape[0], shape[1]);
    if k < 2 || k >= n {
        return Err(PanError::Config(format!(
            "need n > k >= 2, got n = {n} and k = {k}"
        )));
    }
    let data = points.data();
    // Pairwise squared distances, each pair computed once.
    let mut dmat = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]);
            dmat[i * n + j] = v;
            dmat[j * n + i] = v;
        }
    }
    let mut ratios = Vec::with_capacity(n);
    let mut excluded = 0usize;
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push((dmat[i * n + j], j));
            }
        }
        dists.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let dist_min = dists[0].0.sqrt();
        let dist_max = dists[k - 1].0.sqrt();
        if dist_min == 0.0 {
            excluded += 1;
            continue;
        }
        ratios.push((dist_max - dist_min) / dist_min);
    }
    if ratios.is_empty() {
        return Err(PanError::Data(
            "distance_ratio: every point was excluded as a duplicate".into(),
        ));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / ratios.len() as f64;
    Ok(RatioStats { ratios, mean, std: var.sqrt(), excluded })
}

/// Squared Euclidean distance with eight independent accumulators, which
/// breaks the add-latency chain and lets the loop vectorize.
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (pa, pb) in (&mut ca).zip(&mut cb) {
        for t in 0..8 {
            let diff = pa[t] - pb[t];
            acc[t] += diff * diff;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let diff = x - y;
        tail += diff * diff;
    }
    acc.iter().sum::<f64>() + tail
}

/// Uniform points in the unit cube for one (dimension, repeat) cell.
pub fn sample_points(cfg: &DimExperimentConfig, dim: usize, repeat: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        &format!("dimlab.d{dim}.r{repeat}"),
    ));
    let data: Vec<f64> = (0..cfg.n_points * dim).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::from_vec(&[cfg.n_points, dim], data).expect("sampled points fill their shape")
}

/// Runs the sweep: one row per dimension, averaged over repeats.
pub fn run_sweep(cfg: &DimExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.dims.len());
    for &dim in &cfg.dims {
        let mut means = Vec::with_capacity(cfg.repeats);
        let mut stds = Vec::with_capacity(cfg.repeats);
        let mut excluded = 0usize;
        for repeat in 0..cfg.repeats {
            let points = sample_points(cfg, dim, repeat);
            let stats = distance_ratio(&points, cfg.k_neighbors)?;
            means.push(stats.mean);
            stds.push(stats.std);
            excluded += stats.excluded;
        }
        let mean_ratio = means.iter().sum::<f64>() / means.len() as f64;
        let var_repeats =
            means.iter().map(|m| (m - mean_ratio) * (m - mean_ratio)).sum::<f64>()
                / means.len() as f64;
        rows.push(SweepRow {
            dim,
            mean_ratio,
            std_points: stds.iter().sum::<f64>() / stds.len() as f64,
            std_repeats: var_repeats.sqrt(),
            excluded,
        });
    }
    Ok(rows)
}

/// Renders sweep rows as CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("dim,mean_ratio,std_points,std_repeats,excluded\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{}\n",
            r.dim, r.mean_ratio, r.std_points, r.std_repeats, r.excluded
        ));
    }
    s
}
