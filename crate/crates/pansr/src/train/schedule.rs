//! Resolution phase schedules: which resolutions train, for how long, at
//! what learning rate and batch size.

use std::collections::BTreeMap;

use crate::error::{PanError, Result};

/// The coarse-to-fine phase plan. One phase per resolution; each phase runs
/// `iters_fade + iters_stabilize` iterations (the first phase has nothing to
/// fade from, so it trains at full alpha for the same length).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub resolutions: Vec<usize>,
    pub iters_stabilize: usize,
    pub iters_fade: usize,
    pub lr_table: BTreeMap<usize, f64>,
    pub batch_table: BTreeMap<usize, usize>,
    pub seed: u64,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(PanError::Config("schedule needs at least one resolution".into()));
        }
        for pair in self.resolutions.windows(2) {
            if pair[1] != pair[0] * 2 {
                return Err(PanError::Config(format!(
                    "resolutions must strictly double, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.resolutions[0] < 8 || !self.resolutions[0].is_power_of_two() {
            return Err(PanError::Config(format!(
                "first resolution must be a power of two >= 8, got {}",
                self.resolutions[0]
            )));
        }
        if self.iters_stabilize == 0 || self.iters_fade == 0 {
            return Err(PanError::Config(
                "iters_stabilize and iters_fade must both be at least 1".into(),
            ));
        }
        for &r in &self.resolutions {
            let lr = self.lr(r)?;
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(PanError::Config(format!("learning rate at {r} must be positive, got {lr}")));
            }
            if self.batch(r)? == 0 {
                return Err(PanError::Config(format!("batch size at {r} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn lr(&self, res: usize) -> Result<f64> {
        self.lr_table
            .get(&res)
            .copied()
            .ok_or_else(|| PanError::Config(format!("no learning rate entry for resolution {res}")))
    }

    pub fn batch(&self, res: usize) -> Result<usize> {
        self.batch_table
            .get(&res)
            .copied()
            .ok_or_else(|| PanError::Config(format!("no batch size entry for resolution {res}")))
    }

    pub fn output_res(&self) -> usize {
        *self.resolutions.last().expect("validated non-empty")
    }

    /// Iterations in one phase. Every phase has the same length; the first
    /// phase spends its fade window at full alpha instead of fading.
    pub fn phase_len(&self) -> usize {
        self.iters_fade + self.iters_stabilize
    }

    pub fn total_iters(&self) -> usize {
        self.phase_len() * self.resolutions.len()
    }
}

/// Linear fade-in weight at `iter_in_phase` of a phase with `iters_fade`
/// fading iterations: `min(1, iter / fade)`. Zero at the first iteration.
pub fn alpha_at(iter_in_phase: usize, iters_fade: usize) -> f64 {
    debug_assert!(iters_fade >= 1);
    (iter_in_phase as f64 / iters_fade as f64).min(1.0)
}

/// The verbatim full-scale schedule: resolutions 8 through 1024, 600k
/// iterations to stabilize and another 600k to fade at each phase, learning
/// rate stepping up at 128, and batch sizes shrinking as resolution grows.
pub fn paper_schedule() -> TrainSchedule {
    let resolutions: Vec<usize> = (3..=10).map(|p| 1usize << p).collect();
    let mut lr_table = BTreeMap::new();
    let mut batch_table = BTreeMap::new();
    for &r in &resolutions {
        lr_table.insert(
            r,
            match r {
                8..=64 => 0.001,
                128 => 0.0015,
                256 => 0.002,
                _ => 0.003,
            },
        );
        batch_table.insert(
            r,
            match r {
                8 => 64,
                16 => 32,
                32 => 16,
                64 => 8,
                _ => 4,
            },
        );
    }
    TrainSchedule {
        resolutions,
        iters_stabilize: 600_000,
        iters_fade: 600_000,
        lr_table,
        batch_table,
        seed: 0,
    }
}

/// The desk-scale schedule used by the default config and the end-to-end
/// tests: 8 through 64, 2000 + 2000 iterations per phase, flat learning
/// rate and batch size.
pub fn desk_schedule(seed: u64) -> TrainSchedule {
    let resolutions = vec![8, 16, 32, 64];
    let lr_table = resolutions.iter().map(|&r| (r, 0.001)).collect();
    let batch_table = resolutions.iter().map(|&r| (r, 16)).collect();
    TrainSchedule {
        resolutions,
        iters_stabilize: 2000,
        iters_fade: 2000,
        lr_table,
        batch_table,
        seed,
    }
}
