//! Depth accuracy against ground truth.

use alloc::vec::Vec;

/// Threshold of the `delta1` accuracy, applied with a strict inequality.
pub const DELTA1_THRESHOLD: f64 = 1.25;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub n_pixels: usize,
}

/// Running sums behind [`DepthMetrics`], so scenes can be pooled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    abs_rel_sum: f64,
    sq_sum: f64,
    delta1_hits: usize,
    n: usize,
}

impl MetricsAccumulator {
    pub fn add(&mut self, pred: f64, gt: f64) {
        self.abs_rel_sum += (pred - gt).abs() / gt;
        self.sq_sum += (pred - gt) * (pred - gt);
        if (pred / gt).max(gt / pred) < DELTA1_THRESHOLD {
            self.delta1_hits += 1;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.abs_rel_sum += other.abs_rel_sum;
        self.sq_sum += other.sq_sum;
        self.delta1_hits += other.delta1_hits;
        self.n += other.n;
    }

    pub fn finish(&self) -> DepthMetrics {
        if self.n == 0 {
            return DepthMetrics::default();
        }
        let n = self.n as f64;
        DepthMetrics {
            abs_rel: self.abs_rel_sum / n,
            rmse: libm::sqrt(self.sq_sum / n),
            delta1: self.delta1_hits as f64 / n,
            n_pixels: self.n,
        }
    }
}

/// Metrics over pixels where `mask` is non-zero (all pixels without a mask).
pub fn depth_metrics(pred: &[f32], gt: &[f32], mask: Option<&[f32]>) -> DepthMetrics {
    accumulate(pred, gt, mask).finish()
}

pub fn accumulate(pred: &[f32], gt: &[f32], mask: Option<&[f32]>) -> MetricsAccumulator {
    let mut acc = MetricsAccumulator::default();
    for (i, (&p, &z)) in pred.iter().zip(gt).enumerate() {
        if mask.is_some_and(|m| m[i] == 0.0) {
            continue;
        }
        acc.add(p as f64, z as f64);
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMetrics {
    pub index: usize,
    pub scene_seed: u64,
    pub metrics: DepthMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Pooled over every evaluated pixel of every scene.
    pub overall: DepthMetrics,
    pub scenes: Vec<SceneMetrics>,
}

impl MetricsReport {
    /// Median of the per-scene `abs_rel` values.
    pub fn median_scene_abs_rel(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.scenes.iter().map(|s| s.metrics.abs_rel).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}
