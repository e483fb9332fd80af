//! JSON form of evaluation results.

use serde::Serialize;
use tridepth_core::metrics::{DepthMetrics, MetricsReport};

#[derive(Debug, Clone, Serialize)]
pub struct SceneJson {
    pub index: usize,
    pub scene_seed: u64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub n_pixels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportJson {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub n_pixels: usize,
    pub occlusion_masked: bool,
    pub median_scene_abs_rel: Option<f64>,
    pub scenes: Vec<SceneJson>,
}

fn fields(m: &DepthMetrics) -> (f64, f64, f64, usize) {
    (m.abs_rel, m.rmse, m.delta1, m.n_pixels)
}

impl ReportJson {
    pub fn new(report: &MetricsReport, occlusion_masked: bool) -> Self {
        let (abs_rel, rmse, delta1, n_pixels) = fields(&report.overall);
        Self {
            abs_rel,
            rmse,
            delta1,
            n_pixels,
            occlusion_masked,
            median_scene_abs_rel: report.median_scene_abs_rel(),
            scenes: report
                .scenes
                .iter()
                .map(|s| {
                    let (abs_rel, rmse, delta1, n_pixels) = fields(&s.metrics);
                    SceneJson {
                        index: s.index,
                        scene_seed: s.scene_seed,
                        abs_rel,
                        rmse,
                        delta1,
                        n_pixels,
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
