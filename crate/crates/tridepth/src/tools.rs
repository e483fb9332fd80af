//! File-level evaluation, inference and warping used by the command line.

use std::path::Path;

use tridepth_core::metrics::MetricsReport;
use tridepth_core::nets;
use tridepth_core::train;
use tridepth_core::warp::{self, CameraRig, Direction};
use tridepth_core::Tensor;

use crate::checkpoint::{self, Checkpoint};
use crate::dataset;
use crate::error::{Error, Result};
use crate::images;
use crate::pfm::{self, FloatMap};

/// Scores a checkpoint's generator on every scene of a dataset.
pub fn evaluate(checkpoint_dir: &Path, data_dir: &Path, occlusion_masked: bool) -> Result<MetricsReport> {
    let ckpt = checkpoint::load(checkpoint_dir)?;
    let (manifest, records) = dataset::read_dataset(data_dir)?;
    let rig = manifest.rig.to_rig()?;
    if rig != ckpt.rig {
        return Err(Error::Mismatch(format!(
            "dataset rig {:?} differs from the checkpoint rig {:?}",
            rig, ckpt.rig
        )));
    }
    Ok(train::evaluate(
        &ckpt.trainer.models.generator,
        &records,
        ckpt.trainer.cfg.d_max_frac,
        occlusion_masked,
    )?)
}

/// Nearest-rank percentile of `values` for `q` in `[0, 1]`.
pub fn percentile(values: &[f32], q: f64) -> f32 {
    let mut v: Vec<f32> = values.to_vec();
    v.sort_by(f32::total_cmp);
    let idx = (q * (v.len() - 1) as f64).round() as usize;
    v[idx]
}

/// 8-bit grayscale preview of a depth map: the 5th percentile maps to white
/// (near), the 95th to black (far), values beyond are clamped.
pub fn depth_preview(depth: &[f32]) -> Vec<u8> {
    let lo = percentile(depth, 0.05) as f64;
    let hi = percentile(depth, 0.95) as f64;
    depth
        .iter()
        .map(|&z| {
            if hi <= lo {
                return 128;
            }
            let t = ((z as f64 - lo) / (hi - lo)).clamp(0.0, 1.0);
            (255.0 * (1.0 - t)).round() as u8
        })
        .collect()
}

/// Rig for a standalone image: principal point at the image center.
fn rig_for(focal: f64, baseline: f64, width: usize, height: usize) -> Result<CameraRig> {
    let rig = CameraRig {
        focal_px: focal,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        baseline,
        width,
        height,
    };
    if !(focal > 0.0 && baseline > 0.0 && focal.is_finite() && baseline.is_finite()) {
        return Err(Error::Invalid(format!("focal {} and baseline {} must be positive", focal, baseline)));
    }
    Ok(rig)
}

pub struct Inference {
    pub depth: FloatMap,
    pub preview: Vec<u8>,
}

/// Depth of one center image with the checkpoint's generator. `focal` and
/// `baseline` default to the rig the checkpoint was trained on.
pub fn infer(ckpt: &Checkpoint, image: &Tensor<f32>, focal: Option<f64>, baseline: Option<f64>) -> Result<Inference> {
    let (_, _, h, w) = image.dims4()?;
    if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
        return Err(Error::Invalid(format!("image size {}x{} must be a non-zero multiple of 16", w, h)));
    }
    let rig = rig_for(
        focal.unwrap_or(ckpt.rig.focal_px),
        baseline.unwrap_or(ckpt.rig.baseline),
        w,
        h,
    )?;
    let d_max = ckpt.trainer.cfg.d_max_frac * w as f64;
    let disp = nets::predict_disparity(&ckpt.trainer.models.generator, image, d_max)?;
    let depth = warp::disparity_to_depth_values(&disp, &rig).into_data();
    Ok(Inference {
        preview: depth_preview(&depth),
        depth: FloatMap {
            width: w,
            height: h,
            data: depth,
        },
    })
}

pub fn infer_files(
    checkpoint_dir: &Path,
    image: &Path,
    out: &Path,
    viz: Option<&Path>,
    focal: Option<f64>,
    baseline: Option<f64>,
) -> Result<Inference> {
    let img = images::read_rgb(image)?;
    let ckpt = checkpoint::load(checkpoint_dir)?;
    let result = infer(&ckpt, &img, focal, baseline)?;
    pfm::write(out, &result.depth)?;
    if let Some(viz) = viz {
        images::write_gray(viz, result.depth.width, result.depth.height, &result.preview)?;
    }
    Ok(result)
}

/// Side view synthesized from a center image and its depth map, with the
/// sampling-validity mask as `{0, 255}` bytes.
pub fn warp_view(
    center: &Tensor<f32>,
    depth: &FloatMap,
    direction: Direction,
    focal: f64,
    baseline: f64,
) -> Result<(Tensor<f32>, Vec<u8>)> {
    let (_, _, h, w) = center.dims4()?;
    if (depth.width, depth.height) != (w, h) {
        return Err(Error::Invalid(format!(
            "depth is {}x{} but the image is {}x{}",
            depth.width, depth.height, w, h
        )));
    }
    let rig = rig_for(focal, baseline, w, h)?;
    let z = Tensor::new(&[1, 1, h, w], depth.data.clone())?;
    let disp = warp::depth_to_disparity_values(&z, &rig)?;
    let (out, mask) = warp::synthesize_view_values(center, &disp, direction)?;
    let mask = mask.tensor().data().iter().map(|&m| if m > 0.0 { 255 } else { 0 }).collect();
    Ok((out, mask))
}

pub fn warp_files(
    center: &Path,
    depth: &Path,
    direction: Direction,
    focal: f64,
    baseline: f64,
    out: &Path,
    mask: Option<&Path>,
) -> Result<()> {
    let img = images::read_rgb(center)?;
    let z = pfm::read(depth)?;
    let (view, m) = warp_view(&img, &z, direction, focal, baseline)?;
    images::write_rgb(out, &view)?;
    if let Some(mask) = mask {
        images::write_gray(mask, z.width, z.height, &m)?;
    }
    Ok(())
}
