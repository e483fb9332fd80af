//! On-disk dataset: a JSON manifest plus one directory per scene holding
//! three PNG views and three PFM depth maps.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tridepth_core::synth::{self, ExampleRecord, SceneConfig};
use tridepth_core::warp::{CameraRig, View};
use tridepth_core::Tensor;

use crate::error::{self, Error, Result};
use crate::images;
use crate::pfm::{self, FloatMap};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

const VIEWS: [(View, &str); 3] = [(View::Left, "left"), (View::Center, "center"), (View::Right, "right")];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigJson {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

impl From<CameraRig> for RigJson {
    fn from(r: CameraRig) -> Self {
        Self {
            focal_px: r.focal_px,
            cx: r.cx,
            cy: r.cy,
            baseline: r.baseline,
            width: r.width,
            height: r.height,
        }
    }
}

impl RigJson {
    /// Validated rig; the principal point must sit at the image center.
    pub fn to_rig(&self) -> Result<CameraRig> {
        let rig = CameraRig::new(self.focal_px, self.baseline, self.width, self.height)?;
        if rig.cx != self.cx || rig.cy != self.cy {
            return Err(Error::Invalid(format!(
                "principal point ({}, {}) is not the image center ({}, {})",
                self.cx, self.cy, rig.cx, rig.cy
            )));
        }
        Ok(rig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub max_objects: usize,
    pub texture_cell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub count: usize,
    pub rig: RigJson,
    pub depth_range: [f64; 2],
    pub global_seed: u64,
    pub scene: SceneJson,
}

impl Manifest {
    pub fn new(count: usize, rig: &CameraRig, cfg: &SceneConfig, global_seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            count,
            rig: (*rig).into(),
            depth_range: [cfg.min_depth, cfg.max_depth],
            global_seed,
            scene: SceneJson {
                max_objects: cfg.max_objects,
                texture_cell: cfg.texture_cell,
            },
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            min_depth: self.depth_range[0],
            max_depth: self.depth_range[1],
            max_objects: self.scene.max_objects,
            texture_cell: self.scene.texture_cell,
        }
    }
}

pub fn scene_dir_name(index: usize) -> String {
    format!("scene_{:06}", index)
}

fn depth_map(t: &Tensor<f32>) -> FloatMap {
    let s = t.shape();
    FloatMap {
        width: s[3],
        height: s[2],
        data: t.data().to_vec(),
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    error::write(&dir.join(MANIFEST), json.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = error::read(&path)?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format_version {}", m.format_version)));
    }
    Ok(m)
}

pub fn write_record(dir: &Path, index: usize, rec: &ExampleRecord) -> Result<()> {
    let scene = dir.join(scene_dir_name(index));
    error::create_dir(&scene)?;
    for (view, name) in VIEWS {
        images::write_rgb(&scene.join(format!("{}.png", name)), rec.image(view))?;
        pfm::write(&scene.join(format!("depth_{}.pfm", name)), &depth_map(rec.depth(view)))?;
    }
    Ok(())
}

/// Writes `records` and a manifest describing them into `dir`.
pub fn write_dataset(dir: &Path, manifest: &Manifest, records: &[ExampleRecord]) -> Result<()> {
    if manifest.count != records.len() {
        return Err(Error::Invalid(format!(
            "manifest count {} but {} records",
            manifest.count,
            records.len()
        )));
    }
    error::create_dir(dir)?;
    for (i, rec) in records.iter().enumerate() {
        write_record(dir, i, rec)?;
    }
    write_manifest(dir, manifest)
}

/// Renders and writes a full dataset, one scene at a time.
pub fn generate_dataset(dir: &Path, count: usize, rig: &CameraRig, cfg: &SceneConfig, global_seed: u64) -> Result<Manifest> {
    cfg.validate()?;
    rig.validate()?;
    error::create_dir(dir)?;
    for i in 0..count {
        let rec = synth::make_record(synth::scene_seed(global_seed, i as u64), cfg, rig);
        write_record(dir, i, &rec)?;
    }
    let manifest = Manifest::new(count, rig, cfg, global_seed);
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn count_scene_dirs(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut n = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with("scene_") && entry.path().is_dir() {
            n += 1;
        }
    }
    Ok(n)
}

fn read_view(path: &Path, rig: &CameraRig) -> Result<Tensor<f32>> {
    let d = images::read(path)?;
    if d.channels != 3 {
        return Err(Error::format(path, format!("expected RGB without alpha, got {} channels", d.channels)));
    }
    if (d.width, d.height) != (rig.width, rig.height) {
        return Err(Error::format(
            path,
            format!("image is {}x{}, rig is {}x{}", d.width, d.height, rig.width, rig.height),
        ));
    }
    images::read_rgb(path)
}

fn read_depth(path: &Path, rig: &CameraRig) -> Result<Tensor<f32>> {
    let m = pfm::read(path)?;
    if (m.width, m.height) != (rig.width, rig.height) {
        return Err(Error::format(
            path,
            format!("depth is {}x{}, rig is {}x{}", m.width, m.height, rig.width, rig.height),
        ));
    }
    Ok(Tensor::new(&[1, 1, m.height, m.width], m.data)?)
}

/// Reads and cross-checks a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<ExampleRecord>)> {
    let manifest = read_manifest(dir)?;
    let rig = manifest.rig.to_rig()?;
    let found = count_scene_dirs(dir)?;
    if found != manifest.count {
        return Err(Error::format(
            &dir.join(MANIFEST),
            format!("manifest lists {} scenes, directory holds {}", manifest.count, found),
        ));
    }
    let mut records = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let scene = dir.join(scene_dir_name(i));
        let img = |name: &str| read_view(&scene.join(format!("{}.png", name)), &rig);
        let depth = |name: &str| read_depth(&scene.join(format!("depth_{}.pfm", name)), &rig);
        records.push(ExampleRecord {
            left: img("left")?,
            center: img("center")?,
            right: img("right")?,
            depth_left: depth("left")?,
            depth_center: depth("center")?,
            depth_right: depth("right")?,
            rig,
            scene_seed: synth::scene_seed(manifest.global_seed, i as u64),
        });
    }
    Ok((manifest, records))
}
