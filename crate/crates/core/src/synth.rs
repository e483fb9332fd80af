//! Procedural trinocular scenes with exact ground-truth depth.
//!
//! A scene is a textured background plane plus a few textured rectangles in
//! front of it, all parallel to the image plane. Textures are defined in
//! world units, so their apparent scale shrinks with depth.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::warp::{CameraRig, Direction, ValidMask, View};

/// Relative depth difference above which a landing pixel counts as a
/// different surface.
pub const OCCLUSION_REL_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub min_depth: f64,
    pub max_depth: f64,
    /// Upper bound on foreground rectangles; 0 gives background-only scenes.
    pub max_objects: usize,
    /// Texture lattice spacing in world units.
    pub texture_cell: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            min_depth: 5.0,
            max_depth: 50.0,
            max_objects: 4,
            texture_cell: 1.5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth && self.max_depth.is_finite()) {
            return Err(Error::Config(format!(
                "depth range [{}, {}] must satisfy 0 < min < max",
                self.min_depth, self.max_depth
            )));
        }
        if !(self.texture_cell > 0.0 && self.texture_cell.is_finite()) {
            return Err(Error::Config(format!("texture_cell must be > 0, got {}", self.texture_cell)));
        }
        Ok(())
    }
}

/// Random-color lattice: colors live on the corners of square cells of
/// side `cell` and are blended bilinearly inside each cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub seed: u64,
    pub cell: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Texture {
    fn lattice(&self, ix: i64, iy: i64) -> [f64; 3] {
        let mut h = splitmix64(self.seed ^ splitmix64(ix as u64 ^ splitmix64(iy as u64)));
        let mut out = [0.0; 3];
        for c in &mut out {
            h = splitmix64(h);
            *c = (h >> 11) as f64 / (1u64 << 53) as f64;
        }
        out
    }

    /// Color at world position `(x, y)` on the surface.
    pub fn color(&self, x: f64, y: f64) -> [f64; 3] {
        let tx = x / self.cell + self.offset_x;
        let ty = y / self.cell + self.offset_y;
        let fx = libm::floor(tx);
        let fy = libm::floor(ty);
        let (ax, ay) = (tx - fx, ty - fy);
        let (ix, iy) = (fx as i64, fy as i64);
        let c00 = self.lattice(ix, iy);
        let c10 = self.lattice(ix + 1, iy);
        let c01 = self.lattice(ix, iy + 1);
        let c11 = self.lattice(ix + 1, iy + 1);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = c00[k] * (1.0 - ax) + c10[k] * ax;
            let bottom = c01[k] * (1.0 - ax) + c11[k] * ax;
            out[k] = top * (1.0 - ay) + bottom * ay;
        }
        out
    }
}

/// Fronto-parallel rectangle `[x0, x1) x [y0, y1)` at depth `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub z: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub texture: Texture,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background_z: f64,
    pub background: Texture,
    pub objects: Vec<Rect>,
}

fn texture(rng: &mut ChaCha8Rng, cell: f64) -> Texture {
    Texture {
        seed: rng.gen(),
        cell,
        offset_x: rng.gen_range(0.0..1000.0),
        offset_y: rng.gen_range(0.0..1000.0),
    }
}

/// Deterministic scene for `seed`. Rectangles are placed by their extent in
/// the center view and then lifted to world coordinates at their depth.
pub fn sample_scene(seed: u64, cfg: &SceneConfig, rig: &CameraRig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (cfg.min_depth, cfg.max_depth);
    let count = if cfg.max_objects == 0 {
        0
    } else {
        rng.gen_range(1..=cfg.max_objects)
    };
    let background_z = if count == 0 {
        rng.gen_range(lo..=hi)
    } else {
        rng.gen_range(lo + 0.5 * (hi - lo)..=hi)
    };
    let background = texture(&mut rng, cfg.texture_cell);
    let (w, h) = (rig.width as f64, rig.height as f64);
    let objects = (0..count)
        .map(|_| {
            let z = rng.gen_range(lo..lo + 0.85 * (background_z - lo));
            let uc = rng.gen_range(0.1 * w..0.9 * w);
            let vc = rng.gen_range(0.1 * h..0.9 * h);
            let pw = rng.gen_range(0.15 * w..0.4 * w);
            let ph = rng.gen_range(0.2 * h..0.5 * h);
            let to_x = |u: f64| (u - rig.cx) * z / rig.focal_px;
            let to_y = |v: f64| (v - rig.cy) * z / rig.focal_px;
            Rect {
                z,
                x0: to_x(uc - pw / 2.0),
                x1: to_x(uc + pw / 2.0),
                y0: to_y(vc - ph / 2.0),
                y1: to_y(vc + ph / 2.0),
                texture: texture(&mut rng, cfg.texture_cell),
            }
        })
        .collect();
    Scene {
        background_z,
        background,
        objects,
    }
}

/// Rendered view: RGB `[3, H, W]` in `[0, 1]` and z-depth `[H, W]`, both
/// row-major, unquantized.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
}

/// Casts one pinhole ray per pixel center and keeps the nearest surface.
pub fn render_view(scene: &Scene, rig: &CameraRig, view: View) -> RenderedView {
    let (w, h) = (rig.width, rig.height);
    let cam_x = rig.camera_x(view);
    let mut rgb = vec![0.0; 3 * w * h];
    let mut depth = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let ray_x = (u as f64 - rig.cx) / rig.focal_px;
            let ray_y = (v as f64 - rig.cy) / rig.focal_px;
            let mut z = scene.background_z;
            let mut tex = &scene.background;
            for obj in &scene.objects {
                if obj.z < z && obj.contains(ray_x * obj.z + cam_x, ray_y * obj.z) {
                    z = obj.z;
                    tex = &obj.texture;
                }
            }
            let c = tex.color(ray_x * z + cam_x, ray_y * z);
            for k in 0..3 {
                rgb[k * w * h + v * w + u] = c[k];
            }
            depth[v * w + u] = z;
        }
    }
    RenderedView {
        width: w,
        height: h,
        rgb,
        depth,
    }
}

/// Center pixels whose ground-truth correspondence in the side view shows
/// the same surface (1) or is hidden / off-image (0).
pub fn compute_occlusion_mask(
    center_depth: &Tensor<f32>,
    side_depth: &Tensor<f32>,
    rig: &CameraRig,
    direction: Direction,
) -> Result<ValidMask<f32>> {
    let (b, _, h, w) = center_depth.dims4()?;
    if side_depth.shape() != center_depth.shape() {
        return Err(crate::error::shape_err(
            "compute_occlusion_mask",
            format!("{:?} vs {:?}", center_depth.shape(), side_depth.shape()),
        ));
    }
    let sign = match direction {
        Direction::Left => 1.0,
        Direction::Right => -1.0,
    };
    let plane = h * w;
    let mut out = vec![0.0f32; b * plane];
    for n in 0..b {
        for v in 0..h {
            for u in 0..w {
                let i = n * plane + v * w + u;
                let z = center_depth.data()[i] as f64;
                let landing = libm::round(u as f64 + sign * rig.fb() / z);
                if landing < 0.0 || landing > (w - 1) as f64 {
                    continue;
                }
                let zs = side_depth.data()[n * plane + v * w + landing as usize] as f64;
                if libm::fabs(zs - z) / z <= OCCLUSION_REL_TOL {
                    out[i] = 1.0;
                }
            }
        }
    }
    Ok(ValidMask::new(Tensor::new(&[b, 1, h, w], out)?))
}

/// One training example: three views and their depth maps, each stored as a
/// single-item batch (`[1, 3, H, W]` images, `[1, 1, H, W]` depths).
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub left: Tensor<f32>,
    pub center: Tensor<f32>,
    pub right: Tensor<f32>,
    pub depth_left: Tensor<f32>,
    pub depth_center: Tensor<f32>,
    pub depth_right: Tensor<f32>,
    pub rig: CameraRig,
    pub scene_seed: u64,
}

impl ExampleRecord {
    pub fn image(&self, view: View) -> &Tensor<f32> {
        match view {
            View::Left => &self.left,
            View::Center => &self.center,
            View::Right => &self.right,
        }
    }

    pub fn depth(&self, view: View) -> &Tensor<f32> {
        match view {
            View::Left => &self.depth_left,
            View::Center => &self.depth_center,
            View::Right => &self.depth_right,
        }
    }
}

/// Rounds to the nearest 8-bit level, as stored in PNG files.
pub fn quantize_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

pub fn dequantize_u8(q: u8) -> f32 {
    q as f32 / 255.0
}

fn image_tensor(view: &RenderedView) -> Tensor<f32> {
    let data = view.rgb.iter().map(|&v| dequantize_u8(quantize_u8(v))).collect();
    Tensor::new(&[1, 3, view.height, view.width], data).expect("rendered extents")
}

fn depth_tensor(view: &RenderedView) -> Tensor<f32> {
    let data = view.depth.iter().map(|&z| z as f32).collect();
    Tensor::new(&[1, 1, view.height, view.width], data).expect("rendered extents")
}

/// Seed of scene `index` within a dataset generated from `global_seed`.
pub fn scene_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(global_seed) ^ index)
}

/// Renders the three views of one scene. Images are quantized to 8 bits so
/// an in-memory record equals its on-disk form.
pub fn make_record(seed: u64, cfg: &SceneConfig, rig: &CameraRig) -> ExampleRecord {
    let scene = sample_scene(seed, cfg, rig);
    let [l, c, r] = [View::Left, View::Center, View::Right].map(|v| render_view(&scene, rig, v));
    ExampleRecord {
        left: image_tensor(&l),
        center: image_tensor(&c),
        right: image_tensor(&r),
        depth_left: depth_tensor(&l),
        depth_center: depth_tensor(&c),
        depth_right: depth_tensor(&r),
        rig: *rig,
        scene_seed: seed,
    }
}

/// `count` records for scenes `0..count` of `global_seed`.
pub fn generate(global_seed: u64, count: usize, cfg: &SceneConfig, rig: &CameraRig) -> Result<Vec<ExampleRecord>> {
    cfg.validate()?;
    rig.validate()?;
    Ok((0..count as u64)
        .map(|i| make_record(scene_seed(global_seed, i), cfg, rig))
        .collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
