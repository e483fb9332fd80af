//! Rectified trinocular geometry and depth-induced view synthesis.
//!
//! The side cameras sit at `x = -baseline` (left) and `x = +baseline`
//! (right) with the same orientation as the center camera, so a point with
//! center-view disparity `d` appears `d` pixels further right in the left
//! view and `d` pixels further left in the right view. Views are synthesized
//! by backward sampling of the center image:
//! `left(u, v) = center(u - d(u, v), v)`, `right(u, v) = center(u + d(u, v), v)`,
//! with the disparity read at the target pixel.

use alloc::format;

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest disparity used when converting back to depth.
pub const MIN_DISPARITY: f64 = 1e-6;

/// Rectified pinhole rig shared by the three cameras.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraRig {
    /// Rig with the principal point at the image center.
    pub fn new(focal_px: f64, baseline: f64, width: usize, height: usize) -> Result<Self> {
        let rig = Self {
            focal_px,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            baseline,
            width,
            height,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return Err(Error::Config(format!("focal_px must be > 0, got {}", self.focal_px)));
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::Config(format!("baseline must be > 0, got {}", self.baseline)));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 || self.width % 16 != 0 || self.height % 16 != 0 {
            return Err(Error::Config(format!(
                "image size {}x{} must be a non-zero multiple of 16",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// `focal_px * baseline`, the depth-disparity product.
    pub fn fb(&self) -> f64 {
        self.focal_px * self.baseline
    }

    pub fn camera_x(&self, view: View) -> f64 {
        match view {
            View::Left => -self.baseline,
            View::Center => 0.0,
            View::Right => self.baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Left,
    Center,
    Right,
}

/// Side view reconstructed from the center image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn view(self) -> View {
        match self {
            Direction::Left => View::Left,
            Direction::Right => View::Right,
        }
    }

    /// Sign applied to disparity when building the sampling grid.
    fn sign(self) -> f64 {
        match self {
            Direction::Left => -1.0,
            Direction::Right => 1.0,
        }
    }
}

/// Binary `[B, 1, H, W]` map, 0 where the sample fell outside the source.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidMask<S>(Tensor<S>);

impl<S: Scalar> ValidMask<S> {
    pub fn new(t: Tensor<S>) -> Self {
        Self(t)
    }

    pub fn tensor(&self) -> &Tensor<S> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<S> {
        self.0
    }

    pub fn valid_count(&self) -> usize {
        self.0.data().iter().filter(|v| **v != S::ZERO).count()
    }
}

/// `d = f * b / Z`, differentiable in `depth`.
pub fn depth_to_disparity<S: Scalar>(g: &mut Graph<S>, depth: Var, rig: &CameraRig) -> Result<Var> {
    if let Some(bad) = g.value(depth).data().iter().find(|z| !(**z > S::ZERO)) {
        return Err(Error::NonPositiveDepth { value: bad.to_f64() });
    }
    let fb = g.constant(Tensor::full(g.shape(depth), S::from_f64(rig.fb())));
    g.div(fb, depth)
}

/// `Z = f * b / max(d, MIN_DISPARITY)`, differentiable in `disp`.
pub fn disparity_to_depth<S: Scalar>(g: &mut Graph<S>, disp: Var, rig: &CameraRig) -> Result<Var> {
    let d = g.clamp(disp, MIN_DISPARITY, f64::INFINITY)?;
    let fb = g.constant(Tensor::full(g.shape(d), S::from_f64(rig.fb())));
    g.div(fb, d)
}

/// Non-differentiable counterpart of [`depth_to_disparity`].
pub fn depth_to_disparity_values<S: Scalar>(depth: &Tensor<S>, rig: &CameraRig) -> Result<Tensor<S>> {
    if let Some(bad) = depth.data().iter().find(|z| !(**z > S::ZERO)) {
        return Err(Error::NonPositiveDepth { value: bad.to_f64() });
    }
    let fb = S::from_f64(rig.fb());
    Ok(depth.map(|z| fb / z))
}

/// Non-differentiable counterpart of [`disparity_to_depth`].
pub fn disparity_to_depth_values<S: Scalar>(disp: &Tensor<S>, rig: &CameraRig) -> Tensor<S> {
    let fb = S::from_f64(rig.fb());
    let eps = S::from_f64(MIN_DISPARITY);
    disp.map(|d| fb / if d > eps { d } else { eps })
}

/// Samples each row of `image` at horizontal pixel positions `x_coords`.
pub fn bilinear_sample<S: Scalar>(
    g: &mut Graph<S>,
    image: Var,
    x_coords: Var,
) -> Result<(Var, ValidMask<S>)> {
    let (out, mask) = g.sample_x(image, x_coords)?;
    Ok((out, ValidMask(mask)))
}

/// `x(u) = u - d` for the left view, `u + d` for the right view.
pub fn make_shift_grid<S: Scalar>(g: &mut Graph<S>, disp: Var, direction: Direction) -> Result<Var> {
    let (b, c, h, w) = g.value(disp).dims4()?;
    if c != 1 {
        return Err(crate::error::shape_err(
            "make_shift_grid",
            format!("disparity must have one channel, got {}", c),
        ));
    }
    let base = g.constant(Tensor::from_fn(&[b, 1, h, w], |i| S::from_f64((i % w) as f64)));
    let signed = g.scale_shift(disp, direction.sign(), 0.0)?;
    g.add(base, signed)
}

/// Reconstructs a side view from the center image and center-aligned disparity.
pub fn synthesize_view<S: Scalar>(
    g: &mut Graph<S>,
    center: Var,
    disp: Var,
    direction: Direction,
) -> Result<(Var, ValidMask<S>)> {
    let (b, _, h, w) = g.value(center).dims4()?;
    if g.shape(disp) != [b, 1, h, w] {
        return Err(crate::error::shape_err(
            "synthesize_view",
            format!("disparity {:?} for image {:?}", g.shape(disp), g.shape(center)),
        ));
    }
    let grid = make_shift_grid(g, disp, direction)?;
    bilinear_sample(g, center, grid)
}

/// Convenience wrapper running [`synthesize_view`] on plain tensors.
pub fn synthesize_view_values<S: Scalar>(
    center: &Tensor<S>,
    disp: &Tensor<S>,
    direction: Direction,
) -> Result<(Tensor<S>, ValidMask<S>)> {
    let mut g = Graph::new();
    let c = g.constant(center.clone());
    let d = g.constant(disp.clone());
    let (out, mask) = synthesize_view(&mut g, c, d, direction)?;
    Ok((g.value(out).clone(), mask))
}
