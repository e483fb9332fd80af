//! Training objectives: SSIM, the masked photometric reconstruction loss,
//! the generator loss and the discriminator loss.

use alloc::format;
use alloc::vec::Vec;

use crate::diff::{Graph, Tensor, Var};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::warp::ValidMask;

/// How the SSIM term enters the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SsimMode {
    /// `(1 - SSIM) / 2`, a dissimilarity that is zero for identical images.
    Dssim,
    /// `+SSIM` exactly as written in the loss formula. Minimizing it rewards
    /// dissimilar reconstructions; kept for formula-fidelity checks.
    PaperLiteral,
}

/// Adversarial term of the generator loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GanMode {
    /// Saturating minimax form, `log(1 - D(fake))`, minimized.
    Paper,
    /// `-log D(fake)`, minimized.
    NonSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub ssim_mode: SsimMode,
    pub gan_mode: GanMode,
    pub lambda_gan: f64,
    pub c1: f64,
    pub c2: f64,
    /// Probabilities are clamped to `[prob_eps, 1 - prob_eps]` before logs.
    pub prob_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ssim_mode: SsimMode::Dssim,
            gan_mode: GanMode::NonSaturating,
            lambda_gan: 1.0,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            prob_eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gan >= 0.0 && self.lambda_gan.is_finite()) {
            return Err(crate::Error::Config(format!(
                "lambda_gan must be finite and >= 0, got {}",
                self.lambda_gan
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(crate::Error::Config("SSIM constants must be positive".into()));
        }
        if !(self.prob_eps > 0.0 && self.prob_eps < 0.5) {
            return Err(crate::Error::Config(format!(
                "prob_eps must lie in (0, 0.5), got {}",
                self.prob_eps
            )));
        }
        Ok(())
    }
}

/// Per-position SSIM over 3x3 valid windows, `[B, C, H-2, W-2]`.
pub fn ssim_map<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var, cfg: &LossConfig) -> Result<Var> {
    let sa = g.shape(a).to_vec();
    if sa != g.shape(b) {
        return Err(shape_err("ssim", format!("{:?} vs {:?}", sa, g.shape(b))));
    }
    let (_, _, h, w) = g.value(a).dims4()?;
    if h < 3 || w < 3 {
        return Err(shape_err("ssim", format!("image {}x{} smaller than the 3x3 window", h, w)));
    }
    let mu_a = g.avg_pool3x3_valid(a)?;
    let mu_b = g.avg_pool3x3_valid(b)?;
    let aa = g.mul(a, a)?;
    let bb = g.mul(b, b)?;
    let ab = g.mul(a, b)?;
    let e_aa = g.avg_pool3x3_valid(aa)?;
    let e_bb = g.avg_pool3x3_valid(bb)?;
    let e_ab = g.avg_pool3x3_valid(ab)?;
    let mu_aa = g.mul(mu_a, mu_a)?;
    let mu_bb = g.mul(mu_b, mu_b)?;
    let mu_ab = g.mul(mu_a, mu_b)?;
    let var_a = g.sub(e_aa, mu_aa)?;
    let var_b = g.sub(e_bb, mu_bb)?;
    let cov = g.sub(e_ab, mu_ab)?;

    let lum_num = g.scale_shift(mu_ab, 2.0, cfg.c1)?;
    let cs_num = g.scale_shift(cov, 2.0, cfg.c2)?;
    let num = g.mul(lum_num, cs_num)?;
    let mu_sum = g.add(mu_aa, mu_bb)?;
    let lum_den = g.scale_shift(mu_sum, 1.0, cfg.c1)?;
    let var_sum = g.add(var_a, var_b)?;
    let cs_den = g.scale_shift(var_sum, 1.0, cfg.c2)?;
    let den = g.mul(lum_den, cs_den)?;
    g.div(num, den)
}

/// Mean structural similarity over all valid windows and channels.
pub fn ssim<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var, cfg: &LossConfig) -> Result<Var> {
    let map = ssim_map(g, a, b, cfg)?;
    g.reduce_mean(map, None)
}

/// 3x3 valid erosion of a single-channel mask: a window position is kept
/// only if all nine pixels are valid.
pub fn erode3x3_valid<S: Scalar>(mask: &Tensor<S>) -> Result<Tensor<S>> {
    let (b, c, h, w) = mask.dims4()?;
    if h < 3 || w < 3 {
        return Err(shape_err("erode3x3_valid", format!("mask {}x{} too small", h, w)));
    }
    let (oh, ow) = (h - 2, w - 2);
    let src = mask.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let m = &src[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let all = (0..3).all(|dy| (0..3).all(|dx| m[(y + dy) * w + x + dx] != S::ZERO));
                out.push(if all { S::ONE } else { S::ZERO });
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], out)
}

/// Photometric loss between a real side view and its reconstruction.
///
/// L1 is averaged over valid pixels and channels; the SSIM term is averaged
/// over windows lying entirely inside the valid region. Pixels with mask 0
/// never influence the result.
pub fn reconstruction_loss<S: Scalar>(
    g: &mut Graph<S>,
    real: Var,
    recon: Var,
    mask: &ValidMask<S>,
    cfg: &LossConfig,
) -> Result<Var> {
    if g.shape(real) != g.shape(recon) {
        return Err(shape_err(
            "reconstruction_loss",
            format!("{:?} vs {:?}", g.shape(real), g.shape(recon)),
        ));
    }
    let diff = g.abs_diff(real, recon)?;
    let l1 = g.reduce_mean(diff, Some(mask.tensor()))?;
    let map = ssim_map(g, real, recon, cfg)?;
    let inner = erode3x3_valid(mask.tensor())?;
    let s = g.reduce_mean(map, Some(&inner))?;
    let term = match cfg.ssim_mode {
        SsimMode::Dssim => g.scale_shift(s, -0.5, 0.5)?,
        SsimMode::PaperLiteral => s,
    };
    g.add(l1, term)
}

fn clamp_prob<S: Scalar>(g: &mut Graph<S>, p: Var, cfg: &LossConfig) -> Result<Var> {
    g.clamp(p, cfg.prob_eps, 1.0 - cfg.prob_eps)
}

/// Batch mean of `log(p)`.
fn mean_log<S: Scalar>(g: &mut Graph<S>, p: Var) -> Result<Var> {
    let l = g.log(p)?;
    g.reduce_mean(l, None)
}

/// Batch mean of `log(1 - p)`.
fn mean_log_complement<S: Scalar>(g: &mut Graph<S>, p: Var) -> Result<Var> {
    let q = g.scale_shift(p, -1.0, 1.0)?;
    mean_log(g, q)
}

/// Generator objective from the two discriminator outputs on the
/// reconstructions (one probability per batch item) and the two scalar
/// reconstruction losses.
pub fn generator_loss<S: Scalar>(
    g: &mut Graph<S>,
    d_left_fake: Var,
    d_right_fake: Var,
    recon_left: Var,
    recon_right: Var,
    cfg: &LossConfig,
) -> Result<Var> {
    let pl = clamp_prob(g, d_left_fake, cfg)?;
    let pr = clamp_prob(g, d_right_fake, cfg)?;
    let (tl, tr, sign) = match cfg.gan_mode {
        GanMode::Paper => (mean_log_complement(g, pl)?, mean_log_complement(g, pr)?, 1.0),
        GanMode::NonSaturating => (mean_log(g, pl)?, mean_log(g, pr)?, -1.0),
    };
    let adv = g.add(tl, tr)?;
    let adv = g.scale_shift(adv, sign * cfg.lambda_gan, 0.0)?;
    let recon = g.add(recon_left, recon_right)?;
    g.add(adv, recon)
}

/// Binary cross-entropy: `-log d_real - log(1 - d_fake)`, batch-averaged.
pub fn discriminator_loss<S: Scalar>(
    g: &mut Graph<S>,
    d_real: Var,
    d_fake: Var,
    cfg: &LossConfig,
) -> Result<Var> {
    let pr = clamp_prob(g, d_real, cfg)?;
    let pf = clamp_prob(g, d_fake, cfg)?;
    let real_term = mean_log(g, pr)?;
    let fake_term = mean_log_complement(g, pf)?;
    let sum = g.add(real_term, fake_term)?;
    g.scale_shift(sum, -1.0, 0.0)
}

/// Zeroes `image` wherever `mask` is 0 (mask broadcast over channels).
pub fn mask_image<S: Scalar>(image: &Tensor<S>, mask: &ValidMask<S>) -> Result<Tensor<S>> {
    let (b, c, h, w) = image.dims4()?;
    if mask.tensor().shape() != [b, 1, h, w] {
        return Err(shape_err(
            "mask_image",
            format!("mask {:?} for image {:?}", mask.tensor().shape(), image.shape()),
        ));
    }
    let plane = h * w;
    let m = mask.tensor().data();
    let data = image
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let n = i / (c * plane);
            if m[n * plane + i % plane] != S::ZERO {
                v
            } else {
                S::ZERO
            }
        })
        .collect();
    Tensor::new(image.shape(), data)
}
