//! Serializable training configuration and its identity hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tridepth_core::losses::{GanMode, LossConfig, SsimMode};
use tridepth_core::nets::Arch;
use tridepth_core::train::{AdamHyper, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GanLoss {
    Paper,
    Nonsaturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SsimChoice {
    Dssim,
    Paper,
}

impl From<GanLoss> for GanMode {
    fn from(g: GanLoss) -> Self {
        match g {
            GanLoss::Paper => GanMode::Paper,
            GanLoss::Nonsaturating => GanMode::NonSaturating,
        }
    }
}

impl From<GanMode> for GanLoss {
    fn from(g: GanMode) -> Self {
        match g {
            GanMode::Paper => GanLoss::Paper,
            GanMode::NonSaturating => GanLoss::Nonsaturating,
        }
    }
}

impl From<SsimChoice> for SsimMode {
    fn from(s: SsimChoice) -> Self {
        match s {
            SsimChoice::Dssim => SsimMode::Dssim,
            SsimChoice::Paper => SsimMode::PaperLiteral,
        }
    }
}

impl From<SsimMode> for SsimChoice {
    fn from(s: SsimMode) -> Self {
        match s {
            SsimMode::Dssim => SsimChoice::Dssim,
            SsimMode::PaperLiteral => SsimChoice::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchJson {
    pub encoder: [usize; 4],
    pub decoder: [usize; 4],
    pub discriminator: [usize; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub d_max_frac: f64,
    pub gan_loss: GanLoss,
    pub ssim_mode: SsimChoice,
    pub lambda_gan: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub prob_eps: f64,
    pub arch: ArchJson,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl From<&TrainConfig> for RunConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            steps: c.steps,
            batch_size: c.batch_size,
            learning_rate: c.adam.lr,
            beta1: c.adam.beta1,
            beta2: c.adam.beta2,
            adam_eps: c.adam.eps,
            seed: c.seed,
            d_max_frac: c.d_max_frac,
            gan_loss: c.loss.gan_mode.into(),
            ssim_mode: c.loss.ssim_mode.into(),
            lambda_gan: c.loss.lambda_gan,
            ssim_c1: c.loss.c1,
            ssim_c2: c.loss.c2,
            prob_eps: c.loss.prob_eps,
            arch: ArchJson {
                encoder: c.arch.encoder,
                decoder: c.arch.decoder,
                discriminator: c.arch.discriminator,
            },
            checkpoint_every: c.checkpoint_every,
            log_every: c.log_every,
        }
    }
}

impl From<&RunConfig> for TrainConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            steps: c.steps,
            batch_size: c.batch_size,
            adam: AdamHyper {
                lr: c.learning_rate,
                beta1: c.beta1,
                beta2: c.beta2,
                eps: c.adam_eps,
            },
            seed: c.seed,
            d_max_frac: c.d_max_frac,
            loss: LossConfig {
                ssim_mode: c.ssim_mode.into(),
                gan_mode: c.gan_loss.into(),
                lambda_gan: c.lambda_gan,
                c1: c.ssim_c1,
                c2: c.ssim_c2,
                prob_eps: c.prob_eps,
            },
            arch: Arch {
                encoder: c.arch.encoder,
                decoder: c.arch.decoder,
                discriminator: c.arch.discriminator,
            },
            checkpoint_every: c.checkpoint_every,
            log_every: c.log_every,
        }
    }
}

impl RunConfig {
    /// SHA-256 over every field that shapes the optimization trajectory.
    /// Run length and logging cadence are excluded so a run can be resumed
    /// with a different step budget.
    pub fn hash(&self) -> String {
        let mut c = *self;
        c.steps = 0;
        c.checkpoint_every = 0;
        c.log_every = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }
}
