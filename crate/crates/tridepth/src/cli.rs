//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tridepth_core::losses::LossConfig;
use tridepth_core::synth::SceneConfig;
use tridepth_core::train::{AdamHyper, TrainConfig};
use tridepth_core::warp::{CameraRig, Direction};

use crate::config::{GanLoss, RunConfig, SsimChoice};
use crate::error::{self, Error, Result};
use crate::report::ReportJson;
use crate::{dataset, run, tools};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tridepth", version, about = "Depth from a trinocular rig via adversarial view synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic trinocular dataset with ground-truth depth.
    GenData(GenData),
    /// Train the generator and both discriminators on a dataset.
    Train(Train),
    /// Score a checkpoint against a dataset's ground-truth depth.
    Eval(Eval),
    /// Predict depth for a single center image.
    Infer(Infer),
    /// Synthesize a side view from a center image and a depth map.
    Warp(Warp),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scenes: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 100.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 0.5)]
    pub baseline: f64,
    #[arg(long, default_value_t = 5.0)]
    pub min_depth: f64,
    #[arg(long, default_value_t = 50.0)]
    pub max_depth: f64,
    /// Maximum foreground rectangles per scene; 0 renders a single plane.
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    /// Texture lattice spacing in world units.
    #[arg(long, default_value_t = 1.5)]
    pub texture_cell: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GanLoss::Nonsaturating)]
    pub gan_loss: GanLoss,
    #[arg(long, value_enum, default_value_t = SsimChoice::Dssim)]
    pub ssim_mode: SsimChoice,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_gan: f64,
    #[arg(long, default_value_t = 0.2)]
    pub d_max_frac: f64,
    #[arg(long, default_value_t = 100)]
    pub checkpoint_every: u64,
    #[arg(long, default_value_t = 10)]
    pub log_every: u64,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Score only pixels visible in both side views.
    #[arg(long)]
    pub occlusion_masked: bool,
}

#[derive(Debug, Args)]
pub struct Infer {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub viz: Option<PathBuf>,
    /// Focal length in pixels; defaults to the training rig.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Baseline in world units; defaults to the training rig.
    #[arg(long)]
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct Warp {
    #[arg(long)]
    pub center: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    #[arg(long, default_value_t = 100.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 0.5)]
    pub baseline: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

impl Train {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch,
            adam: AdamHyper {
                lr: self.lr,
                ..AdamHyper::default()
            },
            seed: self.seed,
            d_max_frac: self.d_max_frac,
            loss: LossConfig {
                gan_mode: self.gan_loss.into(),
                ssim_mode: self.ssim_mode.into(),
                lambda_gan: self.lambda_gan,
                ..LossConfig::default()
            },
            checkpoint_every: self.checkpoint_every,
            log_every: self.log_every,
            ..TrainConfig::default()
        }
    }
}

fn show(name: &str, value: serde_json::Value) {
    println!("{} config: {}", name, value);
}

fn path(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn gen_data(a: &GenData) -> Result<()> {
    let cfg = SceneConfig {
        min_depth: a.min_depth,
        max_depth: a.max_depth,
        max_objects: a.objects,
        texture_cell: a.texture_cell,
    };
    show(
        "gen-data",
        json!({
            "out": path(&a.out), "scenes": a.scenes, "width": a.width, "height": a.height,
            "focal": a.focal, "baseline": a.baseline, "min_depth": a.min_depth,
            "max_depth": a.max_depth, "objects": a.objects, "texture_cell": a.texture_cell,
            "seed": a.seed,
        }),
    );
    let rig = CameraRig::new(a.focal, a.baseline, a.width, a.height)?;
    cfg.validate()?;
    dataset::generate_dataset(&a.out, a.scenes, &rig, &cfg, a.seed)?;
    println!("wrote {} scenes to {}", a.scenes, a.out.display());
    Ok(())
}

fn train(a: &Train) -> Result<()> {
    let cfg = a.config();
    let mut shown = serde_json::to_value(RunConfig::from(&cfg)).expect("config serializes");
    shown["data"] = path(&a.data).into();
    shown["out"] = path(&a.out).into();
    shown["resume"] = a.resume.as_deref().map(path).into();
    show("train", shown);
    cfg.validate()?;
    let summary = run::train(
        cfg,
        &run::TrainRun {
            data: a.data.clone(),
            out: a.out.clone(),
            resume: a.resume.clone(),
            verbose: true,
        },
    )?;
    println!(
        "trained to step {}; final checkpoint {}",
        summary.trainer.step,
        summary.final_checkpoint.display()
    );
    Ok(())
}

fn eval(a: &Eval) -> Result<()> {
    show(
        "eval",
        json!({
            "checkpoint": path(&a.checkpoint), "data": path(&a.data),
            "report": path(&a.report), "occlusion_masked": a.occlusion_masked,
        }),
    );
    let report = tools::evaluate(&a.checkpoint, &a.data, a.occlusion_masked)?;
    let json = ReportJson::new(&report, a.occlusion_masked);
    error::write(&a.report, json.to_json().as_bytes())?;
    println!(
        "abs_rel {:.4}  rmse {:.4}  delta1 {:.4}  over {} pixels",
        json.abs_rel, json.rmse, json.delta1, json.n_pixels
    );
    Ok(())
}

fn infer(a: &Infer) -> Result<()> {
    show(
        "infer",
        json!({
            "checkpoint": path(&a.checkpoint), "image": path(&a.image), "out": path(&a.out),
            "viz": a.viz.as_deref().map(path), "focal": a.focal, "baseline": a.baseline,
        }),
    );
    let r = tools::infer_files(&a.checkpoint, &a.image, &a.out, a.viz.as_deref(), a.focal, a.baseline)?;
    println!("wrote {}x{} depth to {}", r.depth.width, r.depth.height, a.out.display());
    Ok(())
}

fn warp(a: &Warp) -> Result<()> {
    let direction = match a.direction {
        DirectionArg::Left => Direction::Left,
        DirectionArg::Right => Direction::Right,
    };
    show(
        "warp",
        json!({
            "center": path(&a.center), "depth": path(&a.depth),
            "direction": format!("{:?}", a.direction).to_lowercase(),
            "focal": a.focal, "baseline": a.baseline, "out": path(&a.out),
            "mask": a.mask.as_deref().map(path),
        }),
    );
    tools::warp_files(&a.center, &a.depth, direction, a.focal, a.baseline, &a.out, a.mask.as_deref())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Warp(a) => warp(a),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e);
            exit_code(&e)
        }
    }
}
