//! Training driver: batches from a dataset directory, per-step CSV log,
//! periodic checkpoints and resume.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tridepth_core::synth::ExampleRecord;
use tridepth_core::train::{StepLosses, TrainConfig, Trainer};
use tridepth_core::warp::CameraRig;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset;
use crate::error::{self, Error, Result};

pub const LOSS_LOG: &str = "losses.csv";
pub const CSV_HEADER: &str = "step,loss_dl,loss_dr,loss_g,loss_l,loss_r,wall_ms";
pub const FINAL_DIR: &str = "final";
pub const ABORT_DIR: &str = "abort";

pub fn step_dir_name(step: u64) -> String {
    format!("step_{:06}", step)
}

pub fn csv_row(step: u64, l: &StepLosses, wall_ms: f64) -> String {
    format!(
        "{},{},{},{},{},{},{:.3}",
        step, l.loss_dl, l.loss_dr, l.loss_g, l.loss_l, l.loss_r, wall_ms
    )
}

/// Parses the loss columns of a CSV log, skipping the header. Wall-clock
/// time is dropped because it is the only nondeterministic column.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, [f64; 5])>> {
    let text = String::from_utf8(error::read(path)?).map_err(|_| Error::format(path, "not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::format(path, "missing loss log header"));
    }
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::format(path, format!("bad row {:?}", line));
            if cols.len() != 7 {
                return Err(bad());
            }
            let step = cols[0].parse().map_err(|_| bad())?;
            let mut v = [0.0; 5];
            for (k, c) in cols[1..6].iter().enumerate() {
                v[k] = c.parse().map_err(|_| bad())?;
            }
            Ok((step, v))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    /// Print a progress line every `log_every` steps.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub trainer: Trainer,
    pub rig: CameraRig,
    pub losses: Vec<StepLosses>,
    pub final_checkpoint: PathBuf,
}

fn start(cfg: TrainConfig, rig: &CameraRig, resume: Option<&Path>) -> Result<Trainer> {
    let Some(dir) = resume else {
        return Ok(Trainer::new(cfg)?);
    };
    let ckpt = checkpoint::load(dir)?;
    let wanted = RunConfig::from(&cfg).hash();
    if RunConfig::from(&ckpt.trainer.cfg).hash() != wanted {
        return Err(Error::Mismatch(format!(
            "checkpoint {} was trained with a different configuration",
            dir.display()
        )));
    }
    if ckpt.rig != *rig {
        return Err(Error::Mismatch(format!(
            "checkpoint {} was trained on a different camera rig",
            dir.display()
        )));
    }
    if ckpt.trainer.step > cfg.steps {
        return Err(Error::Invalid(format!(
            "checkpoint is at step {}, beyond the requested {} steps",
            ckpt.trainer.step, cfg.steps
        )));
    }
    let mut trainer = ckpt.trainer;
    trainer.cfg = cfg;
    Ok(trainer)
}

/// Trains on the records of `run.data` until `cfg.steps` completed steps.
pub fn train(cfg: TrainConfig, run: &TrainRun) -> Result<TrainSummary> {
    cfg.validate()?;
    let (manifest, records) = dataset::read_dataset(&run.data)?;
    let rig = manifest.rig.to_rig()?;
    train_records(cfg, &records, &rig, run)
}

pub fn train_records(cfg: TrainConfig, records: &[ExampleRecord], rig: &CameraRig, run: &TrainRun) -> Result<TrainSummary> {
    if records.len() < cfg.batch_size {
        return Err(Error::Invalid(format!(
            "dataset has {} scenes, fewer than the batch size {}",
            records.len(),
            cfg.batch_size
        )));
    }
    let mut trainer = start(cfg, rig, run.resume.as_deref())?;
    error::create_dir(&run.out)?;
    let log_path = run.out.join(LOSS_LOG);
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let mut emit = |line: &str| -> Result<()> {
        writeln!(log, "{}", line)
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&log_path, e))
    };
    emit(CSV_HEADER)?;

    let mut losses = Vec::new();
    while trainer.step < cfg.steps {
        let before = trainer.clone();
        let t0 = Instant::now();
        let l = match trainer.step(records) {
            Ok(l) => l,
            Err(e) => {
                checkpoint::save(&run.out.join(ABORT_DIR), &before, rig)?;
                let note = format!("step {}: {}\n", before.step + 1, e);
                error::write(&run.out.join(ABORT_DIR).join("error.txt"), note.as_bytes())?;
                return Err(e.into());
            }
        };
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        emit(&csv_row(trainer.step, &l, wall_ms))?;
        if run.verbose && cfg.log_every > 0 && trainer.step % cfg.log_every == 0 {
            eprintln!(
                "step {:>6}  L_DL {:.4}  L_DR {:.4}  L_G {:.4}  L_L {:.4}  L_R {:.4}  {:.0} ms",
                trainer.step, l.loss_dl, l.loss_dr, l.loss_g, l.loss_l, l.loss_r, wall_ms
            );
        }
        losses.push(l);
        if cfg.checkpoint_every > 0 && trainer.step % cfg.checkpoint_every == 0 {
            checkpoint::save(&run.out.join(step_dir_name(trainer.step)), &trainer, rig)?;
        }
    }
    let final_checkpoint = run.out.join(FINAL_DIR);
    checkpoint::save(&final_checkpoint, &trainer, rig)?;
    Ok(TrainSummary {
        trainer,
        rig: *rig,
        losses,
        final_checkpoint,
    })
}
