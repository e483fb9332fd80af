//! Checkpoint directories: `meta.json`, `params.bin` and `adam.bin`.
//!
//! `params.bin` holds every parameter tensor as 32-bit little-endian floats
//! in manifest order; each manifest entry records its byte offset.
//! `adam.bin` holds all first moments in the same order, followed by all
//! second moments, so a tensor's first moment sits at its offset and its
//! second moment at `params_bytes + offset`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tridepth_core::train::Trainer;
use tridepth_core::warp::CameraRig;

use crate::config::RunConfig;
use crate::dataset::RigJson;
use crate::error::{self, Error, Result};

pub const META: &str = "meta.json";
pub const PARAMS: &str = "params.bin";
pub const ADAM: &str = "adam.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// Batch order is a pure function of the seed and the step counter, so
/// those two values are the whole sampler state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSteps {
    pub generator: u64,
    pub disc_left: u64,
    pub disc_right: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format_version: u32,
    pub step: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub rig: RigJson,
    pub rng: RngState,
    pub adam_steps: AdamSteps,
    pub tensors: Vec<TensorEntry>,
}

/// A trainer restored from disk together with the rig it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub trainer: Trainer,
    pub rig: CameraRig,
}

fn push_f32(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f32(bytes: &[u8], offset: usize, n: usize, path: &Path) -> Result<Vec<f32>> {
    let end = offset + 4 * n;
    if end > bytes.len() {
        return Err(Error::format(path, format!("needs {} bytes, file has {}", end, bytes.len())));
    }
    Ok(bytes[offset..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn save(dir: &Path, trainer: &Trainer, rig: &CameraRig) -> Result<()> {
    error::create_dir(dir)?;
    let mut params = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in trainer.models.named_tensors() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset: params.len(),
        });
        push_f32(&mut params, t.data());
    }
    let opt = &trainer.opt;
    let states = [&opt.generator, &opt.disc_left, &opt.disc_right];
    let mut adam = Vec::with_capacity(2 * params.len());
    for s in states {
        for m in &s.m {
            push_f32(&mut adam, m);
        }
    }
    for s in states {
        for v in &s.v {
            push_f32(&mut adam, v);
        }
    }
    let config = RunConfig::from(&trainer.cfg);
    let meta = Meta {
        format_version: FORMAT_VERSION,
        step: trainer.step,
        config_hash: config.hash(),
        config,
        rig: (*rig).into(),
        rng: RngState {
            seed: trainer.cfg.seed,
            next_step: trainer.step,
        },
        adam_steps: AdamSteps {
            generator: opt.generator.t,
            disc_left: opt.disc_left.t,
            disc_right: opt.disc_right.t,
        },
        tensors,
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    json.push('\n');
    error::write(&dir.join(PARAMS), &params)?;
    error::write(&dir.join(ADAM), &adam)?;
    error::write(&dir.join(META), json.as_bytes())
}

pub fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join(META);
    let meta: Meta = serde_json::from_slice(&error::read(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format_version {}", meta.format_version)));
    }
    if meta.config_hash != meta.config.hash() {
        return Err(Error::format(&path, "config_hash does not match the stored config"));
    }
    Ok(meta)
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let meta = read_meta(dir)?;
    let meta_path = dir.join(META);
    let mut trainer = Trainer::new((&meta.config).into())?;
    trainer.step = meta.step;
    let rig = meta.rig.to_rig()?;

    let params_path = dir.join(PARAMS);
    let params = error::read(&params_path)?;
    let adam_path = dir.join(ADAM);
    let adam = error::read(&adam_path)?;

    let expected: Vec<(String, Vec<usize>)> = trainer
        .models
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != meta.tensors.len() {
        return Err(Error::format(
            &meta_path,
            format!("{} tensors listed, architecture has {}", meta.tensors.len(), expected.len()),
        ));
    }
    let total: usize = expected.iter().map(|(_, s)| 4 * s.iter().product::<usize>()).sum();
    if params.len() != total {
        return Err(Error::format(&params_path, format!("{} bytes, expected {}", params.len(), total)));
    }
    if adam.len() != 2 * total {
        return Err(Error::format(&adam_path, format!("{} bytes, expected {}", adam.len(), 2 * total)));
    }
    for ((name, shape), entry) in expected.iter().zip(&meta.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(Error::format(
                &meta_path,
                format!("entry {} {:?} does not match {} {:?}", entry.name, entry.shape, name, shape),
            ));
        }
    }

    let entries = meta.tensors.iter();
    let tensors = trainer.models.tensors_mut();
    for (t, e) in tensors.into_iter().zip(entries.clone()) {
        let n = t.len();
        t.data_mut().copy_from_slice(&read_f32(&params, e.offset, n, &params_path)?);
    }
    let opt = &mut trainer.opt;
    opt.generator.t = meta.adam_steps.generator;
    opt.disc_left.t = meta.adam_steps.disc_left;
    opt.disc_right.t = meta.adam_steps.disc_right;
    let moments = opt
        .generator
        .m
        .iter_mut()
        .chain(opt.disc_left.m.iter_mut())
        .chain(opt.disc_right.m.iter_mut())
        .zip(entries.clone().map(|e| e.offset))
        .chain(
            opt.generator
                .v
                .iter_mut()
                .chain(opt.disc_left.v.iter_mut())
                .chain(opt.disc_right.v.iter_mut())
                .zip(entries.map(|e| total + e.offset)),
        );
    for (buf, offset) in moments {
        let n = buf.len();
        buf.copy_from_slice(&read_f32(&adam, offset, n, &adam_path)?);
    }
    Ok(Checkpoint { trainer, rig })
}
