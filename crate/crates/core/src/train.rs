//! Alternating adversarial optimization: Adam, the two-phase training step,
//! deterministic batch scheduling and evaluation against ground truth.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{Graph, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::losses::{self, LossConfig};
use crate::metrics::{self, MetricsAccumulator, MetricsReport, SceneMetrics};
use crate::nets::{self, Arch, Models, NetParams};
use crate::scalar::Scalar;
use crate::synth::{compute_occlusion_mask, ExampleRecord};
use crate::warp::{self, CameraRig, Direction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments for one network, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub t: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            t: 0,
            m: sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
            v: sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
        }
    }

    pub fn for_net(net: &NetParams<S>) -> Self {
        Self::new(net.tensors().into_iter().map(Tensor::len))
    }
}

/// One bias-corrected Adam update. Every gradient is checked before any
/// parameter changes, so a non-finite gradient leaves the state untouched.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[Vec<S>],
    state: &mut AdamState<S>,
    hyper: &AdamHyper,
    names: &[String],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.m[i].len() != g.len() {
            return Err(shape_err("adam_step", format!("tensor {} length mismatch", i)));
        }
        if g.iter().any(|v| !v.is_finite()) {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("#{}", i));
            return Err(Error::NonFiniteGradient { name });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::from_f64(hyper.beta1);
    let b2 = S::from_f64(hyper.beta2);
    let one_b1 = S::from_f64(1.0 - hyper.beta1);
    let one_b2 = S::from_f64(1.0 - hyper.beta2);
    let corr1 = S::from_f64(1.0 / (1.0 - libm::pow(hyper.beta1, t as f64)));
    let corr2 = S::from_f64(1.0 / (1.0 - libm::pow(hyper.beta2, t as f64)));
    let lr = S::from_f64(hyper.lr);
    let eps = S::from_f64(hyper.eps);
    for (i, p) in params.iter_mut().enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((w, &g), (mi, vi)) in p.data_mut().iter_mut().zip(&grads[i]).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = b1 * *mi + one_b1 * g;
            *vi = b2 * *vi + one_b2 * g * g;
            let mhat = *mi * corr1;
            let vhat = *vi * corr2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

fn step_net<S: Scalar>(
    net: &mut NetParams<S>,
    grads: &[Vec<S>],
    state: &mut AdamState<S>,
    hyper: &AdamHyper,
) -> Result<()> {
    let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut params = net.tensors_mut();
    adam_step(&mut params, grads, state, hyper, &names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState<S> {
    pub generator: AdamState<S>,
    pub disc_left: AdamState<S>,
    pub disc_right: AdamState<S>,
}

impl<S: Scalar> OptState<S> {
    pub fn new(models: &Models<S>) -> Self {
        Self {
            generator: AdamState::for_net(&models.generator),
            disc_left: AdamState::for_net(&models.disc_left),
            disc_right: AdamState::for_net(&models.disc_right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Disparity ceiling as a fraction of image width.
    pub d_max_frac: f64,
    pub loss: LossConfig,
    pub arch: Arch,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 2,
            adam: AdamHyper::default(),
            seed: 0,
            d_max_frac: 0.2,
            loss: LossConfig::default(),
            arch: Arch::default(),
            checkpoint_every: 100,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.adam.lr));
        }
        for (name, b) in [("beta1", self.adam.beta1), ("beta2", self.adam.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{} must lie in (0, 1), got {}", name, b));
            }
        }
        if !(self.adam.eps > 0.0) {
            return bad("adam eps must be positive".into());
        }
        if !(self.d_max_frac > 0.0 && self.d_max_frac <= 1.0) {
            return bad(format!("d_max_frac must lie in (0, 1], got {}", self.d_max_frac));
        }
        self.loss.validate()
    }

    pub fn d_max(&self, width: usize) -> f64 {
        self.d_max_frac * width as f64
    }
}

/// Images of several records stacked along the batch axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub left: Tensor<f32>,
    pub center: Tensor<f32>,
    pub right: Tensor<f32>,
    pub rig: CameraRig,
}

impl Batch {
    pub fn from_records(records: &[&ExampleRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Config("empty batch".into()))?;
        let rig = first.rig;
        for r in records {
            if r.rig != rig {
                return Err(Error::Config("records in a batch use different rigs".into()));
            }
            if r.center.shape() != [1, 3, rig.height, rig.width] {
                return Err(shape_err(
                    "batch",
                    format!("image {:?} does not match rig {}x{}", r.center.shape(), rig.width, rig.height),
                ));
            }
        }
        let stack = |f: fn(&ExampleRecord) -> &Tensor<f32>| {
            let items: Vec<&Tensor<f32>> = records.iter().map(|r| f(r)).collect();
            Tensor::stack_batch(&items)
        };
        Ok(Self {
            left: stack(|r| &r.left)?,
            center: stack(|r| &r.center)?,
            right: stack(|r| &r.right)?,
            rig,
        })
    }

    pub fn len(&self) -> usize {
        self.center.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real(&self, direction: Direction) -> &Tensor<f32> {
        match direction {
            Direction::Left => &self.left,
            Direction::Right => &self.right,
        }
    }
}

/// Scalar losses of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub loss_dl: f64,
    pub loss_dr: f64,
    pub loss_g: f64,
    pub loss_l: f64,
    pub loss_r: f64,
}

impl StepLosses {
    fn check(&self, step: u64) -> Result<()> {
        for (name, v) in [
            ("loss_dl", self.loss_dl),
            ("loss_dr", self.loss_dr),
            ("loss_g", self.loss_g),
            ("loss_l", self.loss_l),
            ("loss_r", self.loss_r),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { name, step });
            }
        }
        Ok(())
    }
}

/// One discriminator update on real images (masked like the fake) versus
/// a fixed reconstruction. Returns the loss before the update.
fn update_discriminator(
    net: &mut NetParams<f32>,
    state: &mut AdamState<f32>,
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g, true);
    let real = g.constant(real.clone());
    let fake = g.constant(fake.clone());
    let d_real = nets::discriminator_forward(&mut g, real, &bound)?;
    let d_fake = nets::discriminator_forward(&mut g, fake, &bound)?;
    let loss = losses::discriminator_loss(&mut g, d_real, d_fake, &cfg.loss)?;
    let value = g.value(loss).item() as f64;
    g.backward(loss)?;
    let grads = bound.grads(&g);
    step_net(net, &grads, state, &cfg.adam)?;
    Ok(value)
}

/// Updates one discriminator against the reconstruction of its side made
/// from `disp` (`[B, 1, H, W]`). Returns the loss before the update.
pub fn update_discriminator_side(
    models: &mut Models<f32>,
    opt: &mut OptState<f32>,
    batch: &Batch,
    disp: &Tensor<f32>,
    direction: Direction,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (fake, mask) = warp::synthesize_view_values(&batch.center, disp, direction)?;
    let real = losses::mask_image(batch.real(direction), &mask)?;
    let (net, state) = match direction {
        Direction::Left => (&mut models.disc_left, &mut opt.disc_left),
        Direction::Right => (&mut models.disc_right, &mut opt.disc_right),
    };
    update_discriminator(net, state, &real, &fake, cfg)
}

/// Updates both discriminators; returns `(loss_dl, loss_dr)`.
pub fn update_discriminators(
    models: &mut Models<f32>,
    opt: &mut OptState<f32>,
    batch: &Batch,
    disp: &Tensor<f32>,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let dl = update_discriminator_side(models, opt, batch, disp, Direction::Left, cfg)?;
    let dr = update_discriminator_side(models, opt, batch, disp, Direction::Right, cfg)?;
    Ok((dl, dr))
}

struct GeneratorPass {
    graph: Graph<f32>,
    loss_g: crate::Var,
    loss_l: f64,
    loss_r: f64,
    bound: nets::BoundNet,
}

fn generator_pass(models: &Models<f32>, batch: &Batch, cfg: &TrainConfig) -> Result<GeneratorPass> {
    let mut g = Graph::new();
    let gen = models.generator.bind(&mut g, true);
    let dl = models.disc_left.bind(&mut g, false);
    let dr = models.disc_right.bind(&mut g, false);
    let center = g.constant(batch.center.clone());
    let disp = nets::generator_forward(&mut g, center, &gen, cfg.d_max(batch.rig.width))?;
    let mut recon = [center; 2];
    let mut prob = [center; 2];
    for (k, (dir, disc)) in [(Direction::Left, &dl), (Direction::Right, &dr)].into_iter().enumerate() {
        let (fake, mask) = warp::synthesize_view(&mut g, center, disp, dir)?;
        let real = g.constant(batch.real(dir).clone());
        recon[k] = losses::reconstruction_loss(&mut g, real, fake, &mask, &cfg.loss)?;
        prob[k] = nets::discriminator_forward(&mut g, fake, disc)?;
    }
    let loss_g = losses::generator_loss(&mut g, prob[0], prob[1], recon[0], recon[1], &cfg.loss)?;
    let loss_l = g.value(recon[0]).item() as f64;
    let loss_r = g.value(recon[1]).item() as f64;
    Ok(GeneratorPass {
        graph: g,
        loss_g,
        loss_l,
        loss_r,
        bound: gen,
    })
}

/// Evaluates `(L_G, L_L, L_R)` without updating anything.
pub fn generator_losses(models: &Models<f32>, batch: &Batch, cfg: &TrainConfig) -> Result<(f64, f64, f64)> {
    let pass = generator_pass(models, batch, cfg)?;
    Ok((pass.graph.value(pass.loss_g).item() as f64, pass.loss_l, pass.loss_r))
}

/// One G update with both discriminators frozen. Returns `(L_G, L_L, L_R)`
/// measured before the update.
pub fn update_generator(
    models: &mut Models<f32>,
    opt: &mut OptState<f32>,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let mut pass = generator_pass(models, batch, cfg)?;
    let loss_g = pass.graph.value(pass.loss_g).item() as f64;
    pass.graph.backward(pass.loss_g)?;
    let grads = pass.bound.grads(&pass.graph);
    drop(pass.graph);
    step_net(&mut models.generator, &grads, &mut opt.generator, &cfg.adam)?;
    Ok((loss_g, pass.loss_l, pass.loss_r))
}

/// Discriminator phase on reconstructions from the current generator,
/// followed by a generator phase against the updated discriminators.
pub fn train_step(
    batch: &Batch,
    models: &mut Models<f32>,
    opt: &mut OptState<f32>,
    cfg: &TrainConfig,
    step: u64,
) -> Result<StepLosses> {
    let disp = nets::predict_disparity(&models.generator, &batch.center, cfg.d_max(batch.rig.width))?;
    let (loss_dl, loss_dr) = update_discriminators(models, opt, batch, &disp, cfg)?;
    let (loss_g, loss_l, loss_r) = update_generator(models, opt, batch, cfg)?;
    let losses = StepLosses {
        loss_dl,
        loss_dr,
        loss_g,
        loss_l,
        loss_r,
    };
    losses.check(step)?;
    Ok(losses)
}

/// Seeded permutation of `0..n` for `epoch`, cut into full batches.
pub fn epoch_batches(seed: u64, epoch: u64, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
        .chunks_exact(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Record indices used at zero-based `step`.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch_size: usize) -> Result<Vec<usize>> {
    let per_epoch = (n / batch_size) as u64;
    if per_epoch == 0 {
        return Err(Error::Config(format!(
            "dataset of {} scenes cannot fill a batch of {}",
            n, batch_size
        )));
    }
    let batches = epoch_batches(seed, step / per_epoch, n, batch_size);
    Ok(batches[(step % per_epoch) as usize].clone())
}

/// Complete training state: weights, optimizer moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub models: Models<f32>,
    pub opt: OptState<f32>,
    /// Number of completed steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let models = Models::init(cfg.seed, cfg.arch);
        let opt = OptState::new(&models);
        Ok(Self {
            cfg,
            models,
            opt,
            step: 0,
        })
    }

    pub fn batch(&self, records: &[ExampleRecord]) -> Result<Batch> {
        let idx = batch_indices(self.cfg.seed, self.step, records.len(), self.cfg.batch_size)?;
        let items: Vec<&ExampleRecord> = idx.iter().map(|&i| &records[i]).collect();
        Batch::from_records(&items)
    }

    /// Runs the next scheduled step over `records`.
    pub fn step(&mut self, records: &[ExampleRecord]) -> Result<StepLosses> {
        let batch = self.batch(records)?;
        let losses = train_step(&batch, &mut self.models, &mut self.opt, &self.cfg, self.step + 1)?;
        self.step += 1;
        Ok(losses)
    }
}

/// Depth metrics of the generator on `records` against the center
/// ground truth; with `occlusion_masked`, only pixels visible in both side
/// views are scored.
pub fn evaluate(
    generator: &NetParams<f32>,
    records: &[ExampleRecord],
    d_max_frac: f64,
    occlusion_masked: bool,
) -> Result<MetricsReport> {
    let mut total = MetricsAccumulator::default();
    let mut scenes = Vec::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        let disp = nets::predict_disparity(generator, &r.center, d_max_frac * r.rig.width as f64)?;
        let depth = warp::disparity_to_depth_values(&disp, &r.rig);
        let mask = if occlusion_masked {
            let ml = compute_occlusion_mask(&r.depth_center, &r.depth_left, &r.rig, Direction::Left)?;
            let mr = compute_occlusion_mask(&r.depth_center, &r.depth_right, &r.rig, Direction::Right)?;
            let both: Vec<f32> = ml
                .tensor()
                .data()
                .iter()
                .zip(mr.tensor().data())
                .map(|(a, b)| a * b)
                .collect();
            Some(both)
        } else {
            None
        };
        let acc = metrics::accumulate(depth.data(), r.depth_center.data(), mask.as_deref());
        total.merge(&acc);
        scenes.push(SceneMetrics {
            index,
            scene_seed: r.scene_seed,
            metrics: acc.finish(),
        });
    }
    Ok(MetricsReport {
        overall: total.finish(),
        scenes,
    })
}
