//! Acceptance criteria, run in sequence so each one is timed alone.
//!
//! `cargo test --test acceptance` runs all seven; pass criterion numbers
//! after `--` to run a subset.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tridepth::{checkpoint, dataset, pfm, run};
use tridepth_core::diff::{GradCheck, GradCheckReport};
use tridepth_core::losses::{self, GanMode, LossConfig, SsimMode};
use tridepth_core::nets::{self, Arch, Models};
use tridepth_core::synth::{self, compute_occlusion_mask, ExampleRecord, SceneConfig};
use tridepth_core::train::{self, Batch, OptState, TrainConfig};
use tridepth_core::warp::{self, CameraRig, Direction, ValidMask};
use tridepth_core::{Graph, Result as CoreResult, Tensor, Var};

type Outcome = Result<String, String>;

fn rig() -> CameraRig {
    CameraRig::new(100.0, 0.5, 96, 64).unwrap()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(seed: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Random-weighted mean, so every output element gets a distinct gradient.
fn probe(g: &mut Graph<f64>, x: Var, seed: u64) -> CoreResult<Var> {
    let w = g.constant(uniform(seed, g.shape(x), 0.5, 1.5));
    let y = g.mul(x, w)?;
    g.reduce_mean(y, None)
}

type Check = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> CoreResult<Var>>;

fn primitive_checks() -> Vec<(&'static str, Check, Vec<Tensor<f64>>)> {
    let img = |seed| uniform(seed, &[2, 3, 6, 7], -1.0, 1.0);
    let pos = |seed| uniform(seed, &[2, 3, 6, 7], 0.5, 2.0);
    let mut v: Vec<(&'static str, Check, Vec<Tensor<f64>>)> = Vec::new();
    for (name, k, stride) in [("conv3x3 stride 1", 3, 1), ("conv3x3 stride 2", 3, 2), ("conv4x4 stride 2", 4, 2)] {
        v.push((
            name,
            Box::new(move |g, x| {
                let y = g.conv2d(x[0], x[1], x[2], stride, 1)?;
                probe(g, y, 1)
            }),
            vec![uniform(2, &[2, 3, 8, 8], -1.0, 1.0), uniform(3, &[4, 3, k, k], -0.5, 0.5), uniform(4, &[4], -0.1, 0.1)],
        ));
    }
    v.push(("leaky_relu", Box::new(|g, x| { let y = g.leaky_relu(x[0], 0.2)?; probe(g, y, 5) }), vec![img(6)]));
    v.push(("sigmoid", Box::new(|g, x| { let y = g.sigmoid(x[0])?; probe(g, y, 7) }), vec![img(8)]));
    v.push(("upsample_nearest2x", Box::new(|g, x| { let y = g.upsample_nearest2x(x[0])?; probe(g, y, 9) }), vec![img(10)]));
    v.push(("add", Box::new(|g, x| { let y = g.add(x[0], x[1])?; probe(g, y, 11) }), vec![img(12), img(13)]));
    v.push(("sub", Box::new(|g, x| { let y = g.sub(x[0], x[1])?; probe(g, y, 14) }), vec![img(15), img(16)]));
    v.push(("mul", Box::new(|g, x| { let y = g.mul(x[0], x[1])?; probe(g, y, 17) }), vec![img(18), img(19)]));
    v.push(("div", Box::new(|g, x| { let y = g.div(x[0], x[1])?; probe(g, y, 20) }), vec![img(21), pos(22)]));
    v.push((
        "abs_diff",
        Box::new(|g, x| { let y = g.abs_diff(x[0], x[1])?; probe(g, y, 23) }),
        vec![pos(24), uniform(25, &[2, 3, 6, 7], -2.0, 0.0)],
    ));
    v.push((
        "masked mean",
        Box::new(|g, x| {
            let mask = Tensor::from_fn(&[2, 1, 6, 7], |i| (i % 3 != 0) as u8 as f64);
            let y = g.mul(x[0], x[0])?;
            g.reduce_mean(y, Some(&mask))
        }),
        vec![img(26)],
    ));
    v.push(("mean_per_item", Box::new(|g, x| { let y = g.mean_per_item(x[0])?; probe(g, y, 27) }), vec![img(28)]));
    v.push((
        "concat_channels",
        Box::new(|g, x| { let y = g.concat_channels(x[0], x[1])?; probe(g, y, 29) }),
        vec![img(30), uniform(31, &[2, 2, 6, 7], -1.0, 1.0)],
    ));
    v.push(("scale_shift", Box::new(|g, x| { let y = g.scale_shift(x[0], -1.5, 0.3)?; probe(g, y, 32) }), vec![img(33)]));
    v.push(("clamp", Box::new(|g, x| { let y = g.clamp(x[0], 0.0, 1.0)?; probe(g, y, 34) }), vec![uniform(35, &[2, 3, 6, 7], 0.05, 0.95)]));
    v.push(("log", Box::new(|g, x| { let y = g.log(x[0])?; probe(g, y, 36) }), vec![pos(37)]));
    v.push(("avg_pool3x3_valid", Box::new(|g, x| { let y = g.avg_pool3x3_valid(x[0])?; probe(g, y, 38) }), vec![img(39)]));
    v.push((
        "sample_x",
        Box::new(|g, x| { let (y, _) = g.sample_x(x[0], x[1])?; probe(g, y, 40) }),
        vec![img(41), {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            Tensor::from_fn(&[2, 1, 6, 7], |_| rng.gen_range(0..6) as f64 + rng.gen_range(0.2..0.8))
        }],
    ));
    for dir in [Direction::Left, Direction::Right] {
        v.push((
            if dir == Direction::Left { "synthesize_view left" } else { "synthesize_view right" },
            Box::new(move |g, x| { let (y, _) = warp::synthesize_view(g, x[0], x[1], dir)?; probe(g, y, 43) }),
            vec![uniform(44, &[1, 3, 5, 12], 0.0, 1.0), {
                let mut rng = ChaCha8Rng::seed_from_u64(45);
                Tensor::from_fn(&[1, 1, 5, 12], |_| rng.gen_range(0..4) as f64 + rng.gen_range(0.2..0.8))
            }],
        ));
    }
    v.push((
        "ssim",
        Box::new(|g, x| losses::ssim(g, x[0], x[1], &LossConfig::default())),
        vec![uniform(46, &[1, 3, 6, 7], 0.0, 1.0), uniform(47, &[1, 3, 6, 7], 0.0, 1.0)],
    ));
    v.push((
        "reconstruction_loss",
        Box::new(|g, x| {
            let mask = ValidMask::new(Tensor::from_fn(&[1, 1, 8, 9], |i| (i % 9 != 0 && i != 40) as u8 as f64));
            losses::reconstruction_loss(g, x[0], x[1], &mask, &LossConfig::default())
        }),
        vec![uniform(48, &[1, 3, 8, 9], 0.0, 1.0), uniform(49, &[1, 3, 8, 9], 0.0, 1.0)],
    ));
    for mode in [GanMode::Paper, GanMode::NonSaturating] {
        v.push((
            if mode == GanMode::Paper { "generator_loss minimax" } else { "generator_loss non-saturating" },
            Box::new(move |g, x| {
                let cfg = LossConfig { gan_mode: mode, ..LossConfig::default() };
                let rl = g.reduce_mean(x[2], None)?;
                let rr = g.reduce_mean(x[3], None)?;
                losses::generator_loss(g, x[0], x[1], rl, rr, &cfg)
            }),
            vec![uniform(50, &[3], 0.1, 0.9), uniform(51, &[3], 0.1, 0.9), uniform(52, &[4], 0.0, 1.0), uniform(53, &[4], 0.0, 1.0)],
        ));
    }
    v.push((
        "discriminator_loss",
        Box::new(|g, x| losses::discriminator_loss(g, x[0], x[1], &LossConfig::default())),
        vec![uniform(54, &[3], 0.1, 0.9), uniform(55, &[3], 0.1, 0.9)],
    ));
    v
}

fn describe(r: &GradCheckReport) -> String {
    format!("max rel err {:.2e} over {} coords", r.max_rel_err, r.checked)
}

fn criterion_gradients() -> Outcome {
    let checker = GradCheck { step: 1e-4, tol: 1e-3, max_coords: None };
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    let mut count = 0;
    for (name, f, inputs) in primitive_checks() {
        let r = checker.run(f, &inputs).map_err(|e| format!("{}: {}", name, e))?;
        count += 1;
        if r.max_rel_err > worst.0 {
            worst = (r.max_rel_err, name);
        }
        if !r.pass {
            failures.push(format!("{} ({})", name, describe(&r)));
        }
    }

    // Generator -> view synthesis -> reconstruction loss, gradients with
    // respect to the center image and every generator tensor. Central
    // differences are only meaningful where no leaky-ReLU input or sample
    // coordinate sits within one step of its kink; this instance has none.
    let models = Models::<f64>::init(14, Arch::default());
    let center = uniform(63, &[1, 3, 16, 16], 0.0, 1.0);
    let real = uniform(64, &[1, 3, 16, 16], 0.0, 1.0);
    let mut inputs = vec![center];
    inputs.extend(models.generator.tensors().into_iter().cloned());
    let composite = GradCheck { step: 1e-4, tol: 1e-3, max_coords: Some(24) };
    let r = composite
        .run(
            |g, v| {
                let net = models.generator.bind_vars(g, &v[1..])?;
                let disp = nets::generator_forward(g, v[0], &net, 3.2)?;
                let (fake, mask) = warp::synthesize_view(g, v[0], disp, Direction::Left)?;
                let real = g.constant(real.clone());
                losses::reconstruction_loss(g, real, fake, &mask, &LossConfig::default())
            },
            &inputs,
        )
        .map_err(|e| format!("composite: {}", e))?;
    if !r.pass {
        failures.push(format!("composite ({}, worst {:?})", describe(&r), r.worst));
    }
    ensure(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} primitives, worst {:.2e} ({}); composite {}",
                count, worst.0, worst.1, describe(&r)
            )
        } else {
            format!("failed: {}", failures.join("; "))
        },
    )
}

/// Mean L1 between a synthesized side view and the rendered one over
/// pixels that are visible in the side view and sampled inside the center
/// image. Returns `(sum, count)`.
fn geometry_error(rec: &ExampleRecord, dir: Direction) -> (f64, usize) {
    let rig = rec.rig;
    let disp = warp::depth_to_disparity_values(&rec.depth_center, &rig).unwrap();
    let (fake, sampled) = warp::synthesize_view_values(&rec.center, &disp, dir).unwrap();
    let visible = compute_occlusion_mask(&rec.depth_center, rec.depth(dir.view()), &rig, dir).unwrap();
    let real = rec.image(dir.view());
    let plane = rig.width * rig.height;
    let (mut sum, mut n) = (0.0, 0);
    for p in 0..plane {
        if visible.tensor().data()[p] > 0.0 && sampled.tensor().data()[p] > 0.0 {
            for c in 0..3 {
                sum += (fake.data()[c * plane + p] - real.data()[c * plane + p]).abs() as f64;
                n += 1;
            }
        }
    }
    (sum, n)
}

fn criterion_geometry() -> Outcome {
    let records = synth::generate(0, 20, &SceneConfig::default(), &rig()).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for dir in [Direction::Left, Direction::Right] {
        let (mut sum, mut n, mut worst) = (0.0, 0, 0.0f64);
        for rec in &records {
            let (s, k) = geometry_error(rec, dir);
            sum += s;
            n += k;
            worst = worst.max(s / k as f64);
        }
        let mean = sum / n as f64;
        ok &= mean <= 0.02;
        parts.push(format!("{:?} mean L1 {:.4} (worst scene {:.4})", dir, mean, worst));
    }
    ensure(ok, format!("{} <= 0.02 over 20 scenes", parts.join(", ")))
}

fn criterion_formulas() -> Outcome {
    let cfg = LossConfig {
        gan_mode: GanMode::Paper,
        ssim_mode: SsimMode::PaperLiteral,
        ..LossConfig::default()
    };
    let mut g = Graph::<f64>::new();
    let half = g.constant(Tensor::full(&[1], 0.5));
    let zero = g.constant(Tensor::scalar(0.0));
    let l = losses::generator_loss(&mut g, half, half, zero, zero, &cfg).map_err(|e| e.to_string())?;
    let adversarial = g.value(l).item();

    let img = uniform(70, &[1, 3, 8, 8], 0.0, 1.0);
    let x = g.constant(img);
    let mask = ValidMask::new(Tensor::full(&[1, 1, 8, 8], 1.0));
    let r = losses::reconstruction_loss(&mut g, x, x, &mask, &cfg).map_err(|e| e.to_string())?;
    let literal = g.value(r).item();

    let black = g.constant(Tensor::zeros(&[1, 3, 8, 8]));
    let white = g.constant(Tensor::full(&[1, 3, 8, 8], 1.0));
    let s = losses::ssim(&mut g, black, white, &cfg).map_err(|e| e.to_string())?;
    let ssim = g.value(s).item();
    let c1 = cfg.c1 / (1.0 + cfg.c1);

    let ok = (adversarial - (-1.38629)).abs() < 1e-5
        && (adversarial - 2.0 * 0.5f64.ln()).abs() < 1e-5
        && (literal - 1.0).abs() < 1e-5
        && (ssim - c1).abs() < 1e-5;
    ensure(
        ok,
        format!(
            "adversarial {:.6} (want -1.38629), literal reconstruction {:.6} (want 1), constant SSIM {:.6e} (want {:.6e})",
            adversarial, literal, ssim, c1
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_overfit() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = root.path().join("data");
    dataset::generate_dataset(&data, 4, &rig(), &SceneConfig::default(), 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        steps: 500,
        seed: 1,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let run = run::TrainRun {
        data,
        out: root.path().join("run"),
        resume: None,
        verbose: false,
    };
    let summary = run::train(cfg, &run).map_err(|e| e.to_string())?;
    let recon: Vec<f64> = summary.losses.iter().map(|l| l.loss_l + l.loss_r).collect();
    let (first, last) = (mean(&recon[..50]), mean(&recon[450..]));
    let ratio = last / first;
    ensure(
        ratio <= 0.5,
        format!(
            "mean L_L+L_R steps 1-50 {:.4}, steps 451-500 {:.4}, ratio {:.3} (need <= 0.5)",
            first, last, ratio
        ),
    )
}

fn criterion_depth_recovery() -> Outcome {
    let cfg = TrainConfig {
        steps: 2000,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let scenes = SceneConfig {
        max_objects: 0,
        ..SceneConfig::default()
    };
    let records = synth::generate(1, 32, &scenes, &rig()).map_err(|e| e.to_string())?;
    let (train_set, held_out) = records.split_at(24);
    let mut trainer = train::Trainer::new(cfg).map_err(|e| e.to_string())?;
    for _ in 0..cfg.steps {
        trainer.step(train_set).map_err(|e| e.to_string())?;
    }
    let report = train::evaluate(&trainer.models.generator, held_out, cfg.d_max_frac, false).map_err(|e| e.to_string())?;
    let median = report.median_scene_abs_rel().unwrap_or(f64::NAN);
    ensure(
        median <= 0.25,
        format!(
            "held-out median abs_rel {:.4} (need <= 0.25); pooled abs_rel {:.4}, delta1 {:.3}; lambda {}, lr {}",
            median, report.overall.abs_rel, report.overall.delta1, cfg.loss.lambda_gan, cfg.adam.lr
        ),
    )
}

fn random_disparity(rng: &mut ChaCha8Rng, b: usize, d_max: f64) -> Tensor<f32> {
    let r = rig();
    Tensor::from_fn(&[b, 1, r.height, r.width], |_| rng.gen_range(0.0..d_max) as f32)
}

fn criterion_discriminators() -> Outcome {
    let cfg = TrainConfig::default();
    let d_max = cfg.d_max(rig().width);
    let train_set = synth::generate(1, 32, &SceneConfig::default(), &rig()).map_err(|e| e.to_string())?;
    let test_set = synth::generate(2, 8, &SceneConfig::default(), &rig()).map_err(|e| e.to_string())?;
    let mut models = Models::<f32>::init(cfg.seed, cfg.arch);
    let generator_before = models.generator.clone();
    let mut opt = OptState::new(&models);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let err = |e: tridepth_core::Error| e.to_string();
    for step in 0..200 {
        let idx = train::batch_indices(cfg.seed, step, train_set.len(), cfg.batch_size).map_err(err)?;
        let items: Vec<&ExampleRecord> = idx.iter().map(|&i| &train_set[i]).collect();
        let batch = Batch::from_records(&items).map_err(err)?;
        let disp = random_disparity(&mut rng, batch.len(), d_max);
        for dir in [Direction::Left, Direction::Right] {
            train::update_discriminator_side(&mut models, &mut opt, &batch, &disp, dir, &cfg).map_err(err)?;
        }
    }
    if models.generator != generator_before {
        return Err("generator changed during discriminator-only training".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut correct, mut total) = (0, 0);
    for rec in &test_set {
        let disp = random_disparity(&mut rng, 1, d_max);
        for dir in [Direction::Left, Direction::Right] {
            let (fake, mask) = warp::synthesize_view_values(&rec.center, &disp, dir).map_err(err)?;
            let real = losses::mask_image(rec.image(dir.view()), &mask).map_err(err)?;
            let net = match dir {
                Direction::Left => &models.disc_left,
                Direction::Right => &models.disc_right,
            };
            let p_real = nets::predict_probability(net, &real).map_err(err)?[0];
            let p_fake = nets::predict_probability(net, &fake).map_err(err)?[0];
            correct += (p_real > 0.5) as usize + (p_fake < 0.5) as usize;
            total += 2;
        }
    }
    let acc = correct as f64 / total as f64;
    ensure(
        acc >= 0.95,
        format!("accuracy {:.3} ({}/{}) on 8 unseen scenes after 200 steps on 32 (need >= 0.95)", acc, correct, total),
    )
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn max_loss_gap(a: &[(u64, [f64; 5])], b: &[(u64, [f64; 5])]) -> Option<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
        return None;
    }
    Some(
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.1.iter().zip(&y.1).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max),
    )
}

fn criterion_persistence() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: tridepth::Error| e.to_string();
    let (data_a, data_b) = (root.path().join("data_a"), root.path().join("data_b"));
    for d in [&data_a, &data_b] {
        dataset::generate_dataset(d, 4, &rig(), &SceneConfig::default(), 1).map_err(err)?;
    }
    let same_data = tree(&data_a) == tree(&data_b);

    let cfg = TrainConfig {
        steps: 200,
        seed: 3,
        checkpoint_every: 100,
        ..TrainConfig::default()
    };
    let run_at = |name: &str, steps: u64, resume: Option<std::path::PathBuf>| {
        let run = run::TrainRun {
            data: data_a.clone(),
            out: root.path().join(name),
            resume,
            verbose: false,
        };
        run::train(TrainConfig { steps, ..cfg }, &run).map(|s| (s, run.out.join(run::LOSS_LOG)))
    };
    let (full, log_a) = run_at("a", 200, None).map_err(err)?;
    let (_, log_b) = run_at("b", 200, None).map_err(err)?;
    let resume_from = root.path().join("a").join(run::step_dir_name(100));
    let (resumed, log_c) = run_at("c", 200, Some(resume_from)).map_err(err)?;
    let (a, b, c) = (
        run::read_loss_log(&log_a).map_err(err)?,
        run::read_loss_log(&log_b).map_err(err)?,
        run::read_loss_log(&log_c).map_err(err)?,
    );
    let csv_gap = max_loss_gap(&a, &b);
    let resume_gap = max_loss_gap(&a[100..], &c);
    let same_state = resumed.trainer == full.trainer;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let map = pfm::FloatMap {
        width: 96,
        height: 64,
        data: (0..96 * 64)
            .map(|i| match i {
                0 => f32::MIN_POSITIVE,
                1 => f32::MAX,
                2 => -0.0,
                _ => f32::from_bits(rng.gen::<u32>() & 0x7f7f_ffff),
            })
            .collect(),
    };
    let pfm_path = root.path().join("d.pfm");
    pfm::write(&pfm_path, &map).map_err(err)?;
    let back = pfm::read(&pfm_path).map_err(err)?;
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let pfm_ok = back.width == map.width && back.height == map.height && bits(&back.data) == bits(&map.data);

    let ckpt = checkpoint::load(&full.final_checkpoint).map_err(err)?;
    let params_bits = |m: &Models<f32>| {
        m.named_tensors()
            .iter()
            .flat_map(|(_, t)| bits(t.data()))
            .collect::<Vec<_>>()
    };
    let params_ok = params_bits(&ckpt.trainer.models) == params_bits(&full.trainer.models) && ckpt.trainer.opt == full.trainer.opt;

    let ok = same_data
        && csv_gap.is_some_and(|g| g <= 1e-6)
        && resume_gap.is_some_and(|g| g <= 1e-6)
        && same_state
        && pfm_ok
        && params_ok;
    ensure(
        ok,
        format!(
            "dataset identical {}, CSV gap {:?}, resume gap at steps 101-200 {:?}, resumed state equal {}, PFM bitwise {}, params bitwise {}",
            same_data, csv_gap, resume_gap, same_state, pfm_ok, params_ok
        ),
    )
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", budget: Duration::from_secs(120), run: criterion_gradients },
        Criterion { id: 2, name: "geometry oracle", budget: Duration::from_secs(60), run: criterion_geometry },
        Criterion { id: 3, name: "formula fidelity", budget: Duration::from_secs(60), run: criterion_formulas },
        Criterion { id: 4, name: "overfit descent", budget: Duration::from_secs(15 * 60), run: criterion_overfit },
        Criterion { id: 5, name: "depth recovery", budget: Duration::from_secs(45 * 60), run: criterion_depth_recovery },
        Criterion { id: 6, name: "discriminator learnability", budget: Duration::from_secs(5 * 60), run: criterion_discriminators },
        Criterion { id: 7, name: "determinism and persistence", budget: Duration::from_secs(15 * 60), run: criterion_persistence },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let t0 = Instant::now();
        let outcome = (c.run)();
        let elapsed = t0.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{}; over the {} s budget", d, c.budget.as_secs())),
            Err(d) => (false, d),
        };
        println!(
            "criterion {} {}: {} [{:.1} s] {}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            detail
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", failed);
        std::process::exit(1);
    }
}
