//! Times training steps on a small synthetic dataset.
//!
//! Usage: `step_timing [steps] [lambda_gan] [lr] [seed]`

use std::time::Instant;

use tridepth_core::synth::{self, SceneConfig};
use tridepth_core::train::{TrainConfig, Trainer};
use tridepth_core::warp::CameraRig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let steps = arg(1, 10.0) as u64;
    let mut cfg = TrainConfig::default();
    cfg.loss.lambda_gan = arg(2, cfg.loss.lambda_gan);
    cfg.adam.lr = arg(3, cfg.adam.lr);
    cfg.seed = arg(4, 0.0) as u64;
    let rig = CameraRig::new(100.0, 0.5, 96, 64).unwrap();
    let records = synth::generate(1, 4, &SceneConfig::default(), &rig).unwrap();
    let mut trainer = Trainer::new(cfg).unwrap();
    let t0 = Instant::now();
    let mut recon = Vec::new();
    for _ in 0..steps {
        let l = trainer.step(&records).unwrap();
        println!("{:.4} {:.4} {:.4} {:.4} {:.4}", l.loss_dl, l.loss_dr, l.loss_g, l.loss_l, l.loss_r);
        recon.push(l.loss_l + l.loss_r);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    let n = recon.len();
    if n >= 100 {
        println!(
            "first50 {:.4} last50 {:.4} ratio {:.3}",
            mean(&recon[..50]),
            mean(&recon[n - 50..]),
            mean(&recon[n - 50..]) / mean(&recon[..50])
        );
    }
    println!("{:.1} ms/step", t0.elapsed().as_secs_f64() * 1e3 / steps as f64);
}
