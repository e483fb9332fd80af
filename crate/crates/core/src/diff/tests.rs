use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn check(f: impl Fn(&mut Graph<f64>, &[Var]) -> crate::Result<Var>, inputs: &[Tensor<f64>]) {
    let r = grad_check(f, inputs, 1e-4, 1e-3).unwrap();
    assert!(r.pass, "gradient check failed: {:?}", r);
}

/// Weighted sum with fixed random weights, so every output coordinate
/// contributes a distinct amount to the scalar.
fn probe(g: &mut Graph<f64>, x: Var, seed: u64) -> crate::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, g.shape(x), -1.0, 1.0);
    let w = g.constant(w);
    let y = g.mul(x, w)?;
    g.reduce_mean(y, None)
}

const SHAPES: [[usize; 4]; 3] = [[1, 1, 4, 4], [2, 3, 6, 5], [1, 2, 8, 8]];

#[test]
fn conv_box_sum_of_ones() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1, 1).unwrap();
    let out = g.value(y);
    assert_eq!(out.shape(), &[1, 1, 3, 3]);
    assert_eq!(out.data()[4], 9.0);
    assert_eq!(out.data()[0], 4.0);
    assert_eq!(out.data()[1], 6.0);
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = rand_tensor(&mut rng, &[2, 1, 5, 7], -1.0, 1.0);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let mut g = Graph::<f64>::new();
    let x = g.constant(input.clone());
    let w = g.constant(Tensor::new(&[1, 1, 3, 3], k).unwrap());
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1, 1).unwrap();
    assert_eq!(g.value(y), &input);
}

#[test]
fn conv_output_sizes() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 64, 96]));
    let w3 = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
    let w4 = g.constant(Tensor::zeros(&[4, 2, 4, 4]));
    let b = g.constant(Tensor::zeros(&[4]));
    let y = g.conv2d(x, w3, b, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 32, 48]);
    let y = g.conv2d(x, w4, b, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 32, 48]);
    let y = g.conv2d(x, w3, b, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 62, 94]);
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 8, 8]));
    let w = g.constant(Tensor::zeros(&[4, 3, 3, 3]));
    let w5 = g.constant(Tensor::zeros(&[4, 2, 5, 5]));
    let b = g.constant(Tensor::zeros(&[4]));
    assert!(matches!(g.conv2d(x, w, b, 1, 1), Err(Error::Shape { .. })));
    assert!(matches!(g.conv2d(x, w5, b, 1, 1), Err(Error::Shape { .. })));
    let w = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, w, b, 3, 1), Err(Error::Shape { .. })));
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[4, 3, 3, 3], -0.5, 0.5);
    let b = rand_tensor(&mut rng, &[4], -0.5, 0.5);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, pad)?;
                probe(g, y, 5)
            },
            &[x.clone(), w.clone(), b.clone()],
        );
    }
    let w4 = rand_tensor(&mut rng, &[2, 3, 4, 4], -0.5, 0.5);
    let b4 = rand_tensor(&mut rng, &[2], -0.5, 0.5);
    check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 1)?;
            probe(g, y, 6)
        },
        &[x, w4, b4],
    );
}

#[test]
fn activation_values() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(&[3], vec![-1.0, 2.0, 0.0]).unwrap());
    let y = g.leaky_relu(x, 0.2).unwrap();
    assert_eq!(g.value(y).data(), &[-0.2, 2.0, 0.0]);
    let s = g.sigmoid(x).unwrap();
    assert_eq!(g.value(s).data()[2], 0.5);
    assert!(g.value(s).data().iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for shape in SHAPES {
        let x = rand_tensor(&mut rng, &shape, -3.0, 3.0);
        check(|g, v| {
            let y = g.leaky_relu(v[0], 0.2)?;
            probe(g, y, 1)
        }, &[x.clone()]);
        check(|g, v| {
            let y = g.sigmoid(v[0])?;
            probe(g, y, 2)
        }, &[x]);
    }
}

#[test]
fn upsample_blocks_and_inverse() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.upsample_nearest2x(x).unwrap();
    let expect = [
        1.0, 1.0, 2.0, 2.0, //
        1.0, 1.0, 2.0, 2.0, //
        3.0, 3.0, 4.0, 4.0, //
        3.0, 3.0, 4.0, 4.0,
    ];
    assert_eq!(g.value(y).shape(), &[1, 1, 4, 4]);
    assert_eq!(g.value(y).data(), &expect);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = rand_tensor(&mut rng, &[2, 3, 5, 6], -1.0, 1.0);
    let mut g = Graph::<f64>::new();
    let x = g.constant(t.clone());
    let y = g.upsample_nearest2x(x).unwrap();
    let up = g.value(y);
    let (b, c, h, w) = t.dims4().unwrap();
    let pooled: Vec<f64> = (0..b * c * h * w)
        .map(|i| {
            let (p, yy, xx) = (i / (h * w), (i / w) % h, i % w);
            let at = |dy: usize, dx: usize| up.data()[p * 4 * h * w + (2 * yy + dy) * 2 * w + 2 * xx + dx];
            (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0
        })
        .collect();
    assert_eq!(pooled, t.data());
}

#[test]
fn upsample_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for shape in SHAPES {
        let x = rand_tensor(&mut rng, &shape, -1.0, 1.0);
        check(|g, v| {
            let y = g.upsample_nearest2x(v[0])?;
            probe(g, y, 3)
        }, &[x]);
    }
}

#[test]
fn reduce_mean_with_mask() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let m = Tensor::new(&[4], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    let y = g.reduce_mean(x, Some(&m)).unwrap();
    assert_eq!(g.value(y).item(), 1.5);
    let empty = Tensor::zeros(&[4]);
    assert!(matches!(g.reduce_mean(x, Some(&empty)), Err(Error::EmptyMask { .. })));
}

#[test]
fn reduce_mean_broadcasts_single_channel_mask() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::from_fn(&[1, 2, 1, 2], |i| i as f64));
    let m = Tensor::new(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
    let y = g.reduce_mean(x, Some(&m)).unwrap();
    // selects values 1 and 3
    assert_eq!(g.value(y).item(), 2.0);
}

#[test]
fn abs_diff_of_self_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Graph::<f64>::new();
    let x = g.constant(rand_tensor(&mut rng, &[2, 3, 4, 4], -1.0, 1.0));
    let y = g.abs_diff(x, x).unwrap();
    assert!(g.value(y).data().iter().all(|v| *v == 0.0));
}

#[test]
fn elementwise_and_misc_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for shape in SHAPES {
        let a = rand_tensor(&mut rng, &shape, -1.0, 1.0);
        let b = rand_tensor(&mut rng, &shape, 0.5, 1.5);
        for kind in [Binary::Add, Binary::Sub, Binary::Mul, Binary::Div, Binary::AbsDiff] {
            check(|g, v| {
                let y = g.elementwise(v[0], v[1], kind)?;
                probe(g, y, 4)
            }, &[a.clone(), b.clone()]);
        }
        let mask = Tensor::from_fn(&shape, |i| if i % 3 == 0 { 0.0 } else { 1.0 });
        check(|g, v| {
            let y = g.mul(v[0], v[0])?;
            g.reduce_mean(y, Some(&mask))
        }, &[a.clone()]);
        check(|g, v| {
            let y = g.concat_channels(v[0], v[1])?;
            probe(g, y, 7)
        }, &[a.clone(), b.clone()]);
        check(|g, v| {
            let y = g.scale_shift(v[0], -2.5, 0.7)?;
            probe(g, y, 8)
        }, &[a.clone()]);
        check(|g, v| {
            let y = g.clamp(v[0], -0.5, 0.5)?;
            probe(g, y, 9)
        }, &[a.clone()]);
        check(|g, v| {
            let y = g.log(v[0])?;
            probe(g, y, 10)
        }, &[b.clone()]);
        check(|g, v| {
            let y = g.mean_per_item(v[0])?;
            probe(g, y, 12)
        }, &[a.clone()]);
        if shape[2] >= 3 && shape[3] >= 3 {
            check(|g, v| {
                let y = g.avg_pool3x3_valid(v[0])?;
                probe(g, y, 11)
            }, &[a.clone()]);
        }
    }
}

#[test]
fn sample_x_gradients_off_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for shape in SHAPES {
        let [b, c, h, w] = shape;
        let img = rand_tensor(&mut rng, &[b, c, h, w], -1.0, 1.0);
        // integer part in range, fractional part kept away from the kinks
        let xs = Tensor::from_fn(&[b, 1, h, w], |_| {
            rng.gen_range(0..w - 1) as f64 + rng.gen_range(0.2..0.8)
        });
        check(|g, v| {
            let (y, _) = g.sample_x(v[0], v[1])?;
            probe(g, y, 13)
        }, &[img, xs]);
    }
}

#[test]
fn clamp_gradient_is_zero_outside() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[3], vec![-2.0, 0.0, 2.0]).unwrap());
    let y = g.clamp(x, -1.0, 1.0).unwrap();
    let l = g.reduce_mean(y, None).unwrap();
    g.backward(l).unwrap();
    let third = 1.0 / 3.0;
    assert_eq!(g.grad(x).unwrap(), &[0.0, third, 0.0]);
}

#[test]
fn log_rejects_non_positive() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(&[2], vec![1.0, 0.0]).unwrap());
    assert!(matches!(g.log(x), Err(Error::LogDomain { .. })));
}

#[test]
fn non_finite_outputs_are_errors() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(Tensor::full(&[2], 1.0));
    let z = g.constant(Tensor::zeros(&[2]));
    assert!(matches!(g.div(a, z), Err(Error::NonFinite { op: "div" })));
}

#[test]
fn mean_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[1, 1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let l = g.reduce_mean(x, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.25; 4]);
}

#[test]
fn mean_of_square_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let l = g.reduce_mean(sq, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 2.0]);
}

#[test]
fn composite_conv_activation_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = rand_tensor(&mut rng, &[1, 2, 6, 6], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    let b = rand_tensor(&mut rng, &[3], -0.1, 0.1);
    check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
            let y = g.leaky_relu(y, 0.2)?;
            let y = g.sigmoid(y)?;
            g.reduce_mean(y, None)
        },
        &[x, w, b],
    );
}

#[test]
fn backward_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let y = g.scale_shift(x, 2.0, 0.0).unwrap();
    assert!(matches!(g.backward(y), Err(Error::NonScalarLoss { .. })));
    let l = g.reduce_mean(y, None).unwrap();
    g.backward(l).unwrap();
    assert!(matches!(g.backward(l), Err(Error::GraphConsumed)));
    assert!(matches!(g.scale_shift(x, 1.0, 0.0), Err(Error::GraphConsumed)));
}

#[test]
fn unreachable_leaf_gets_zero_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::full(&[3], 1.0));
    let unused = g.param(Tensor::full(&[2, 2], 5.0));
    let l = g.reduce_mean(x, None).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(unused).unwrap(), &[0.0; 4]);
}

#[test]
fn grad_check_on_mean_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0);
    let r = grad_check(|g, v| g.reduce_mean(v[0], None), &[x], 1e-4, 1e-3).unwrap();
    assert!(r.pass);
    assert!(r.max_rel_err < 1e-8, "{:?}", r);
}

#[test]
fn grad_check_flags_wrong_backward() {
    let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let r = grad_check(
        |g, v| {
            let y = g.broken_square(v[0])?;
            g.reduce_mean(y, None)
        },
        &[x],
        1e-4,
        1e-3,
    )
    .unwrap();
    assert!(!r.pass);
    assert!(r.max_rel_err > 0.4);
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&mut rng, &[2, 3, 16, 16], -1.0, 1.0).cast::<f32>();
    let w = rand_tensor(&mut rng, &[8, 3, 3, 3], -0.5, 0.5).cast::<f32>();
    let run = || {
        let mut g = Graph::<f32>::new();
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let b = g.constant(Tensor::zeros(&[8]));
        let y = g.conv2d(xv, wv, b, 2, 1).unwrap();
        let m = g.reduce_mean(y, None).unwrap();
        (g.value(y).clone(), g.value(m).item())
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma.to_bits(), mb.to_bits());
}

proptest! {
    #[test]
    fn bounded_sigmoid_range(xs in prop::collection::vec(-20.0f64..20.0, 1..32),
                             s in 0.01f64..50.0, t in -10.0f64..10.0) {
        let n = xs.len();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[n], xs).unwrap());
        let y = g.sigmoid(x).unwrap();
        let z = g.scale_shift(y, s, t).unwrap();
        for v in g.value(z).data() {
            prop_assert!(*v > t && *v < s + t);
        }
    }

    #[test]
    fn tensor_len_matches_shape(dims in prop::collection::vec(1usize..5, 0..5)) {
        let n: usize = dims.iter().product();
        let ok = Tensor::<f32>::new(&dims, vec![0.0; n]);
        prop_assert_eq!(ok.is_ok(), dims.len() <= 4);
        prop_assert!(Tensor::<f32>::new(&dims, vec![0.0; n + 1]).is_err());
    }
}
