//! Generator (U-Net emitting a disparity map) and the twin discriminators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Channel widths of the three networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arch {
    /// Output channels of encoder levels 1..4.
    pub encoder: [usize; 4],
    /// Output channels of decoder levels 4..1 (coarse to fine).
    pub decoder: [usize; 4],
    /// Output channels of the four strided discriminator blocks.
    pub discriminator: [usize; 4],
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            encoder: [32, 64, 128, 256],
            decoder: [128, 64, 32, 16],
            discriminator: [32, 64, 128, 256],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Generator,
    DiscriminatorLeft,
    DiscriminatorRight,
}

impl NetKind {
    pub fn prefix(self) -> &'static str {
        match self {
            NetKind::Generator => "generator",
            NetKind::DiscriminatorLeft => "disc_left",
            NetKind::DiscriminatorRight => "disc_right",
        }
    }

    fn stream_base(self) -> u64 {
        match self {
            NetKind::Generator => 0,
            NetKind::DiscriminatorLeft => 1000,
            NetKind::DiscriminatorRight => 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Leaky,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    leaky: bool,
}

impl LayerSpec {
    fn new(name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, act: Act) -> Self {
        Self {
            name: name.into(),
            cin,
            cout,
            kernel,
            stride,
            pad: 1,
            leaky: act == Act::Leaky,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    /// Uniform init bound, `gain * sqrt(3 / fan_in)`.
    pub fn init_bound(&self) -> f64 {
        let gain = if self.leaky {
            libm::sqrt(2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE))
        } else {
            1.0
        };
        gain * libm::sqrt(3.0 / self.fan_in() as f64)
    }
}

pub fn generator_layers(arch: &Arch) -> Vec<LayerSpec> {
    let [c1, c2, c3, c4] = arch.encoder;
    let [d4, d3, d2, d1] = arch.decoder;
    let mut v = Vec::new();
    let mut cin = 3;
    for (i, c) in [c1, c2, c3, c4].into_iter().enumerate() {
        v.push(LayerSpec::new(&format!("enc{}a", i + 1), cin, c, 3, 2, Act::Leaky));
        v.push(LayerSpec::new(&format!("enc{}b", i + 1), c, c, 3, 1, Act::Leaky));
        cin = c;
    }
    v.push(LayerSpec::new("dec4", c4 + c3, d4, 3, 1, Act::Leaky));
    v.push(LayerSpec::new("dec3", d4 + c2, d3, 3, 1, Act::Leaky));
    v.push(LayerSpec::new("dec2", d3 + c1, d2, 3, 1, Act::Leaky));
    v.push(LayerSpec::new("dec1", d2 + 3, d1, 3, 1, Act::Leaky));
    v.push(LayerSpec::new("head", d1, 1, 3, 1, Act::Sigmoid));
    v
}

pub fn discriminator_layers(arch: &Arch) -> Vec<LayerSpec> {
    let mut v = Vec::new();
    let mut cin = 3;
    for (i, c) in arch.discriminator.into_iter().enumerate() {
        v.push(LayerSpec::new(&format!("block{}", i + 1), cin, c, 4, 2, Act::Leaky));
        cin = c;
    }
    v.push(LayerSpec::new("out", cin, 1, 3, 1, Act::Sigmoid));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Weights of one network, layers in forward order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<S> {
    pub kind: NetKind,
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<ConvLayer<S>>,
}

impl<S: Scalar> NetParams<S> {
    /// He-style uniform weights, zero biases. Layer `i` draws from its own
    /// ChaCha stream so each tensor depends only on `(seed, kind, i)`.
    pub fn init(kind: NetKind, arch: &Arch, seed: u64) -> Self {
        let specs = match kind {
            NetKind::Generator => generator_layers(arch),
            NetKind::DiscriminatorLeft | NetKind::DiscriminatorRight => discriminator_layers(arch),
        };
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(kind.stream_base() + i as u64);
                let bound = s.init_bound();
                let dist = Uniform::new_inclusive(-bound, bound);
                let shape = [s.cout, s.cin, s.kernel, s.kernel];
                let weight = Tensor::from_fn(&shape, |_| S::from_f64(dist.sample(&mut rng)));
                ConvLayer {
                    weight,
                    bias: Tensor::zeros(&[s.cout]),
                }
            })
            .collect();
        Self {
            kind,
            specs,
            layers,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `(name, tensor)` pairs in manifest order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let p = self.kind.prefix();
        self.specs
            .iter()
            .zip(&self.layers)
            .flat_map(|(s, l)| {
                [
                    (format!("{}.{}.weight", p, s.name), &l.weight),
                    (format!("{}.{}.bias", p, s.name), &l.bias),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    /// Copies the weights into `g` as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> BoundNet {
        let vars = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                }
            })
            .collect();
        BoundNet {
            kind: self.kind,
            specs: self.specs.clone(),
            vars,
        }
    }

    /// Uses existing graph leaves, in [`NetParams::tensors`] order, as the
    /// weights. Shapes must match the layer specs.
    pub fn bind_vars<S2: Scalar>(&self, g: &Graph<S2>, vars: &[Var]) -> Result<BoundNet> {
        let expected = self.tensors();
        if vars.len() != expected.len() {
            return Err(shape_err("bind_vars", format!("{} vars for {} tensors", vars.len(), expected.len())));
        }
        for (v, t) in vars.iter().zip(&expected) {
            if g.shape(*v) != t.shape() {
                return Err(shape_err("bind_vars", format!("{:?} vs {:?}", g.shape(*v), t.shape())));
            }
        }
        Ok(BoundNet {
            kind: self.kind,
            specs: self.specs.clone(),
            vars: vars.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
        })
    }

    pub fn cast<T: Scalar>(&self) -> NetParams<T> {
        NetParams {
            kind: self.kind,
            specs: self.specs.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }
}

/// A network whose weights have been recorded in a graph.
pub struct BoundNet {
    pub kind: NetKind,
    specs: Vec<LayerSpec>,
    vars: Vec<(Var, Var)>,
}

impl BoundNet {
    /// Leaf handles in the same order as [`NetParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    /// Gradients in the order of [`NetParams::tensors`]; zeros when absent.
    pub fn grads<S: Scalar>(&self, g: &Graph<S>) -> Vec<Vec<S>> {
        self.vars()
            .into_iter()
            .map(|v| match g.grad(v) {
                Some(gr) => gr.to_vec(),
                None => alloc::vec![S::ZERO; g.value(v).len()],
            })
            .collect()
    }

    fn conv<S: Scalar>(&self, g: &mut Graph<S>, i: usize, x: Var) -> Result<Var> {
        let s = &self.specs[i];
        let (w, b) = self.vars[i];
        let y = g.conv2d(x, w, b, s.stride, s.pad)?;
        if s.leaky {
            g.leaky_relu(y, LEAKY_SLOPE)
        } else {
            g.sigmoid(y)
        }
    }
}

fn check_spatial<S: Scalar>(g: &Graph<S>, x: Var, op: &'static str) -> Result<()> {
    let (_, c, h, w) = g.value(x).dims4()?;
    if c != 3 {
        return Err(shape_err(op, format!("expected 3 channels, got {}", c)));
    }
    if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
        return Err(shape_err(op, format!("spatial size {}x{} must be a multiple of 16", h, w)));
    }
    Ok(())
}

/// Center image `[B, 3, H, W]` to disparity `[B, 1, H, W]` in `(0, d_max)`.
pub fn generator_forward<S: Scalar>(
    g: &mut Graph<S>,
    center: Var,
    net: &BoundNet,
    d_max: f64,
) -> Result<Var> {
    if net.kind != NetKind::Generator {
        return Err(Error::Config("generator_forward needs generator weights".into()));
    }
    check_spatial(g, center, "generator_forward")?;
    let mut skips = Vec::with_capacity(4);
    let mut x = center;
    for level in 0..4 {
        skips.push(x);
        x = net.conv(g, 2 * level, x)?;
        x = net.conv(g, 2 * level + 1, x)?;
    }
    for (j, skip) in skips.into_iter().rev().enumerate() {
        let up = g.upsample_nearest2x(x)?;
        let cat = g.concat_channels(up, skip)?;
        x = net.conv(g, 8 + j, cat)?;
    }
    let prob = net.conv(g, 12, x)?;
    g.scale_shift(prob, d_max, 0.0)
}

/// Image `[B, 3, H, W]` to one probability per batch item, shape `[B]`.
pub fn discriminator_forward<S: Scalar>(g: &mut Graph<S>, image: Var, net: &BoundNet) -> Result<Var> {
    if net.kind == NetKind::Generator {
        return Err(Error::Config("discriminator_forward needs discriminator weights".into()));
    }
    check_spatial(g, image, "discriminator_forward")?;
    let mut x = image;
    for i in 0..5 {
        x = net.conv(g, i, x)?;
    }
    g.mean_per_item(x)
}

/// Generator plus the two discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct Models<S> {
    pub arch: Arch,
    pub generator: NetParams<S>,
    pub disc_left: NetParams<S>,
    pub disc_right: NetParams<S>,
}

impl<S: Scalar> Models<S> {
    pub fn init(seed: u64, arch: Arch) -> Self {
        Self {
            arch,
            generator: NetParams::init(NetKind::Generator, &arch, seed),
            disc_left: NetParams::init(NetKind::DiscriminatorLeft, &arch, seed),
            disc_right: NetParams::init(NetKind::DiscriminatorRight, &arch, seed),
        }
    }

    pub fn nets(&self) -> [&NetParams<S>; 3] {
        [&self.generator, &self.disc_left, &self.disc_right]
    }

    /// All `(name, tensor)` pairs: generator, left, then right discriminator.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        self.nets().into_iter().flat_map(|n| n.named_tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = self.generator.tensors_mut();
        v.extend(self.disc_left.tensors_mut());
        v.extend(self.disc_right.tensors_mut());
        v
    }
}

/// Runs the generator on plain tensors without recording gradients.
pub fn predict_disparity<S: Scalar>(
    params: &NetParams<S>,
    center: &Tensor<S>,
    d_max: f64,
) -> Result<Tensor<S>> {
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let x = g.constant(center.clone());
    let d = generator_forward(&mut g, x, &net, d_max)?;
    Ok(g.value(d).clone())
}

/// Runs a discriminator on plain tensors; one probability per batch item.
pub fn predict_probability<S: Scalar>(params: &NetParams<S>, image: &Tensor<S>) -> Result<Vec<S>> {
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let x = g.constant(image.clone());
    let p = discriminator_forward(&mut g, x, &net)?;
    Ok(g.value(p).data().to_vec())
}
