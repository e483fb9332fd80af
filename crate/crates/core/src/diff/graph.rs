//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive in execution order, so node ids are a
//! valid topological order and the backward sweep is a single reverse scan.
//! Each graph supports exactly one backward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Handle to a node recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    AbsDiff,
}

enum Op<S> {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Var,
        geom: conv::ConvGeom,
        cols: Option<Vec<S>>,
    },
    LeakyRelu {
        input: Var,
        slope: S,
    },
    Sigmoid {
        input: Var,
    },
    Upsample {
        input: Var,
    },
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
    },
    Mean {
        input: Var,
        weights: Option<Vec<S>>,
        denom: S,
    },
    MeanPerItem {
        input: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    ScaleShift {
        input: Var,
        scale: S,
    },
    Clamp {
        input: Var,
        lo: S,
        hi: S,
    },
    Log {
        input: Var,
    },
    AvgPool3 {
        input: Var,
    },
    SampleX {
        image: Var,
        coords: Var,
    },
    #[cfg(test)]
    BrokenSquare {
        input: Var,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records primitives and runs one backward pass over them.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    consumed: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    /// Adds a leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last backward pass with respect to `v`.
    ///
    /// Leaves that require a gradient but have no path to the loss report
    /// all zeros. `None` before backward or for nodes without gradients.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        value: Tensor<S>,
        op: Op<S>,
        requires_grad: bool,
    ) -> Result<Var> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push(value, op, requires_grad))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Zero-padded cross-correlation, `weight` laid out `[Cout, Cin, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let geom = conv::ConvGeom::new(x.shape(), w.shape(), b.shape(), stride, padding)?;
        let keep_cols = self.rg(weight);
        let (out, cols) = conv::forward(&geom, x.data(), w.data(), b.data(), keep_cols);
        let value = Tensor::new(&geom.output_shape(), out)?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        self.push_checked(
            "conv2d",
            value,
            Op::Conv {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            rg,
        )
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let rg = self.rg(input);
        match kind {
            Activation::LeakyRelu(slope) => {
                let slope = S::from_f64(slope);
                let value = x.map(|v| if v > S::ZERO { v } else { v * slope });
                self.push_checked("leaky_relu", value, Op::LeakyRelu { input, slope }, rg)
            }
            Activation::Sigmoid => {
                let value = x.map(sigmoid);
                self.push_checked("sigmoid", value, Op::Sigmoid { input }, rg)
            }
        }
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    /// Nearest-neighbour 2x upsampling of a rank-4 tensor.
    pub fn upsample_nearest2x(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (b, c, h, w) = x.dims4()?;
        let src = x.data();
        let mut out = vec![S::ZERO; b * c * h * w * 4];
        let ow = 2 * w;
        for plane in 0..b * c {
            let s = &src[plane * h * w..(plane + 1) * h * w];
            let o = &mut out[plane * h * w * 4..(plane + 1) * h * w * 4];
            for y in 0..h {
                for xx in 0..w {
                    let v = s[y * w + xx];
                    let base = 2 * y * ow + 2 * xx;
                    o[base] = v;
                    o[base + 1] = v;
                    o[base + ow] = v;
                    o[base + ow + 1] = v;
                }
            }
        }
        let value = Tensor::new(&[b, c, 2 * h, 2 * w], out)?;
        let rg = self.rg(input);
        self.push_checked("upsample_nearest2x", value, Op::Upsample { input }, rg)
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.shape() != bv.shape() {
            return Err(shape_err(
                "elementwise",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let f: fn(S, S) -> S = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
            Binary::Div => |x, y| x / y,
            Binary::AbsDiff => |x, y| (x - y).abs(),
        };
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
            Binary::AbsDiff => "abs_diff",
        };
        self.push_checked(name, value, Op::Binary { kind, a, b }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Binary::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Binary::Div)
    }

    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Binary::AbsDiff)
    }

    /// Mean over all elements, or over the elements selected by a binary
    /// `mask`. The mask either matches the input shape or, for rank-4
    /// inputs, has a single channel broadcast across all channels.
    pub fn reduce_mean(&mut self, input: Var, mask: Option<&Tensor<S>>) -> Result<Var> {
        let x = self.value(input);
        let (sum, weights, denom) = match mask {
            None => {
                let sum = x.data().iter().fold(0.0f64, |acc, v| acc + v.to_f64());
                (sum, None, x.len() as f64)
            }
            Some(m) => {
                let weights = expand_mask(x.shape(), m)?;
                let mut sum = 0.0f64;
                let mut count = 0.0f64;
                for (v, w) in x.data().iter().zip(&weights) {
                    if *w != S::ZERO {
                        sum += v.to_f64() * w.to_f64();
                        count += w.to_f64();
                    }
                }
                if count == 0.0 {
                    return Err(Error::EmptyMask { op: "reduce_mean" });
                }
                (sum, Some(weights), count)
            }
        };
        if x.is_empty() {
            return Err(shape_err("reduce_mean", "empty input"));
        }
        let value = Tensor::scalar(S::from_f64(sum / denom));
        let rg = self.rg(input);
        self.push_checked(
            "reduce_mean",
            value,
            Op::Mean {
                input,
                weights,
                denom: S::from_f64(denom),
            },
            rg,
        )
    }

    /// Mean over `(C, H, W)` for each batch item, giving shape `[B]`.
    pub fn mean_per_item(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (b, c, h, w) = x.dims4()?;
        let per = c * h * w;
        let data = x
            .data()
            .chunks(per)
            .map(|chunk| {
                let s = chunk.iter().fold(0.0f64, |acc, v| acc + v.to_f64());
                S::from_f64(s / per as f64)
            })
            .collect();
        let value = Tensor::new(&[b], data)?;
        let rg = self.rg(input);
        self.push_checked("mean_per_item", value, Op::MeanPerItem { input }, rg)
    }

    /// Concatenates two rank-4 tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let (ba, ca, ha, wa) = av.dims4()?;
        let (bb, cb, hb, wb) = bv.dims4()?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(shape_err(
                "concat_channels",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let plane = ha * wa;
        let mut data = Vec::with_capacity(ba * (ca + cb) * plane);
        for n in 0..ba {
            data.extend_from_slice(&av.data()[n * ca * plane..(n + 1) * ca * plane]);
            data.extend_from_slice(&bv.data()[n * cb * plane..(n + 1) * cb * plane]);
        }
        let value = Tensor::new(&[ba, ca + cb, ha, wa], data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push_checked("concat_channels", value, Op::Concat { a, b }, rg)
    }

    /// `input * scale + shift`.
    pub fn scale_shift(&mut self, input: Var, scale: f64, shift: f64) -> Result<Var> {
        let s = S::from_f64(scale);
        let t = S::from_f64(shift);
        let value = self.value(input).map(|v| v * s + t);
        let rg = self.rg(input);
        self.push_checked("scale_shift", value, Op::ScaleShift { input, scale: s }, rg)
    }

    /// Clamps to `[lo, hi]`; gradient passes inside the interval only.
    pub fn clamp(&mut self, input: Var, lo: f64, hi: f64) -> Result<Var> {
        let lo = S::from_f64(lo);
        let hi = S::from_f64(hi);
        let value = self.value(input).map(|v| {
            if v < lo {
                lo
            } else if v > hi {
                hi
            } else {
                v
            }
        });
        let rg = self.rg(input);
        self.push_checked("clamp", value, Op::Clamp { input, lo, hi }, rg)
    }

    pub fn log(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if let Some(bad) = x.data().iter().find(|v| !(**v > S::ZERO)) {
            return Err(Error::LogDomain { value: bad.to_f64() });
        }
        let value = x.map(Scalar::ln);
        let rg = self.rg(input);
        self.push_checked("log", value, Op::Log { input }, rg)
    }

    /// 3x3 box average with no padding: `[B,C,H,W] -> [B,C,H-2,W-2]`.
    pub fn avg_pool3x3_valid(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (b, c, h, w) = x.dims4()?;
        if h < 3 || w < 3 {
            return Err(shape_err(
                "avg_pool3x3_valid",
                format!("spatial size {}x{} smaller than window", h, w),
            ));
        }
        let (oh, ow) = (h - 2, w - 2);
        let ninth = S::from_f64(1.0 / 9.0);
        let src = x.data();
        let mut out = vec![S::ZERO; b * c * oh * ow];
        for plane in 0..b * c {
            let s = &src[plane * h * w..(plane + 1) * h * w];
            let o = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = S::ZERO;
                    for dy in 0..3 {
                        let row = &s[(y + dy) * w + xx..(y + dy) * w + xx + 3];
                        acc += row[0] + row[1] + row[2];
                    }
                    o[y * ow + xx] = acc * ninth;
                }
            }
        }
        let value = Tensor::new(&[b, c, oh, ow], out)?;
        let rg = self.rg(input);
        self.push_checked("avg_pool3x3_valid", value, Op::AvgPool3 { input }, rg)
    }

    /// Linear interpolation along x: output pixel `(n, c, v, u)` reads the
    /// source row `v` at column `coords[n, 0, v, u]`. Coordinates outside
    /// `[0, W-1]` produce 0 and a 0 in the returned validity mask.
    pub fn sample_x(&mut self, image: Var, coords: Var) -> Result<(Var, Tensor<S>)> {
        let img = self.value(image);
        let xs = self.value(coords);
        let (b, c, h, w) = img.dims4()?;
        if xs.shape() != [b, 1, h, w] {
            return Err(shape_err(
                "sample_x",
                format!("coords {:?} for image {:?}", xs.shape(), img.shape()),
            ));
        }
        let plane = h * w;
        let mut out = vec![S::ZERO; b * c * plane];
        let mut mask = vec![S::ZERO; b * plane];
        for n in 0..b {
            for v in 0..h {
                for u in 0..w {
                    let x = xs.data()[n * plane + v * w + u];
                    let Some((x0, x1, t)) = interp_cell(x, w) else {
                        continue;
                    };
                    mask[n * plane + v * w + u] = S::ONE;
                    for ch in 0..c {
                        let row = &img.data()[(n * c + ch) * plane + v * w..][..w];
                        out[(n * c + ch) * plane + v * w + u] = (S::ONE - t) * row[x0] + t * row[x1];
                    }
                }
            }
        }
        let value = Tensor::new(&[b, c, h, w], out)?;
        let mask = Tensor::new(&[b, 1, h, w], mask)?;
        let rg = self.rg(image) || self.rg(coords);
        let var = self.push_checked("sample_x", value, Op::SampleX { image, coords }, rg)?;
        Ok((var, mask))
    }

    #[cfg(test)]
    pub(crate) fn broken_square(&mut self, input: Var) -> Result<Var> {
        let value = self.value(input).map(|v| v * v);
        let rg = self.rg(input);
        self.push_checked("broken_square", value, Op::BrokenSquare { input }, rg)
    }

    /// Populates gradients of the scalar `loss` for every node that
    /// requires one. Consumes the graph: a second call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.shape(loss).to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss { shape });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![S::ONE]);
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.backward_node(id, &g, &mut grads);
        }
        for (id, node) in self.nodes.iter_mut().enumerate() {
            if let Op::Conv { cols, .. } = &mut node.op {
                *cols = None;
            }
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[id].is_none() {
                grads[id] = Some(vec![S::ZERO; node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_node(&self, id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                if self.rg(*bias) {
                    conv::backward_bias(geom, g, acc(grads, *bias, geom.cout));
                }
                if self.rg(*weight) {
                    let cols = cols.as_deref().expect("conv columns kept for weight grad");
                    let n = w.len();
                    conv::backward_weight(geom, g, cols, acc(grads, *weight, n));
                }
                if self.rg(*input) {
                    conv::backward_input(geom, g, w, acc(grads, *input, x.len()));
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let gi = acc(grads, *input, x.len());
                for ((gi, &gv), &xv) in gi.iter_mut().zip(g).zip(x) {
                    *gi += if xv > S::ZERO { gv } else { gv * *slope };
                }
            }
            Op::Sigmoid { input } => {
                let y = node.value.data();
                let gi = acc(grads, *input, y.len());
                for ((gi, &gv), &yv) in gi.iter_mut().zip(g).zip(y) {
                    *gi += gv * yv * (S::ONE - yv);
                }
            }
            Op::Upsample { input } => {
                let x = self.value(*input);
                let (b, c, h, w) = x.dims4().expect("rank 4");
                let ow = 2 * w;
                let gi = acc(grads, *input, x.len());
                for plane in 0..b * c {
                    let go = &g[plane * h * w * 4..(plane + 1) * h * w * 4];
                    let gp = &mut gi[plane * h * w..(plane + 1) * h * w];
                    for y in 0..h {
                        for xx in 0..w {
                            let base = 2 * y * ow + 2 * xx;
                            gp[y * w + xx] += go[base] + go[base + 1] + go[base + ow] + go[base + ow + 1];
                        }
                    }
                }
            }
            Op::Binary { kind, a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let n = av.len();
                if self.rg(*a) {
                    let ga = acc(grads, *a, n);
                    for i in 0..n {
                        ga[i] += match kind {
                            Binary::Add | Binary::Sub => g[i],
                            Binary::Mul => g[i] * bv[i],
                            Binary::Div => g[i] / bv[i],
                            Binary::AbsDiff => g[i] * sign(av[i] - bv[i]),
                        };
                    }
                }
                if self.rg(*b) {
                    let gb = acc(grads, *b, n);
                    for i in 0..n {
                        gb[i] += match kind {
                            Binary::Add => g[i],
                            Binary::Sub => -g[i],
                            Binary::Mul => g[i] * av[i],
                            Binary::Div => -g[i] * av[i] / (bv[i] * bv[i]),
                            Binary::AbsDiff => -g[i] * sign(av[i] - bv[i]),
                        };
                    }
                }
            }
            Op::Mean {
                input,
                weights,
                denom,
            } => {
                let n = self.value(*input).len();
                let scale = g[0] / *denom;
                let gi = acc(grads, *input, n);
                match weights {
                    None => gi.iter_mut().for_each(|v| *v += scale),
                    Some(wts) => {
                        for (v, w) in gi.iter_mut().zip(wts) {
                            if *w != S::ZERO {
                                *v += scale * *w;
                            }
                        }
                    }
                }
            }
            Op::MeanPerItem { input } => {
                let x = self.value(*input);
                let per = x.len() / g.len();
                let inv = S::from_f64(1.0 / per as f64);
                let gi = acc(grads, *input, x.len());
                for (chunk, &gv) in gi.chunks_mut(per).zip(g) {
                    let s = gv * inv;
                    chunk.iter_mut().for_each(|v| *v += s);
                }
            }
            Op::Concat { a, b } => {
                let (bn, ca, h, w) = self.value(*a).dims4().expect("rank 4");
                let cb = self.value(*b).shape()[1];
                let plane = h * w;
                let ct = ca + cb;
                if self.rg(*a) {
                    let ga = acc(grads, *a, bn * ca * plane);
                    for n in 0..bn {
                        let src = &g[n * ct * plane..n * ct * plane + ca * plane];
                        let dst = &mut ga[n * ca * plane..(n + 1) * ca * plane];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
                    }
                }
                if self.rg(*b) {
                    let gb = acc(grads, *b, bn * cb * plane);
                    for n in 0..bn {
                        let src = &g[n * ct * plane + ca * plane..(n + 1) * ct * plane];
                        let dst = &mut gb[n * cb * plane..(n + 1) * cb * plane];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
                    }
                }
            }
            Op::ScaleShift { input, scale } => {
                let gi = acc(grads, *input, g.len());
                gi.iter_mut().zip(g).for_each(|(d, s)| *d += *s * *scale);
            }
            Op::Clamp { input, lo, hi } => {
                let x = self.value(*input).data();
                let gi = acc(grads, *input, x.len());
                for ((d, &gv), &xv) in gi.iter_mut().zip(g).zip(x) {
                    if xv >= *lo && xv <= *hi {
                        *d += gv;
                    }
                }
            }
            Op::Log { input } => {
                let x = self.value(*input).data();
                let gi = acc(grads, *input, x.len());
                for ((d, &gv), &xv) in gi.iter_mut().zip(g).zip(x) {
                    *d += gv / xv;
                }
            }
            Op::AvgPool3 { input } => {
                let x = self.value(*input);
                let (b, c, h, w) = x.dims4().expect("rank 4");
                let (oh, ow) = (h - 2, w - 2);
                let ninth = S::from_f64(1.0 / 9.0);
                let gi = acc(grads, *input, x.len());
                for plane in 0..b * c {
                    let go = &g[plane * oh * ow..(plane + 1) * oh * ow];
                    let gp = &mut gi[plane * h * w..(plane + 1) * h * w];
                    for y in 0..oh {
                        for xx in 0..ow {
                            let v = go[y * ow + xx] * ninth;
                            for dy in 0..3 {
                                let row = &mut gp[(y + dy) * w + xx..(y + dy) * w + xx + 3];
                                row[0] += v;
                                row[1] += v;
                                row[2] += v;
                            }
                        }
                    }
                }
            }
            Op::SampleX { image, coords } => {
                let img = self.value(*image);
                let xs = self.value(*coords).data();
                let (b, c, h, w) = img.dims4().expect("rank 4");
                let plane = h * w;
                if self.rg(*image) {
                    let gi = acc(grads, *image, img.len());
                    for n in 0..b {
                        for v in 0..h {
                            for u in 0..w {
                                let Some((x0, x1, t)) = interp_cell(xs[n * plane + v * w + u], w) else {
                                    continue;
                                };
                                for ch in 0..c {
                                    let base = (n * c + ch) * plane + v * w;
                                    let gv = g[base + u];
                                    gi[base + x0] += gv * (S::ONE - t);
                                    gi[base + x1] += gv * t;
                                }
                            }
                        }
                    }
                }
                if self.rg(*coords) {
                    let gc = acc(grads, *coords, xs.len());
                    for n in 0..b {
                        for v in 0..h {
                            for u in 0..w {
                                let idx = n * plane + v * w + u;
                                let Some((x0, x1, _)) = interp_cell(xs[idx], w) else {
                                    continue;
                                };
                                let mut s = S::ZERO;
                                for ch in 0..c {
                                    let base = (n * c + ch) * plane + v * w;
                                    let row = &img.data()[base..base + w];
                                    s += g[base + u] * (row[x1] - row[x0]);
                                }
                                gc[idx] += s;
                            }
                        }
                    }
                }
            }
            #[cfg(test)]
            Op::BrokenSquare { input } => {
                let x = self.value(*input).data();
                let gi = acc(grads, *input, x.len());
                for ((d, &gv), &xv) in gi.iter_mut().zip(g).zip(x) {
                    *d += gv * xv;
                }
            }
        }
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, len: usize) -> &mut [S] {
    grads[v.0].get_or_insert_with(|| vec![S::ZERO; len])
}

fn sign<S: Scalar>(v: S) -> S {
    if v > S::ZERO {
        S::ONE
    } else if v < S::ZERO {
        -S::ONE
    } else {
        S::ZERO
    }
}

pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::ZERO {
        S::ONE / (S::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::ONE + e)
    }
}

/// Left/right source columns and blend weight for coordinate `x` on a row
/// of `w` pixels; `None` outside `[0, w-1]`.
#[inline]
fn interp_cell<S: Scalar>(x: S, w: usize) -> Option<(usize, usize, S)> {
    let xf = x.to_f64();
    if !(xf >= 0.0 && xf <= (w - 1) as f64) {
        return None;
    }
    let x0 = libm::floor(xf) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let t = x - S::from_f64(x0 as f64);
    Some((x0, x1, t))
}

fn expand_mask<S: Scalar>(shape: &[usize], mask: &Tensor<S>) -> Result<Vec<S>> {
    if mask.shape() == shape {
        return Ok(mask.data().to_vec());
    }
    match (shape, mask.shape()) {
        ([b, c, h, w], [mb, 1, mh, mw]) if (b, h, w) == (mb, mh, mw) => {
            let plane = h * w;
            let mut out = Vec::with_capacity(b * c * plane);
            for n in 0..*b {
                let m = &mask.data()[n * plane..(n + 1) * plane];
                for _ in 0..*c {
                    out.extend_from_slice(m);
                }
            }
            Ok(out)
        }
        _ => Err(shape_err(
            "reduce_mean",
            format!("mask {:?} for input {:?}", mask.shape(), shape),
        )),
    }
}
