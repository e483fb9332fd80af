//! im2col + GEMM convolution kernels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        bias: &[usize],
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let &[batch, cin, h, w] = input else {
            return Err(shape_err("conv2d", format!("input must be rank 4, got {:?}", input)));
        };
        let &[cout, wcin, kh, kw] = weight else {
            return Err(shape_err("conv2d", format!("weight must be rank 4, got {:?}", weight)));
        };
        if wcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("weight expects {} input channels, input has {}", wcin, cin),
            ));
        }
        if kh != kw || !(kh == 3 || kh == 4) {
            return Err(shape_err("conv2d", format!("unsupported kernel {}x{}", kh, kw)));
        }
        if !(stride == 1 || stride == 2) {
            return Err(shape_err("conv2d", format!("unsupported stride {}", stride)));
        }
        if bias != [cout] {
            return Err(shape_err("conv2d", format!("bias {:?} for {} outputs", bias, cout)));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(shape_err("conv2d", format!("input {}x{} smaller than kernel", h, w)));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            batch,
            cin,
            h,
            w,
            cout,
            k: kh,
            stride,
            pad,
            oh,
            ow,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.cout, self.oh, self.ow]
    }

    fn kdim(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pdim(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<S: Scalar>(g: &ConvGeom, x: &[S], col: &mut [S]) {
    let p = g.pdim();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * p;
                let dst = &mut col[row..row + p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out.iter_mut().for_each(|v| *v = S::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            S::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<S: Scalar>(g: &ConvGeom, col: &[S], dx: &mut [S]) {
    let p = g.pdim();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * p;
                let src = &col[row..row + p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Returns the output and, when `keep_cols`, the per-item column matrices
/// needed for the weight gradient.
pub(crate) fn forward<S: Scalar>(
    g: &ConvGeom,
    x: &[S],
    w: &[S],
    bias: &[S],
    keep_cols: bool,
) -> (Vec<S>, Option<Vec<S>>) {
    let (kd, p) = (g.kdim(), g.pdim());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * p;
    let mut out = vec![S::ZERO; g.batch * out_per];
    let mut saved = keep_cols.then(|| vec![S::ZERO; g.batch * kd * p]);
    let mut scratch = if keep_cols { Vec::new() } else { vec![S::ZERO; kd * p] };
    for n in 0..g.batch {
        let col: &mut [S] = match saved.as_mut() {
            Some(all) => &mut all[n * kd * p..(n + 1) * kd * p],
            None => &mut scratch,
        };
        im2col(g, &x[n * in_per..(n + 1) * in_per], col);
        let o = &mut out[n * out_per..(n + 1) * out_per];
        for (co, chunk) in o.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[co]);
        }
        // SAFETY: w is [cout, kd], col is [kd, p], o is [cout, p], all row-major.
        unsafe {
            S::gemm(
                g.cout,
                kd,
                p,
                S::ONE,
                w.as_ptr(),
                kd as isize,
                1,
                col.as_ptr(),
                p as isize,
                1,
                S::ONE,
                o.as_mut_ptr(),
                p as isize,
                1,
            );
        }
    }
    (out, saved)
}

pub(crate) fn backward_bias<S: Scalar>(g: &ConvGeom, gout: &[S], gb: &mut [S]) {
    let p = g.pdim();
    for n in 0..g.batch {
        for co in 0..g.cout {
            let base = (n * g.cout + co) * p;
            let s = gout[base..base + p].iter().fold(S::ZERO, |a, &v| a + v);
            gb[co] += s;
        }
    }
}

pub(crate) fn backward_weight<S: Scalar>(g: &ConvGeom, gout: &[S], cols: &[S], gw: &mut [S]) {
    let (kd, p) = (g.kdim(), g.pdim());
    for n in 0..g.batch {
        let go = &gout[n * g.cout * p..(n + 1) * g.cout * p];
        let col = &cols[n * kd * p..(n + 1) * kd * p];
        // SAFETY: go is [cout, p]; col^T is [p, kd] (column-major view of col); gw is [cout, kd].
        unsafe {
            S::gemm(
                g.cout,
                p,
                kd,
                S::ONE,
                go.as_ptr(),
                p as isize,
                1,
                col.as_ptr(),
                1,
                p as isize,
                S::ONE,
                gw.as_mut_ptr(),
                kd as isize,
                1,
            );
        }
    }
}

pub(crate) fn backward_input<S: Scalar>(g: &ConvGeom, gout: &[S], w: &[S], gx: &mut [S]) {
    let (kd, p) = (g.kdim(), g.pdim());
    let in_per = g.cin * g.h * g.w;
    let mut gcol = vec![S::ZERO; kd * p];
    for n in 0..g.batch {
        let go = &gout[n * g.cout * p..(n + 1) * g.cout * p];
        // SAFETY: w^T is [kd, cout] (column-major view of w); go is [cout, p]; gcol is [kd, p].
        unsafe {
            S::gemm(
                kd,
                g.cout,
                p,
                S::ONE,
                w.as_ptr(),
                1,
                kd as isize,
                go.as_ptr(),
                p as isize,
                1,
                S::ZERO,
                gcol.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        col2im(g, &gcol, &mut gx[n * in_per..(n + 1) * in_per]);
    }
}
