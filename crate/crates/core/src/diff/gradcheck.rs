//! Central-difference verification of analytic gradients.

use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub step: f64,
    pub tol: f64,
    /// Check at most this many evenly spaced coordinates per input.
    pub max_coords: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-3,
            max_coords: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    pub checked: usize,
    /// `(input, coordinate, analytic, numeric)` at the largest error.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Checks every coordinate of every input with central differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    GradCheck {
        step,
        tol,
        max_coords: None,
    }
    .run(f, inputs)
}

impl GradCheck {
    pub fn run<F>(&self, f: F, inputs: &[Tensor<f64>]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.backward(out)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .map(|v| g.grad(*v).map(<[f64]>::to_vec).unwrap_or_default())
            .collect();

        let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
            let mut g = Graph::new();
            let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
            let out = f(&mut g, &vars)?;
            Ok(g.value(out).item())
        };

        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            pass: true,
            checked: 0,
            worst: None,
        };
        for i in 0..inputs.len() {
            let n = inputs[i].len();
            let coords: Vec<usize> = match self.max_coords {
                Some(m) if m < n => (0..m).map(|j| j * n / m).collect(),
                _ => (0..n).collect(),
            };
            for c in coords {
                let orig = work[i].data()[c];
                work[i].data_mut()[c] = orig + self.step;
                let plus = eval(&work)?;
                work[i].data_mut()[c] = orig - self.step;
                let minus = eval(&work)?;
                work[i].data_mut()[c] = orig;
                let numeric = (plus - minus) / (2.0 * self.step);
                let a = analytic[i][c];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                let err = (a - numeric).abs() / denom;
                report.checked += 1;
                if report.worst.is_none() || err > report.max_rel_err {
                    report.max_rel_err = err;
                    report.worst = Some((i, c, a, numeric));
                }
            }
        }
        report.pass = report.max_rel_err < self.tol;
        Ok(report)
    }
}
