//! Downstream uses of a learned antiderivative: reconstruction by
//! differentiation and repeated-integration box filtering.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::field::DerivOrder;
use crate::function::Function;
use crate::mc::{mc_convolve_with_error, Estimate, KernelSpec, RngStream, SobolSampler, MAX_SOBOL_DIMS};
use crate::model::AntiderivativeModel;
use crate::signals::Signal;
use crate::training::fd_stencil;

/// Regular cell-centred grid on `[margin, 1 - margin]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGrid {
    pub resolution: usize,
    pub margin: f64,
}

impl EvalGrid {
    pub fn new(resolution: usize) -> Self {
        Self { resolution, margin: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(invalid("grid resolution must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(invalid(format!("grid margin {} outside [0, 0.5)", self.margin)));
        }
        Ok(())
    }

    pub fn points(&self, d: usize) -> Vec<Vec<f64>> {
        let n = self.resolution;
        let span = 1.0 - 2.0 * self.margin;
        let axis: Vec<f64> = (0..n).map(|i| self.margin + span * (i as f64 + 0.5) / n as f64).collect();
        let total = n.pow(d as u32);
        (0..total)
            .map(|flat| {
                let mut rest = flat;
                let mut p = vec![0.0; d];
                for j in (0..d).rev() {
                    p[j] = axis[rest % n];
                    rest /= n;
                }
                p
            })
            .collect()
    }
}

fn check_dims(model: &dyn AntiderivativeModel, sig: &Signal) -> Result<()> {
    if model.in_dims() != sig.in_dims() {
        return Err(Error::DimensionMismatch { expected: sig.in_dims(), actual: model.in_dims() });
    }
    if model.out_dims() != sig.out_dims() {
        return Err(Error::DimensionMismatch { expected: sig.out_dims(), actual: model.out_dims() });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over the grid of `|d^(k,...,k) model - f|^2`.
pub fn reconstruction_error(model: &dyn AntiderivativeModel, sig: &Signal, grid: &EvalGrid, k: u32) -> Result<f64> {
    grid.validate()?;
    check_dims(model, sig)?;
    let d = sig.in_dims();
    let pts = grid.points(d);
    let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
    let pred = model.mixed_partial_batch(&refs, &DerivOrder::uniform(d, k))?;
    let total: f64 = pts.iter().zip(&pred).map(|(x, p)| sq_dist(p, &sig.eval(x))).sum();
    Ok(total / pts.len() as f64)
}

/// Half-width of the order-`k` B-spline whose variance `k w^2 / 3` is `sigma^2`.
pub fn gaussian_match_halfwidth(sigma: f64, k: u32) -> f64 {
    sigma * (3.0 / k as f64).sqrt()
}

/// Order-`k` B-spline (k-fold box of half-width `half_width`), piecewise degree `k - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterKernel {
    pub order: u32,
    pub half_width: f64,
}

impl FilterKernel {
    pub fn matching_gaussian(sigma: f64, k: u32) -> Self {
        Self { order: k, half_width: gaussian_match_halfwidth(sigma, k) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 || !(self.half_width > 0.0) {
            return Err(invalid("filter kernel needs order >= 1 and half_width > 0"));
        }
        Ok(())
    }

    /// Support radius `k w`.
    pub fn support(&self) -> f64 {
        self.order as f64 * self.half_width
    }

    fn spec(&self) -> KernelSpec {
        KernelSpec::BSpline { order: self.order, half_width: self.half_width }
    }
}

/// `(f * B_k)(x)` from `A^(k)`: the k-th derivative of the B-spline is a
/// Dirac stencil, so the convolution is a weighted sum of `(k+1)^d`
/// evaluations of the antiderivative. Evaluation points are not clamped.
pub fn spline_filter(model: &dyn AntiderivativeModel, x: &[f64], kern: &FilterKernel) -> Result<Vec<f64>> {
    Ok(spline_filter_batch(model, &[x], kern)?.pop().expect("one point in, one point out"))
}

pub fn spline_filter_batch(
    model: &dyn AntiderivativeModel,
    xs: &[&[f64]],
    kern: &FilterKernel,
) -> Result<Vec<Vec<f64>>> {
    kern.validate()?;
    let d = model.in_dims();
    let (off, w) = fd_stencil(kern.order, kern.half_width)?;
    let taps = off.len();
    let n_taps = taps.pow(d as u32);
    let mut pts = Vec::with_capacity(xs.len() * n_taps);
    let mut weights = Vec::with_capacity(n_taps);
    for flat in 0..n_taps {
        let mut rest = flat;
        let mut wt = 1.0;
        let mut o = vec![0.0; d];
        for j in (0..d).rev() {
            o[j] = off[rest % taps];
            wt *= w[rest % taps];
            rest /= taps;
        }
        weights.push((o, wt));
    }
    for x in xs {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
        }
        for (o, _) in &weights {
            pts.push(x.iter().zip(o).map(|(a, b)| a + b).collect::<Vec<f64>>());
        }
    }
    let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
    let vals = model.mixed_partial_batch(&refs, &DerivOrder::zeros(d))?;
    let m = model.out_dims();
    Ok(vals
        .chunks(n_taps)
        .map(|chunk| {
            let mut acc = vec![0.0; m];
            for (v, (_, wt)) in chunk.iter().zip(&weights) {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += wt * b;
                }
            }
            acc
        })
        .collect())
}

/// Reference filter: Monte Carlo convolution of the raw signal with the same kernel.
pub fn mc_filter_oracle(
    sig: &Signal,
    x: &[f64],
    kern: &FilterKernel,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Estimate> {
    kern.validate()?;
    mc_convolve_with_error(sig, x, &kern.spec(), n, s)
}

/// Margin that keeps every filter tap inside the unit domain.
pub fn filter_margin(kern: &FilterKernel) -> f64 {
    kern.support().max(0.05)
}

/// Mean squared difference between `spline_filter(model)` and the Monte
/// Carlo reference over `grid`, restricted to the margin of [`filter_margin`].
pub fn filter_error(
    model: &dyn AntiderivativeModel,
    sig: &Signal,
    grid: &EvalGrid,
    kern: &FilterKernel,
    n_oracle: usize,
    seed: u64,
) -> Result<f64> {
    check_dims(model, sig)?;
    kern.validate()?;
    let margin = filter_margin(kern);
    if margin >= 0.5 {
        return Err(invalid(format!(
            "kernel support {} leaves no interior to evaluate filter error on",
            kern.support()
        )));
    }
    let grid = EvalGrid { margin, ..*grid };
    grid.validate()?;
    let d = sig.in_dims();
    let dims = d * kern.order as usize;
    if dims > MAX_SOBOL_DIMS {
        return Err(invalid(format!("oracle needs {dims} sampler dims, at most {MAX_SOBOL_DIMS}")));
    }
    let pts = grid.points(d);
    let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
    let pred = spline_filter_batch(model, &refs, kern)?;
    let mut rng = RngStream::new(seed).fork(0xf17);
    let mut s = SobolSampler::scrambled(dims, &mut rng)?;
    let mut total = 0.0;
    for (x, p) in pts.iter().zip(&pred) {
        s.rescramble(&mut rng);
        let oracle = mc_filter_oracle(sig, x, kern, n_oracle, &mut s)?;
        total += sq_dist(p, &oracle.value);
    }
    Ok(total / pts.len() as f64)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub method: String,
    pub d: usize,
    pub k: u32,
    pub param: String,
    pub value: f64,
}

impl MetricRow {
    pub const HEADER: &'static str = "task,method,d,k,param,value";
}

impl fmt::Display for MetricRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{},{:e}", self.task, self.method, self.d, self.k, self.param, self.value)
    }
}
