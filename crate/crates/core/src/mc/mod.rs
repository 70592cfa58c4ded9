//! Sampling and Monte Carlo estimators.
//!
//! All estimators draw from a [`SobolSampler`]; pass a scrambled one (see
//! [`SobolSampler::scrambled`]) when unbiasedness matters.

mod rng;
mod sobol;

pub use rng::{inverse_normal_cdf, RngStream, SliceSource, UniformSource};
pub use sobol::{SobolSampler, MAX_SOBOL_DIMS};

use crate::error::{invalid, Error, Result};
use crate::field::DerivOrder;
use crate::function::Function;

/// Convolution kernel families. Lengths are in domain units.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Weighted Dirac deltas at 1D offsets (tensor product across axes).
    DiracStencil { offsets: Vec<f64>, weights: Vec<f64> },
    /// k-fold convolution of the box on `[-half_width, half_width]`.
    BSpline { order: u32, half_width: f64 },
    Gaussian { sigma: f64 },
    GaussianDerivative { sigma: f64, order: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::DiracStencil { offsets, weights } => {
                if offsets.len() != weights.len() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(invalid("dirac stencil needs matching finite offsets/weights"));
                }
            }
            KernelSpec::BSpline { order, half_width } => {
                if *order < 1 || !(*half_width > 0.0) {
                    return Err(invalid("b-spline kernel needs order >= 1 and half_width > 0"));
                }
            }
            KernelSpec::Gaussian { sigma } | KernelSpec::GaussianDerivative { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(invalid("gaussian kernel needs sigma > 0"));
                }
            }
        }
        Ok(())
    }

    /// Number of uniform variates consumed per axis for one sample.
    fn uniforms_per_axis(&self) -> usize {
        match self {
            KernelSpec::BSpline { order, .. } => *order as usize,
            _ => 1,
        }
    }
}

/// A Monte Carlo mean together with its (iid-formula) standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub std_err: Vec<f64>,
}

struct Accumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Accumulator {
    fn new(m: usize) -> Self {
        Self { sum: vec![0.0; m], sum_sq: vec![0.0; m], n: 0 }
    }

    fn push(&mut self, sample: impl Iterator<Item = f64>) {
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(sample) {
            *s += v;
            *q += v * v;
        }
        self.n += 1;
    }

    fn finish(self, scale: f64) -> Estimate {
        let n = self.n as f64;
        let value = self.sum.iter().map(|s| scale * s / n).collect();
        let std_err = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let mean = s / n;
                let var = ((q / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
                scale.abs() * (var / n).sqrt()
            })
            .collect();
        Estimate { value, std_err }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn require_dims(s: &SobolSampler, need: usize) -> Result<()> {
    if s.dims() < need {
        return Err(invalid(format!("sampler has {} dims, estimator needs {need}", s.dims())));
    }
    Ok(())
}

/// Cauchy-reduced Monte Carlo estimate of `A^(k)(x)` using `n` samples
/// drawn uniformly from the box `[0, x]`.
pub fn cauchy_estimate(
    sig: &dyn Function,
    x: &[f64],
    k: u32,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Vec<f64>> {
    Ok(cauchy_estimate_with_error(sig, x, k, n, s)?.value)
}

pub fn cauchy_estimate_with_error(
    sig: &dyn Function,
    x: &[f64],
    k: u32,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Estimate> {
    let d = sig.in_dims();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    if k < 1 || n < 1 {
        return Err(invalid("cauchy_estimate needs k >= 1 and n >= 1"));
    }
    let m = sig.out_dims();
    if x.iter().any(|&v| v == 0.0) {
        return Ok(Estimate { value: vec![0.0; m], std_err: vec![0.0; m] });
    }
    require_dims(s, d)?;
    let volume: f64 = x.iter().product();
    let scale = volume / factorial(k - 1).powi(d as i32);
    let mut u = vec![0.0; s.dims()];
    let mut t = vec![0.0; d];
    let mut fx = vec![0.0; m];
    let mut acc = Accumulator::new(m);
    for _ in 0..n {
        s.next_into(&mut u);
        let mut w = 1.0;
        for j in 0..d {
            t[j] = x[j] * u[j];
            w *= (x[j] - t[j]).powi(k as i32 - 1);
        }
        sig.eval_into(&t, &mut fx);
        acc.push(fx.iter().map(|v| w * v));
    }
    Ok(acc.finish(scale))
}

/// One draw from the order-k B-spline of half-width `eps`: the sum of `k`
/// independent uniforms on `[-eps, eps]`.
pub fn sample_bspline_offset(k: u32, eps: f64, rng: &mut impl UniformSource) -> f64 {
    (0..k).map(|_| 2.0 * rng.next_uniform() - 1.0).sum::<f64>() * eps
}

/// `g^(k)(t) / g(t)` for the centred Gaussian `g` of width `sigma`, i.e.
/// `(-1)^k sigma^-k He_k(t / sigma)` with `He_k` the probabilists' Hermite polynomial.
pub fn hermite_weight(k: u32, sigma: f64, t: f64) -> f64 {
    let u = t / sigma;
    let (mut prev, mut cur) = (1.0, u);
    let he = match k {
        0 => 1.0,
        _ => {
            for n in 1..k {
                let next = u * cur - n as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    };
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * he / sigma.powi(k as i32)
}

/// Offsets and weights of the smoothed-derivative estimator: applying it to
/// `fn` means `sum_i w_i fn(x - tau_i)`. Weights already include the 1/n.
///
/// Axes with odd derivative order are antithetic: every base draw is
/// expanded into all sign flips over those axes, so `n` must be a multiple
/// of `2^r` with `r` the number of odd axes.
pub fn smooth_deriv_taps(
    ord: &DerivOrder,
    sigma: f64,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let d = ord.dims();
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    require_dims(s, d)?;
    let odd: Vec<usize> = (0..d).filter(|&j| ord.orders()[j] % 2 == 1).collect();
    let group = 1usize << odd.len();
    if n == 0 || n % group != 0 {
        return Err(invalid(format!("sample count {n} must be a positive multiple of {group}")));
    }
    let mut u = vec![0.0; s.dims()];
    let mut taps = Vec::with_capacity(n);
    for _ in 0..n / group {
        s.next_open_into(&mut u);
        let base: Vec<f64> = (0..d).map(|j| sigma * inverse_normal_cdf(u[j])).collect();
        for flips in 0..group {
            let mut tau = base.clone();
            for (bit, &j) in odd.iter().enumerate() {
                if (flips >> bit) & 1 == 1 {
                    tau[j] = -tau[j];
                }
            }
            let w: f64 = (0..d).map(|j| hermite_weight(ord.orders()[j], sigma, tau[j])).product();
            taps.push((tau, w / n as f64));
        }
    }
    Ok(taps)
}

/// Gaussian-derivative smoothed estimate of the `ord` mixed partial of `f` at `x`.
pub fn smooth_deriv_estimate(
    f: &dyn Function,
    x: &[f64],
    ord: &DerivOrder,
    sigma: f64,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Vec<f64>> {
    Ok(smooth_deriv_estimate_with_error(f, x, ord, sigma, n, s)?.value)
}

pub fn smooth_deriv_estimate_with_error(
    f: &dyn Function,
    x: &[f64],
    ord: &DerivOrder,
    sigma: f64,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Estimate> {
    if x.len() != f.in_dims() || ord.dims() != f.in_dims() {
        return Err(Error::DimensionMismatch { expected: f.in_dims(), actual: x.len() });
    }
    let taps = smooth_deriv_taps(ord, sigma, n, s)?;
    let m = f.out_dims();
    let mut acc = Accumulator::new(m);
    let mut fx = vec![0.0; m];
    let mut p = vec![0.0; x.len()];
    for (tau, w) in &taps {
        for j in 0..x.len() {
            p[j] = x[j] - tau[j];
        }
        f.eval_into(&p, &mut fx);
        // Samples are scaled so that their plain mean is the estimate.
        let wn = w * taps.len() as f64;
        acc.push(fx.iter().map(|v| wn * v));
    }
    Ok(acc.finish(1.0))
}

/// `n` per-axis offsets drawn from a normalized kernel (B-spline or Gaussian).
pub fn kernel_offsets(kern: &KernelSpec, d: usize, n: usize, s: &mut SobolSampler) -> Result<Vec<Vec<f64>>> {
    kern.validate()?;
    let per_axis = kern.uniforms_per_axis();
    require_dims(s, d * per_axis)?;
    let mut u = vec![0.0; s.dims()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        match kern {
            KernelSpec::BSpline { order, half_width } => {
                s.next_into(&mut u);
                let mut src = SliceSource::new(&u);
                out.push((0..d).map(|_| sample_bspline_offset(*order, *half_width, &mut src)).collect());
            }
            KernelSpec::Gaussian { sigma } => {
                s.next_open_into(&mut u);
                out.push((0..d).map(|j| sigma * inverse_normal_cdf(u[j])).collect());
            }
            _ => return Err(invalid("mc_convolve needs a normalized b-spline or gaussian kernel")),
        }
    }
    Ok(out)
}

/// Monte Carlo convolution `(f * kern)(x)`.
pub fn mc_convolve(
    f: &dyn Function,
    x: &[f64],
    kern: &KernelSpec,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Vec<f64>> {
    Ok(mc_convolve_with_error(f, x, kern, n, s)?.value)
}

pub fn mc_convolve_with_error(
    f: &dyn Function,
    x: &[f64],
    kern: &KernelSpec,
    n: usize,
    s: &mut SobolSampler,
) -> Result<Estimate> {
    let d = f.in_dims();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    if n < 1 {
        return Err(invalid("mc_convolve needs n >= 1"));
    }
    let offsets = kernel_offsets(kern, d, n, s)?;
    let m = f.out_dims();
    let mut acc = Accumulator::new(m);
    let mut fx = vec![0.0; m];
    let mut p = vec![0.0; d];
    for o in &offsets {
        for j in 0..d {
            p[j] = x[j] - o[j];
        }
        f.eval_into(&p, &mut fx);
        acc.push(fx.iter().copied());
    }
    Ok(acc.finish(1.0))
}
