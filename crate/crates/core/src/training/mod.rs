//! Supervision strategies, losses, Adam and the training loop.

pub mod debias;
mod step;

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::field::{field_init, DerivOrder, FieldConfig, NeuralField};
use crate::function::Function;
use crate::model::AntiderivativeModel;
use crate::reduction::{CombinedBank, ReducedFieldBank};
use crate::signals::Signal;

pub use step::{method_step, StepState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Fit `F` to Cauchy Monte Carlo estimates of `A^(k)`.
    Integral,
    /// Exact mixed partial of `F` against `f`.
    AdNaive,
    /// First-order partials of a `k^d`-block bank against weighted signals.
    AdReduc,
    /// Central differences against `f`.
    NumFd,
    /// Central differences against `f` blurred by the matching B-spline.
    NumFdC,
    /// Gaussian-smoothed derivative estimate against `f`.
    NumSm,
    /// Gaussian-smoothed derivative estimate against `f` blurred by the Gaussian.
    NumSmC,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Integral,
        Method::AdNaive,
        Method::AdReduc,
        Method::NumFd,
        Method::NumFdC,
        Method::NumSm,
        Method::NumSmC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Integral => "integral",
            Method::AdNaive => "ad_naive",
            Method::AdReduc => "ad_reduc",
            Method::NumFd => "num_fd",
            Method::NumFdC => "num_fd_c",
            Method::NumSm => "num_sm",
            Method::NumSmC => "num_sm_c",
        }
    }

    pub fn is_numerical(self) -> bool {
        matches!(self, Method::NumFd | Method::NumFdC | Method::NumSm | Method::NumSmC)
    }

    /// Whether the differential side of the loss is itself a random estimate.
    pub fn stochastic_estimator(self) -> bool {
        matches!(self, Method::Integral | Method::NumSm | Method::NumSmC)
    }

    pub fn default_iterations(self) -> u64 {
        if self.is_numerical() {
            200_000
        } else {
            100_000
        }
    }

    /// Field output width for a signal with `m` channels.
    pub fn field_outputs(self, d: usize, k: u32, m: usize) -> usize {
        match self {
            Method::AdReduc => m * (k as usize).pow(d as u32),
            _ => m,
        }
    }

    /// Positional-encoding normalization exponent, or `None` when the
    /// encoding is left unnormalized. The AD methods normalize by the total
    /// order they differentiate.
    pub fn pe_norm_order(self, d: usize, k: u32) -> Option<u32> {
        match self {
            Method::AdNaive => Some(d as u32 * k),
            Method::AdReduc => Some(d as u32),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Huber { delta: f64 },
    L2,
}

impl LossKind {
    /// Mean loss over the components of `r` and its gradient with respect to `r`.
    pub fn value_and_grad(self, r: &[f64]) -> (f64, Vec<f64>) {
        let n = r.len() as f64;
        match self {
            LossKind::L2 => (r.iter().map(|v| v * v).sum::<f64>() / n, r.iter().map(|v| 2.0 * v / n).collect()),
            LossKind::Huber { delta } => (huber(r, delta), r.iter().map(|v| v.clamp(-delta, delta) / n).collect()),
        }
    }
}

/// Per component `r^2 / 2` inside `delta`, `delta (|r| - delta / 2)` outside; mean over components.
pub fn huber(r: &[f64], delta: f64) -> f64 {
    let sum: f64 = r
        .iter()
        .map(|v| {
            let a = v.abs();
            if a <= delta {
                0.5 * v * v
            } else {
                delta * (a - 0.5 * delta)
            }
        })
        .sum();
    sum / r.len() as f64
}

/// Recursive central difference of order `k` with half-step `eps`:
/// offsets `(k - 2j) eps`, weights `(-1)^j C(k, j) / (2 eps)^k`.
pub fn fd_stencil(k: u32, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if k < 1 || !(eps > 0.0) {
        return Err(invalid("fd_stencil needs k >= 1 and eps > 0"));
    }
    let norm = (2.0 * eps).powi(k as i32);
    let mut binom = 1.0;
    let mut offsets = Vec::with_capacity(k as usize + 1);
    let mut weights = Vec::with_capacity(k as usize + 1);
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        offsets.push((k as f64 - 2.0 * j as f64) * eps);
        weights.push(if j % 2 == 0 { binom } else { -binom } / norm);
    }
    Ok((offsets, weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], lr: f64) {
    debug_assert_eq!(theta.len(), grad.len());
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - AdamState::BETA1.powi(t);
    let c2 = 1.0 - AdamState::BETA2.powi(t);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = AdamState::BETA1 * state.m[i] + (1.0 - AdamState::BETA1) * g;
        state.v[i] = AdamState::BETA2 * state.v[i] + (1.0 - AdamState::BETA2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        theta[i] -= lr * mh / (vh.sqrt() + AdamState::EPS);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub iterations: u64,
    pub batch: usize,
    pub lr: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub k: u32,
    /// Cauchy samples per target (Integral).
    pub n_mc: usize,
    /// Smooth-estimator taps and compensation samples per batch point.
    pub n_kernel: usize,
    /// Finite-difference half-step.
    pub eps: f64,
    /// Smooth-kernel width.
    pub sigma: f64,
    pub debias: bool,
    pub log_every: u64,
}

impl TrainConfig {
    pub fn new(method: Method, d: usize, k: u32) -> Self {
        let batch = match d {
            1 => 4096,
            2 => 1024,
            _ => 512,
        };
        Self {
            method,
            iterations: method.default_iterations(),
            batch,
            lr: 1e-3,
            loss: LossKind::Huber { delta: 1.0 },
            seed: 0,
            k,
            n_mc: 32,
            n_kernel: 32,
            eps: 2f64.powi(-7),
            sigma: 0.02,
            debias: true,
            log_every: 100,
        }
    }

    /// The loss actually optimized: debiased stochastic estimators need L2.
    pub fn effective_loss(&self) -> LossKind {
        if self.debias && self.method.stochastic_estimator() {
            LossKind::L2
        } else {
            self.loss
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(invalid("k must be at least 1"));
        }
        if self.batch == 0 || self.n_mc == 0 || self.n_kernel == 0 || self.log_every == 0 {
            return Err(invalid("batch, n_mc, n_kernel and log_every must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.eps > 0.0) || !(self.sigma > 0.0) {
            return Err(invalid("lr, eps and sigma must be positive"));
        }
        if let LossKind::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(invalid("huber delta must be positive"));
            }
        }
        Ok(())
    }
}

/// The architecture a method trains, derived from a base configuration.
pub fn field_config_for(method: Method, sig: &Signal, k: u32, base: &FieldConfig) -> FieldConfig {
    let d = sig.in_dims();
    let norm = method.pe_norm_order(d, k);
    FieldConfig {
        in_dims: d,
        out_dims: method.field_outputs(d, k, sig.out_dims()),
        pe_normalized: norm.is_some(),
        pe_norm_order: norm.unwrap_or(0),
        ..base.clone()
    }
}

/// A trained representation of `A^(k)`.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Field(NeuralField),
    Reduced(CombinedBank),
}

impl TrainedModel {
    pub fn new(method: Method, field: NeuralField, k: u32, m: usize) -> Result<Self> {
        Ok(match method {
            Method::AdReduc => TrainedModel::Reduced(CombinedBank::new(ReducedFieldBank::new(field, k, m)?)?),
            _ => TrainedModel::Field(field),
        })
    }

    pub fn field(&self) -> &NeuralField {
        match self {
            TrainedModel::Field(f) => f,
            TrainedModel::Reduced(b) => &b.bank.field,
        }
    }

    fn field_mut(&mut self) -> &mut NeuralField {
        match self {
            TrainedModel::Field(f) => f,
            TrainedModel::Reduced(b) => &mut b.bank.field,
        }
    }

    pub fn into_field(self) -> NeuralField {
        match self {
            TrainedModel::Field(f) => f,
            TrainedModel::Reduced(b) => b.bank.field,
        }
    }
}

impl AntiderivativeModel for TrainedModel {
    fn in_dims(&self) -> usize {
        self.field().in_dims()
    }

    fn out_dims(&self) -> usize {
        match self {
            TrainedModel::Field(f) => f.out_dims(),
            TrainedModel::Reduced(b) => b.bank.m,
        }
    }

    fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Field(f) => AntiderivativeModel::mixed_partial(f, x, ord),
            TrainedModel::Reduced(b) => b.mixed_partial(x, ord),
        }
    }

    fn mixed_partial_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Field(f) => f.mixed_partial_batch(xs, ord),
            TrainedModel::Reduced(b) => b.mixed_partial_batch(xs, ord),
        }
    }
}

/// Loss above this for [`DIVERGENCE_PATIENCE`] consecutive steps counts as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;
pub const DIVERGENCE_PATIENCE: u64 = 500;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// `(iteration, loss)` every `log_every` steps and at the last step run.
    pub trace: Vec<(u64, f64)>,
    pub iterations_run: u64,
    pub converged: bool,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
}

/// Initializes a field and runs `cfg.iterations` steps of `cfg.method`.
/// Divergence is an outcome, not an error.
pub fn train_run(sig: &Signal, base: &FieldConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let field_cfg = field_config_for(cfg.method, sig, cfg.k, base);
    let field = field_init(field_cfg, cfg.seed)?;
    let mut model = TrainedModel::new(cfg.method, field, cfg.k, sig.out_dims())?;
    let mut state = StepState::new(sig, cfg)?;
    let mut adam = AdamState::new(model.field().theta().len());
    let mut trace = Vec::new();
    let mut above = 0u64;
    let mut failure = None;
    let mut iterations_run = 0;
    for it in 0..cfg.iterations {
        let (loss, grad) = match method_step(&model, sig, cfg, &mut state, it) {
            Ok(v) => v,
            Err(Error::NonFinite(what)) => {
                failure = Some(format!("non-finite {what} at iteration {it}"));
                break;
            }
            Err(e) => return Err(e),
        };
        iterations_run = it + 1;
        if it % cfg.log_every == 0 || it + 1 == cfg.iterations {
            trace.push((it, loss));
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            if trace.last().map(|t| t.0) != Some(it) {
                trace.push((it, loss));
            }
            failure = Some(format!("non-finite loss at iteration {it}"));
            break;
        }
        above = if loss > DIVERGENCE_LOSS { above + 1 } else { 0 };
        if above >= DIVERGENCE_PATIENCE {
            failure = Some(format!("loss above {DIVERGENCE_LOSS:e} for {DIVERGENCE_PATIENCE} steps at iteration {it}"));
            break;
        }
        adam_step(&mut adam, model.field_mut().theta_mut(), &grad, cfg.lr);
        if model.field().theta().iter().any(|t| !t.is_finite()) {
            failure = Some(format!("non-finite parameters after iteration {it}"));
            break;
        }
    }
    Ok(TrainOutcome { model, trace, iterations_run, converged: failure.is_none(), failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stencils() {
        let e = 0.01;
        let (o, w) = fd_stencil(1, e).unwrap();
        assert_eq!(o, vec![e, -e]);
        assert_relative_eq!(w[0], 1.0 / (2.0 * e));
        assert_relative_eq!(w[1], -1.0 / (2.0 * e));
        let (o, w) = fd_stencil(2, e).unwrap();
        assert_eq!(o, vec![2.0 * e, 0.0, -2.0 * e]);
        let n = 4.0 * e * e;
        for (a, b) in w.iter().zip([1.0 / n, -2.0 / n, 1.0 / n]) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        for k in 1..=5 {
            let (_, w) = fd_stencil(k, 0.1).unwrap();
            assert!(w.iter().sum::<f64>().abs() < 1e-9);
        }
        assert!(fd_stencil(0, 0.1).is_err());
    }

    #[test]
    fn stencil_differentiates_polynomials() {
        // Degree-k polynomial: the k-th central difference is exact.
        let (o, w) = fd_stencil(3, 0.05).unwrap();
        let f = |x: f64| 2.0 * x * x * x - x * x + 4.0;
        let d3: f64 = o.iter().zip(&w).map(|(o, w)| w * f(0.3 + o)).sum();
        assert_relative_eq!(d3, 12.0, max_relative = 1e-9);
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(&[0.0], 1.0), 0.0);
        assert_relative_eq!(huber(&[0.5], 0.5), 0.125);
        assert_relative_eq!(huber(&[1.0], 0.5), 1.5 * 0.25);
        assert_relative_eq!(huber(&[-1.0, 0.0], 0.5), 0.1875);
        let (l, g) = LossKind::Huber { delta: 1.0 }.value_and_grad(&[3.0, -0.5]);
        assert_relative_eq!(l, (2.5 + 0.125) / 2.0);
        assert_eq!(g, vec![0.5, -0.25]);
    }

    #[test]
    fn adam_first_step() {
        let mut st = AdamState::new(1);
        let mut th = [0.0];
        adam_step(&mut st, &mut th, &[1.0], 1e-3);
        assert_relative_eq!(th[0], -1e-3, max_relative = 1e-6);
        let mut st = AdamState::new(2);
        let mut th = [0.3, -0.2];
        adam_step(&mut st, &mut th, &[0.0, 0.0], 1e-3);
        assert_eq!(th, [0.3, -0.2]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ad-naive".parse::<Method>().is_err());
    }

    #[test]
    fn debias_forces_l2_for_stochastic_estimators() {
        let mut c = TrainConfig::new(Method::NumSm, 1, 1);
        assert_eq!(c.effective_loss(), LossKind::L2);
        c.debias = false;
        assert_eq!(c.effective_loss(), LossKind::Huber { delta: 1.0 });
        let c = TrainConfig::new(Method::AdNaive, 1, 1);
        assert_eq!(c.effective_loss(), LossKind::Huber { delta: 1.0 });
        assert_eq!(TrainConfig::new(Method::NumFd, 2, 1).iterations, 200_000);
        assert_eq!(TrainConfig::new(Method::Integral, 3, 1).batch, 512);
    }
}
