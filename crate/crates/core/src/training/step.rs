use crate::error::{Error, Result};
use crate::field::{loss_param_gradient, DerivOrder, NeuralField, Probe};
use crate::function::Function;
use crate::mc::{cauchy_estimate, mc_convolve, smooth_deriv_taps, KernelSpec, RngStream, SobolSampler};
use crate::reduction::{block_exponents, reduc_target};
use crate::signals::Signal;

use super::{fd_stencil, LossKind, Method, TrainConfig, TrainedModel};

/// Random streams and precomputed stencils owned by one training run.
#[derive(Debug, Clone)]
pub struct StepState {
    rng: RngStream,
    target: Option<SobolSampler>,
    est_a: Option<SobolSampler>,
    est_b: Option<SobolSampler>,
    /// Tensor finite-difference taps `(offset, weight)`.
    stencil: Vec<(Vec<f64>, f64)>,
}

impl StepState {
    pub fn new(sig: &Signal, cfg: &TrainConfig) -> Result<Self> {
        let d = sig.in_dims();
        let root = RngStream::new(cfg.seed).fork(0x7a1);
        let mut init = root.fork(1);
        let mut sampler = |dims: usize| SobolSampler::scrambled(dims, &mut init);
        let (mut target, mut est_a, mut est_b) = (None, None, None);
        match cfg.method {
            Method::Integral | Method::NumSmC => target = Some(sampler(d)?),
            Method::NumFdC => target = Some(sampler(d * cfg.k as usize)?),
            _ => {}
        }
        if matches!(cfg.method, Method::NumSm | Method::NumSmC) {
            est_a = Some(sampler(d)?);
            if cfg.debias {
                est_b = Some(sampler(d)?);
            }
        }
        let stencil = if matches!(cfg.method, Method::NumFd | Method::NumFdC) {
            tensor_stencil(cfg.k, cfg.eps, d)?
        } else {
            Vec::new()
        };
        Ok(Self { rng: root.fork(2), target, est_a, est_b, stencil })
    }
}

fn tensor_stencil(k: u32, eps: f64, d: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let (off, w) = fd_stencil(k, eps)?;
    let mut taps = vec![(Vec::new(), 1.0)];
    for _ in 0..d {
        taps = taps
            .into_iter()
            .flat_map(|(o, wt)| {
                off.iter().zip(&w).map(move |(&oj, &wj)| {
                    let mut o = o.clone();
                    o.push(oj);
                    (o, wt * wj)
                })
            })
            .collect();
    }
    Ok(taps)
}

fn finite(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// How one item's probe values turn into a prediction.
enum Readout {
    /// The single probe's outputs.
    Direct,
    /// `sum_t w_t F(probe_t)`. With `debias_from = Some(n)`, probes `0..n` form
    /// realization A (used for the loss) and the rest realization B (used for
    /// the gradient).
    Weighted { weights: Vec<f64>, debias_from: Option<usize> },
    /// Bank of `blocks` blocks of width `m`; loss summed over blocks.
    Blocks { m: usize },
}

struct Item {
    probes: Vec<Probe>,
    target: Vec<f64>,
    readout: Readout,
}

fn shifted(x: &[f64], o: &[f64], sign: f64) -> Vec<f64> {
    x.iter().zip(o).map(|(a, b)| a + sign * b).collect()
}

fn build_item(
    method: Method,
    sig: &Signal,
    cfg: &TrainConfig,
    state: &mut StepState,
    rng: &mut RngStream,
    x: Vec<f64>,
) -> Result<Item> {
    let d = x.len();
    let k = cfg.k;
    let kernel_target = |s: &mut Option<SobolSampler>, rng: &mut RngStream, kern: KernelSpec| -> Result<Vec<f64>> {
        let s = s.as_mut().expect("target sampler");
        s.rescramble(rng);
        mc_convolve(sig, &x, &kern, cfg.n_kernel, s)
    };
    let item = match method {
        Method::Integral => {
            let s = state.target.as_mut().expect("target sampler");
            s.rescramble(rng);
            let target = finite(cauchy_estimate(sig, &x, k, cfg.n_mc, s)?, "integral target")?;
            Item { probes: vec![Probe::value(x)], target, readout: Readout::Direct }
        }
        Method::AdNaive => {
            let target = finite(sig.eval(&x), "signal value")?;
            Item { probes: vec![Probe::partial(x, DerivOrder::uniform(d, k))], target, readout: Readout::Direct }
        }
        Method::AdReduc => {
            let fx = finite(sig.eval(&x), "signal value")?;
            let blocks = (k as usize).pow(d as u32);
            let mut target = Vec::with_capacity(blocks * fx.len());
            for b in 0..blocks {
                target.extend(reduc_target(&block_exponents(k, d, b), &x, &fx));
            }
            let m = fx.len();
            Item { probes: vec![Probe::partial(x, DerivOrder::uniform(d, 1))], target, readout: Readout::Blocks { m } }
        }
        Method::NumFd | Method::NumFdC => {
            let target = if method == Method::NumFdC {
                kernel_target(&mut state.target, rng, KernelSpec::BSpline { order: k, half_width: cfg.eps })?
            } else {
                sig.eval(&x)
            };
            let target = finite(target, "supervision target")?;
            let probes = state.stencil.iter().map(|(o, _)| Probe::value(shifted(&x, o, 1.0))).collect();
            let weights = state.stencil.iter().map(|(_, w)| *w).collect();
            Item { probes, target, readout: Readout::Weighted { weights, debias_from: None } }
        }
        Method::NumSm | Method::NumSmC => {
            let target = if method == Method::NumSmC {
                kernel_target(&mut state.target, rng, KernelSpec::Gaussian { sigma: cfg.sigma })?
            } else {
                sig.eval(&x)
            };
            let target = finite(target, "supervision target")?;
            let ord = DerivOrder::uniform(d, k);
            let mut taps = Vec::new();
            let a = state.est_a.as_mut().expect("estimator sampler");
            a.rescramble(rng);
            taps.extend(smooth_deriv_taps(&ord, cfg.sigma, cfg.n_kernel, a)?);
            let debias_from = match state.est_b.as_mut() {
                Some(b) => {
                    b.rescramble(rng);
                    let n = taps.len();
                    taps.extend(smooth_deriv_taps(&ord, cfg.sigma, cfg.n_kernel, b)?);
                    Some(n)
                }
                None => None,
            };
            let probes = taps.iter().map(|(tau, _)| Probe::value(shifted(&x, tau, -1.0))).collect();
            let weights = taps.iter().map(|(_, w)| *w).collect();
            Item { probes, target, readout: Readout::Weighted { weights, debias_from } }
        }
    };
    Ok(item)
}

fn item_loss(item: &Item, values: &[Vec<f64>], loss: LossKind, scale: f64) -> (f64, Vec<Vec<f64>>) {
    let m = item.target.len();
    match &item.readout {
        Readout::Direct => {
            let r: Vec<f64> = values[0].iter().zip(&item.target).map(|(p, t)| p - t).collect();
            let (l, g) = loss.value_and_grad(&r);
            (l * scale, vec![g.into_iter().map(|v| v * scale).collect()])
        }
        Readout::Blocks { m } => {
            let r: Vec<f64> = values[0].iter().zip(&item.target).map(|(p, t)| p - t).collect();
            let mut total = 0.0;
            let mut adj = Vec::with_capacity(r.len());
            for block in r.chunks(*m) {
                let (l, g) = loss.value_and_grad(block);
                total += l;
                adj.extend(g.into_iter().map(|v| v * scale));
            }
            (total * scale, vec![adj])
        }
        Readout::Weighted { weights, debias_from } => {
            let n_a = debias_from.unwrap_or(weights.len());
            let mut pred = vec![0.0; m];
            for (v, w) in values[..n_a].iter().zip(&weights[..n_a]) {
                for (p, x) in pred.iter_mut().zip(v) {
                    *p += w * x;
                }
            }
            let r: Vec<f64> = pred.iter().zip(&item.target).map(|(p, t)| p - t).collect();
            let (l, g) = loss.value_and_grad(&r);
            let adjoint_of = |w: f64| g.iter().map(|gi| gi * w * scale).collect::<Vec<f64>>();
            let adj = match debias_from {
                // Loss factor from realization A, derivative factor from B.
                Some(n) => (0..weights.len())
                    .map(|t| if t < *n { vec![0.0; m] } else { adjoint_of(weights[t]) })
                    .collect(),
                None => weights.iter().map(|&w| adjoint_of(w)).collect(),
            };
            (l * scale, adj)
        }
    }
}

fn check_model(method: Method, model: &TrainedModel) -> Result<&NeuralField> {
    match (method, model) {
        (Method::AdReduc, TrainedModel::Reduced(b)) => Ok(&b.bank.field),
        (Method::AdReduc, TrainedModel::Field(_)) => Err(Error::ModelMismatch {
            method: method.name().into(),
            reason: "needs a reduced field bank".into(),
        }),
        (_, TrainedModel::Field(f)) => Ok(f),
        (_, TrainedModel::Reduced(_)) => Err(Error::ModelMismatch {
            method: method.name().into(),
            reason: "expects a single field, got a reduced bank".into(),
        }),
    }
}

/// One stochastic step: draws `cfg.batch` uniform points, assembles the
/// method's residuals and returns the batch-mean loss and its gradient
/// with respect to the field parameters.
pub fn method_step(
    model: &TrainedModel,
    sig: &Signal,
    cfg: &TrainConfig,
    state: &mut StepState,
    iteration: u64,
) -> Result<(f64, Vec<f64>)> {
    let field = check_model(cfg.method, model)?;
    let d = sig.in_dims();
    if field.in_dims() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: field.in_dims() });
    }
    let mut rng = state.rng.fork(iteration);
    let mut items = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let x: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
        items.push(build_item(cfg.method, sig, cfg, state, &mut rng, x)?);
    }
    let loss = cfg.effective_loss();
    let scale = 1.0 / cfg.batch as f64;
    let probes: Vec<Vec<Probe>> = items.iter_mut().map(|it| std::mem::take(&mut it.probes)).collect();
    let (l, g) = loss_param_gradient(field, &probes, |i, values| item_loss(&items[i], values, loss, scale));
    Ok((l, g))
}
