//! The `train`, `eval`, `filter` and `oracle` commands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use antideriv_core::signals::{
    load_grid_signal, make_ackley, make_gaussian_mixture, make_rectangle_mixture, oracle_antiderivative, read_grid,
};
use antideriv_core::tasks::{
    filter_error, filter_margin, reconstruction_error, spline_filter_batch, EvalGrid, FilterKernel, MetricRow,
};
use antideriv_core::training::LossKind;
use antideriv_core::{
    train_run, AntiderivativeModel, FieldConfig, Function, Method, OracleModel, Signal, TrainConfig, TrainedModel,
};

use crate::checkpoint::{Checkpoint, CheckpointMethod};
use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.nadf";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FILTERED_FILE: &str = "filtered.csv";

pub fn build_signal(cfg: &RunConfig) -> Result<Signal> {
    let kind: String = cfg.get("signal.kind")?;
    let d: usize = cfg.get("signal.dims")?;
    let count: usize = cfg.get("signal.count")?;
    let seed: u64 = cfg.get("signal.seed")?;
    let sig = match kind.as_str() {
        "gaussian" => make_gaussian_mixture(d, count, seed)?,
        "rectangles" => make_rectangle_mixture(d, count, seed)?,
        "ackley" => make_ackley(d)?,
        "grid" => {
            let path: PathBuf = cfg
                .get_opt("signal.path")?
                .ok_or_else(|| cfg.value_error("signal.path", "required for grid signals"))?;
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let sig = load_grid_signal(read_grid(BufReader::new(file))?)?;
            if cfg.is_set("signal.dims") && sig.in_dims() != d {
                bail!("grid {} is {}-dimensional but signal.dims = {d}", path.display(), sig.in_dims());
            }
            sig
        }
        _ => return Err(cfg.value_error("signal.kind", "expected gaussian, rectangles, ackley or grid").into()),
    };
    Ok(sig)
}

fn parse_method(cfg: &RunConfig) -> Result<Method> {
    let name: String = cfg.get("train.method")?;
    name.parse().map_err(|e: antideriv_core::Error| cfg.value_error("train.method", e.to_string()).into())
}

/// Field architecture and training settings for a signal of dimension `d`.
pub fn train_settings(cfg: &RunConfig, d: usize) -> Result<(FieldConfig, TrainConfig)> {
    let method = parse_method(cfg)?;
    let k: u32 = cfg.get("train.k")?;
    let mut base = FieldConfig::new(d, 1);
    base.hidden_width = cfg.get("field.hidden_width")?;
    base.hidden_layers = cfg.get("field.hidden_layers")?;
    base.pe_bands = cfg.get("field.pe_bands")?;
    let mut t = TrainConfig::new(method, d, k);
    if let Some(it) = cfg.get_opt("train.iterations")? {
        t.iterations = it;
    }
    if let Some(b) = cfg.get_opt("train.batch")? {
        t.batch = b;
    }
    t.lr = cfg.get("train.lr")?;
    t.loss = match cfg.get::<String>("train.loss")?.as_str() {
        "huber" => LossKind::Huber { delta: cfg.get("train.huber_delta")? },
        "l2" => LossKind::L2,
        _ => return Err(cfg.value_error("train.loss", "expected huber or l2").into()),
    };
    t.seed = cfg.get("train.seed")?;
    t.n_mc = cfg.get("train.n_mc")?;
    t.n_kernel = cfg.get("train.n_kernel")?;
    t.eps = cfg.get("train.eps")?;
    t.sigma = cfg.get("train.sigma")?;
    t.debias = cfg.get("train.debias")?;
    t.log_every = cfg.get("train.log_every")?;
    t.validate()?;
    Ok((base, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub converged: bool,
    pub failure: Option<String>,
    pub iterations_run: u64,
    pub final_loss: Option<f64>,
}

/// Trains, then writes `checkpoint.nadf` and `loss.csv` into `out`. The
/// checkpoint and the partial trace are written even when the run diverged.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let sig = build_signal(cfg)?;
    let (base, t) = train_settings(cfg, sig.in_dims())?;
    let outcome = train_run(&sig, &base, &t)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ck = Checkpoint::from_field(t.method, t.k, sig.out_dims(), outcome.model.field());
    ck.save(&out.join(CHECKPOINT_FILE)).context("writing checkpoint")?;
    let mut w = BufWriter::new(File::create(out.join(LOSS_FILE))?);
    writeln!(w, "iteration,loss")?;
    for (it, loss) in &outcome.trace {
        writeln!(w, "{it},{loss:e}")?;
    }
    w.flush()?;
    Ok(TrainReport {
        converged: outcome.converged,
        failure: outcome.failure,
        iterations_run: outcome.iterations_run,
        final_loss: outcome.trace.last().map(|t| t.1),
    })
}

fn checkpoint_path(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    Ok(cfg.get_opt("eval.checkpoint")?.unwrap_or_else(|| out.join(CHECKPOINT_FILE)))
}

/// Restores the evaluator a checkpoint describes, checked against `sig`.
pub fn load_model(ck: &Checkpoint, sig: &Signal) -> Result<Box<dyn AntiderivativeModel>> {
    if ck.d != sig.in_dims() {
        bail!("checkpoint is {}-dimensional but the signal is {}-dimensional", ck.d, sig.in_dims());
    }
    if ck.m != sig.out_dims() {
        bail!("checkpoint has {} channels but the signal has {}", ck.m, sig.out_dims());
    }
    Ok(match ck.method {
        CheckpointMethod::Oracle => Box::new(OracleModel::new(sig.clone(), ck.k)),
        CheckpointMethod::Trained(method) => {
            let field = ck.field().expect("trained checkpoint has a field")?;
            Box::new(TrainedModel::new(method, field, ck.k, ck.m)?)
        }
    })
}

fn eval_grid(cfg: &RunConfig) -> Result<EvalGrid> {
    let grid = EvalGrid { resolution: cfg.get("eval.resolution")?, margin: cfg.get("eval.margin")? };
    grid.validate()?;
    Ok(grid)
}

/// Reconstruction error plus one filter-error row per `eval.filter_sigmas`
/// entry, written to `metrics.csv` and returned.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<Vec<MetricRow>> {
    let sig = build_signal(cfg)?;
    let path = checkpoint_path(cfg, out)?;
    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if cfg.is_set("train.k") && cfg.get::<u32>("train.k")? != ck.k {
        bail!("checkpoint has k = {} but train.k = {}", ck.k, cfg.get::<u32>("train.k")?);
    }
    let model = load_model(&ck, &sig)?;
    let grid = eval_grid(cfg)?;
    let row = |task: &str, param: String, value: f64| MetricRow {
        task: task.into(),
        method: ck.method.to_string(),
        d: ck.d,
        k: ck.k,
        param,
        value,
    };
    let mut rows = vec![row(
        "reconstruction",
        format!("resolution={}", grid.resolution),
        reconstruction_error(model.as_ref(), &sig, &grid, ck.k)?,
    )];
    let n_oracle: usize = cfg.get("eval.n_oracle")?;
    let seed: u64 = cfg.get("train.seed")?;
    for sigma in cfg.get_list::<f64>("eval.filter_sigmas")? {
        let kern = FilterKernel::matching_gaussian(sigma, ck.k);
        let err = filter_error(model.as_ref(), &sig, &grid, &kern, n_oracle, seed)?;
        rows.push(row("filter", format!("sigma={sigma}"), err));
    }
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    writeln!(w, "{}", MetricRow::HEADER)?;
    for r in &rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(rows)
}

/// Filters the checkpoint with the spline kernel matching `filter.sigma` on
/// the evaluation grid, shrunk so every tap stays inside the domain. Writes
/// `filtered.csv` with one row `x_1..x_d,v_1..v_m` per grid point.
pub fn cmd_filter(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let sig = build_signal(cfg)?;
    let path = checkpoint_path(cfg, out)?;
    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let model = load_model(&ck, &sig)?;
    let kern = FilterKernel::matching_gaussian(cfg.get("filter.sigma")?, ck.k);
    let grid = eval_grid(cfg)?;
    let grid = EvalGrid { margin: grid.margin.max(filter_margin(&kern)), ..grid };
    grid.validate()?;
    let pts = grid.points(ck.d);
    let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
    let vals = spline_filter_batch(model.as_ref(), &refs, &kern)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join(FILTERED_FILE))?);
    let names: Vec<String> =
        (0..ck.d).map(|j| format!("x{j}")).chain((0..ck.m).map(|c| format!("v{c}"))).collect();
    writeln!(w, "{}", names.join(","))?;
    for (x, v) in pts.iter().zip(&vals) {
        let cells: Vec<String> = x.iter().map(|c| c.to_string()).chain(v.iter().map(|c| format!("{c:e}"))).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(pts.len())
}

/// Prints `A^(k)` of the configured signal at `oracle.points` (semicolon
/// separated points of comma separated coordinates) or on a regular grid.
/// With `oracle.write_checkpoint` also writes an oracle pseudo-checkpoint.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path, mut w: impl Write) -> Result<()> {
    let sig = build_signal(cfg)?;
    let d = sig.in_dims();
    let k: u32 = cfg.get("train.k")?;
    let pts: Vec<Vec<f64>> = match cfg.raw("oracle.points") {
        Some(text) => text
            .split(';')
            .map(|p| {
                let x: Vec<f64> = p
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| cfg.value_error("oracle.points", format!("{e}")))?;
                if x.len() != d {
                    return Err(cfg.value_error("oracle.points", format!("point needs {d} coordinates")).into());
                }
                Ok(x)
            })
            .collect::<Result<_>>()?,
        None => EvalGrid { resolution: cfg.get("oracle.resolution")?, margin: 0.0 }.points(d),
    };
    let names: Vec<String> =
        (0..d).map(|j| format!("x{j}")).chain((0..sig.out_dims()).map(|c| format!("a{c}"))).collect();
    writeln!(w, "{}", names.join(","))?;
    for x in &pts {
        let a = oracle_antiderivative(&sig, k, x)?;
        let cells: Vec<String> = x.iter().map(|c| c.to_string()).chain(a.iter().map(|c| format!("{c:e}"))).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    if cfg.get("oracle.write_checkpoint")? {
        fs::create_dir_all(out)?;
        Checkpoint::oracle(d, k, sig.out_dims()).save(&out.join(CHECKPOINT_FILE))?;
    }
    Ok(())
}
