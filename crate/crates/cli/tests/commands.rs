use std::path::Path;
use std::process::Command;

use antideriv_cli::commands::{cmd_eval, cmd_oracle, cmd_train, CHECKPOINT_FILE, LOSS_FILE, METRICS_FILE};
use antideriv_cli::{Checkpoint, RunConfig};
use antideriv_core::signals::{write_grid, GridData};
use antideriv_core::{field_init, Method};

const SMALL: &str = "\
signal.kind = rectangles
signal.count = 3
field.hidden_width = 8
field.hidden_layers = 2
field.pe_bands = 2
train.batch = 32
";

fn config(extra: &str) -> RunConfig {
    RunConfig::parse(&format!("{SMALL}{extra}")).unwrap()
}

fn bin(dir: &Path, args: &[&str], config_text: &str) -> std::process::Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config_text).unwrap();
    Command::new(env!("CARGO_BIN_EXE_antideriv"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn zero_iterations_store_the_seeded_init() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("train.iterations = 0\ntrain.seed = 9\n");
    let report = cmd_train(&cfg, dir.path()).unwrap();
    assert!(report.converged);
    let ck = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    let init = field_init(ck.field_config().unwrap(), 9).unwrap();
    assert_eq!(ck, Checkpoint::from_field(Method::AdNaive, 1, 1, &init));
    assert_eq!(std::fs::read_to_string(dir.path().join(LOSS_FILE)).unwrap(), "iteration,loss\n");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}train.iterations = 50\ntrain.log_every = 10\n");
    for d in [&a, &b] {
        assert!(bin(d.path(), &["train", "--seed", "4"], &text).status.success());
    }
    for f in [CHECKPOINT_FILE, LOSS_FILE] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    let trace = std::fs::read_to_string(a.path().join(LOSS_FILE)).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6);
}

#[test]
fn divergent_run_exits_not_converged() {
    // A target of 1e5 keeps the L2 loss above the divergence threshold far
    // longer than the patience window at lr = 1e-3.
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("loud.ngrd");
    let data = GridData { shape: vec![4], channels: 1, values: vec![1e5; 4], pad: 0 };
    write_grid(std::fs::File::create(&grid).unwrap(), &data).unwrap();
    let text = format!(
        "signal.kind = grid\nsignal.path = {}\nfield.hidden_width = 8\nfield.hidden_layers = 2\ntrain.batch = 32\ntrain.iterations = 3000\ntrain.loss = l2\n",
        grid.display()
    );
    let out = bin(dir.path(), &["train"], &text);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not converged"));
    let trace = std::fs::read_to_string(dir.path().join(LOSS_FILE)).unwrap();
    assert!(trace.lines().count() > 1 && trace.lines().count() < 31, "{trace}");
    assert!(dir.path().join(CHECKPOINT_FILE).exists());
}

#[test]
fn config_errors_exit_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["train"], "train.lr = 1e-3\ntrain.speed = 2\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2: unknown key `train.speed`"));
}

#[test]
fn oracle_pseudo_checkpoint_reconstructs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(
        "signal.kind = gaussian\nsignal.count = 2\ntrain.k = 2\noracle.points = 0.5; 0.25\noracle.write_checkpoint = true\neval.resolution = 16\n",
    )
    .unwrap();
    let mut printed = Vec::new();
    cmd_oracle(&cfg, dir.path(), &mut printed).unwrap();
    let printed = String::from_utf8(printed).unwrap();
    assert_eq!(printed.lines().count(), 3);
    assert!(printed.starts_with("x0,a0\n0.5,"));
    let rows = cmd_eval(&cfg, dir.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].value <= 1e-6, "{}", rows[0].value);
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(csv.starts_with("task,method,d,k,param,value\nreconstruction,oracle,1,2,"));
}

#[test]
fn eval_rejects_mismatched_dims() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&config("train.iterations = 0\n"), dir.path()).unwrap();
    let err = cmd_eval(&config("signal.dims = 2\n"), dir.path()).unwrap_err();
    assert!(err.to_string().contains("dimensional"), "{err}");
    let out = bin(dir.path(), &["eval"], &format!("{SMALL}signal.dims = 2\n"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trained_checkpoint_gives_finite_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}train.iterations = 200\neval.resolution = 32\neval.filter_sigmas = 0.1\neval.n_oracle = 512\n");
    assert!(bin(dir.path(), &["train"], &text).status.success());
    let out = bin(dir.path(), &["eval"], &text);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(values.iter().all(|v| v.is_finite() && *v > 0.0), "{csv}");
    let out = bin(dir.path(), &["filter"], &text);
    assert!(out.status.success());
    let filtered = std::fs::read_to_string(dir.path().join("filtered.csv")).unwrap();
    assert!(filtered.starts_with("x0,v0\n"));
}
