use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedonet::persist::{read_dataset, write_dataset};

fn fedonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedonet"))
        .args(args)
        .env("FEDONET_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fedonet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_burgers(dir: &Path, name: &str, count: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    ok(&[
        "generate", "--benchmark", "burgers1d", "--count", count, "--seed", seed, "--out", p(&path),
        "--param", "nx=32", "--param", "nt=9",
    ]);
    path
}

const QUICK: &[&str] = &[
    "--set", "hidden=16", "--set", "latent_p=8", "--set", "mapping_size=8", "--set", "batch_functions=8",
    "--set", "queries_per_function=32", "--set", "eval_every=50",
];

fn train(data: &Path, variant: &str, out: &Path, steps: &str) -> String {
    let steps = format!("max_steps={steps}");
    let mut args = vec!["train", "--data", p(data), "--variant", variant, "--out", p(out), "--set", &steps];
    args.extend_from_slice(QUICK);
    ok(&args)
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_burgers(dir.path(), "a.bin", "12", "5");
    let b = small_burgers(dir.path(), "b.bin", "12", "5");
    let c = small_burgers(dir.path(), "c.bin", "12", "6");
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn generate_poisson_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let text = ok(&["generate", "--benchmark", "poisson2d", "--count", "10", "--out", p(&path), "--param", "n=32"]);
    assert!(text.contains("10 samples (9 train / 1 holdout)"), "{text}");
    assert!(text.contains("[PASS] sample regeneration"));
    assert!(text.contains("[PASS] poisson manufactured solution"));
    let d = read_dataset(&path).unwrap();
    assert_eq!(d.count(), 10);
    assert_eq!(d.targets.dim(), (10, 32 * 32, 1));
}

#[test]
fn argument_errors_exit_2() {
    let out = fedonet(&["generate", "--benchmark", "navier_stokes", "--count", "1", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("navier_stokes"));
    assert_eq!(fedonet(&["train", "--variant", "fedonet"]).status.code(), Some(2));
    assert_eq!(fedonet(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = fedonet(&["train", "--data", p(&missing), "--variant", "vanilla", "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
    let data = small_burgers(dir.path(), "d.bin", "6", "1");
    let out = fedonet(&[
        "train", "--data", p(&data), "--variant", "vanilla", "--out", p(&dir.path().join("m")), "--set", "depth=3",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
}

#[test]
fn train_smoke_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_burgers(dir.path(), "d.bin", "20", "2");
    let van = dir.path().join("van.ckpt");
    let fed = dir.path().join("fed.ckpt");
    let text = train(&data, "vanilla", &van, "100");
    assert!(text.contains("step      50"), "{text}");
    train(&data, "fedonet", &fed, "100");
    let history = std::fs::read_to_string(dir.path().join("fed.ckpt.history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "step,train_mse,holdout_rel_l2");
    assert_eq!(lines.len(), 101);

    let v = fedonet::persist::load_checkpoint(&van).unwrap();
    let f = fedonet::persist::load_checkpoint(&fed).unwrap();
    assert!(v.model.config().embed.is_none() && v.model.freq().is_none());
    assert!(f.model.config().embed.is_some() && f.model.freq().is_some());
    assert!(std::fs::metadata(&fed).unwrap().len() > std::fs::metadata(&van).unwrap().len());

    let half = dir.path().join("half.ckpt");
    let resumed = dir.path().join("resumed.ckpt");
    train(&data, "fedonet", &half, "50");
    let mut args = vec![
        "train", "--data", p(&data), "--variant", "fedonet", "--out", p(&resumed), "--resume", p(&half), "--set",
        "max_steps=100",
    ];
    args.extend_from_slice(QUICK);
    ok(&args);
    assert_eq!(std::fs::read(&resumed).unwrap(), std::fs::read(&fed).unwrap());

    let out = fedonet(&[
        "train", "--data", p(&data), "--variant", "vanilla", "--out", p(&resumed), "--resume", p(&half),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn eval_perfect_model_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_burgers(dir.path(), "d.bin", "20", "3");
    let ckpt = dir.path().join("m.ckpt");
    train(&data, "vanilla", &ckpt, "10");
    // Replace the targets with the model's own predictions.
    let model = fedonet::persist::load_checkpoint(&ckpt).unwrap().model;
    let mut d = read_dataset(&data).unwrap();
    d.targets = model.forward(d.branch.view(), d.coords.view()).unwrap();
    let perfect = dir.path().join("perfect.bin");
    write_dataset(&d, &perfect).unwrap();
    let out = dir.path().join("eval");
    let text = ok(&["eval", "--data", p(&perfect), "--ckpt", p(&ckpt), "--out", p(&out)]);
    assert!(text.contains("rel l2 mean 0.0000%"), "{text}");
    let report = fedonet::eval::EvalReport::from_json(&std::fs::read_to_string(out.join("m_report.json")).unwrap())
        .unwrap();
    assert_eq!(report.max, 0.0);
    assert_eq!(report.sample_count, 2);
    for s in ["best", "median", "worst"] {
        assert!(out.join(format!("m_{s}_field.csv")).exists());
        assert!(out.join(format!("m_{s}_cumulative.csv")).exists());
    }
}

#[test]
fn eval_paired_table_and_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.bin");
    ok(&["generate", "--benchmark", "poisson2d", "--count", "20", "--out", p(&data), "--param", "n=16"]);
    let van = dir.path().join("vanilla.ckpt");
    let fed = dir.path().join("fedonet.ckpt");
    train(&data, "vanilla", &van, "20");
    train(&data, "fedonet", &fed, "20");
    let out = dir.path().join("eval");
    let text = ok(&[
        "eval", "--data", p(&data), "--ckpt", p(&van), "--ckpt", p(&fed), "--out", p(&out), "--spectra",
    ]);
    assert!(text.contains("spectra: 2-D shell sums"));
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "benchmark,variant,mean_rel_l2_pct,std_rel_l2_pct,count");
    assert!(rows[1].starts_with("poisson2d,vanilla,") && rows[1].ends_with(",2"));
    assert!(rows[2].starts_with("poisson2d,fedonet,"));
    let spec = std::fs::read_to_string(out.join("fedonet_median_spectrum.csv")).unwrap();
    assert_eq!(spec.lines().next(), Some("k,truth,prediction"));
    assert!(!out.join("fedonet_median_cumulative.csv").exists());
    let field = std::fs::read_to_string(out.join("vanilla_worst_field.csv")).unwrap();
    assert_eq!(field.lines().count(), 1 + 16 * 16);
}

#[test]
fn eval_rejects_other_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_burgers(dir.path(), "d.bin", "10", "1");
    let ckpt = dir.path().join("m.ckpt");
    train(&data, "vanilla", &ckpt, "5");
    let other = dir.path().join("ac.bin");
    ok(&["generate", "--benchmark", "allen_cahn", "--count", "10", "--out", p(&other), "--param", "nx=32", "--param", "nt=9"]);
    let out = fedonet(&["eval", "--data", p(&other), "--ckpt", p(&ckpt), "--out", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burgers1d"));
}

#[test]
fn selftest_quick_lists_every_check() {
    let out = fedonet(&["selftest", "--quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "poisson manufactured solution",
        "burgers self-convergence and mean",
        "lorenz63 rk4 order",
        "lorenz96 equilibrium",
        "allen-cahn fixed points",
        "ks linear dispersion",
        "disk signed distance",
        "fourier feature whitening",
        "gradient finite differences",
        "energy spectra",
    ] {
        assert!(text.contains(name), "missing {name}:\n{text}");
    }
    assert!(text.contains("10 checks,"));
    let failed = text.lines().filter(|l| l.starts_with("[FAIL]")).count();
    assert_eq!(out.status.code(), Some(if failed == 0 { 0 } else { 4 }));
}
