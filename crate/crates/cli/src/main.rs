use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedonet::datagen::{generate_dataset, BenchmarkId, BenchmarkSpec, Dataset, GenerateOptions};
use fedonet::eval::{
    cumulative_csv, evaluate_model, field_csv, paired_table, predict_samples, spectrum_kind, spectrum_table,
    time_cumulative_error, EvalReport, SpectrumKind,
};
use fedonet::model::{DeepOnetModel, Variant};
use fedonet::persist::{load_checkpoint, read_dataset, save_checkpoint, write_atomic, write_dataset, Checkpoint};
use fedonet::selftest::{self, run_selftest};
use fedonet::training::{check_compatible, fit_normalization, LossHistory, Trainer};
use fedonet::Error;
use ndarray::Axis;

mod config;

use config::RunConfig;

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Fourier-embedded DeepONet benchmarks: generate datasets, train, evaluate.
///
/// Exit status: 0 success, 2 usage error, 3 validation or file error,
/// 4 numerical failure (divergence, solver failure, failed self-test).
/// FEDONET_THREADS overrides the worker count of every command.
#[derive(Parser)]
#[command(name = "fedonet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset file.
    Generate(GenerateArgs),
    /// Train a model on a dataset file and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate one or more checkpoints on a dataset's holdout split.
    Eval(EvalArgs),
    /// Run the numerical self-checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// poisson2d, burgers1d, lorenz63, eikonal, lorenz96, allen_cahn or ks.
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: BenchmarkId,
    /// Number of input/output pairs.
    #[arg(long)]
    count: usize,
    /// Base seed; sample i uses a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Benchmark parameter override `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Training split size (default: count minus count/10).
    #[arg(long)]
    split: Option<usize>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// vanilla or fedonet.
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    /// Output checkpoint file.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file; see `--set` for keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override `key=value`, applied after the file; repeatable. Keys:
    /// hidden, branch_hidden, trunk_hidden, latent_p, activation,
    /// mapping_size, sigma, embed_seed, model_seed, normalize,
    /// batch_functions, queries_per_function, lr, lr_schedule, lr_gamma,
    /// lr_every, max_steps, eval_every, seed.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Loss history CSV (default: checkpoint path with `.history.csv`).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Continue from this checkpoint up to `max_steps` instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Suppress progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset file; its holdout split is evaluated.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint file; repeat to compare several models.
    #[arg(long = "ckpt", required = true)]
    ckpts: Vec<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Also write energy spectra for each stratum.
    #[arg(long)]
    spectra: bool,
    /// Comma-separated strata whose fields are written.
    #[arg(long, default_value = "best,median,worst")]
    strata: String,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Fewer whitening samples and no superset fit.
    #[arg(long)]
    quick: bool,
}

fn parse_benchmark(s: &str) -> Result<BenchmarkId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence(_) | Error::SolverFailure { .. } | Error::ZeroNorm => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), Error> {
    let env = std::env::var("FEDONET_THREADS").ok();
    let n = match env {
        Some(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("FEDONET_THREADS must be an integer, got `{v}`")))?,
        ),
        None => flag,
    };
    if let Some(n) = n.filter(|&n| n > 0) {
        // Fails only if a pool already exists, which leaves the old size in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn split_pair(s: &str) -> Result<(&str, &str), Error> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{s}`")))
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), Error> {
    init_threads(a.threads)?;
    let id = a.benchmark;
    let mut spec = BenchmarkSpec::new(id);
    for p in &a.params {
        let (k, v) = split_pair(p)?;
        spec.set_param(k, v)?;
    }
    let d = generate_dataset(&spec, a.count, a.seed, GenerateOptions { split: a.split })?;
    write_dataset(&d, &a.out)?;
    println!(
        "{}: {} samples ({} train / {} holdout), {} sensors, {} query points, {} redraws -> {}",
        id,
        d.count(),
        d.split,
        d.count() - d.split,
        d.branch.ncols(),
        d.num_points(),
        d.redraws,
        a.out.display()
    );
    let checks = sample_checks(&d)?;
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().any(|c| !c.passed) {
        return Err(Error::Divergence("generation checks failed".into()));
    }
    Ok(())
}

/// Regenerate 1% of the samples (at least one) and compare bit-for-bit,
/// then run the solver oracle for this benchmark.
fn sample_checks(d: &Dataset) -> Result<Vec<selftest::Check>, Error> {
    let mut out = Vec::new();
    let n = d.count();
    if n > 0 {
        let k = n.div_ceil(100);
        let stride = n / k;
        let mut same = 0;
        for j in 0..k {
            let i = j * stride;
            let again = d.spec.generate_sample(d.sample_seeds[i])?;
            d.spec.check_sample(&again)?;
            same += (again == d.sample(i)) as usize;
        }
        out.push(selftest::Check {
            name: "sample regeneration".into(),
            detail: format!("{same}/{k} re-solved samples identical"),
            passed: same == k,
        });
    }
    out.push(selftest::solver_check(d.benchmark()));
    Ok(out)
}

fn cmd_train(a: &TrainArgs) -> Result<(), Error> {
    init_threads(None)?;
    let variant = a.variant;
    let mut rc = RunConfig::default();
    if let Some(p) = &a.config {
        rc.apply_file(p)?;
    }
    for s in &a.sets {
        let (k, v) = split_pair(s)?;
        rc.set(k, v)?;
    }
    let d = read_dataset(&a.data)?;
    let (mut trainer, model_seed) = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.model.variant() != variant {
                return Err(Error::InconsistentConfig(format!(
                    "checkpoint holds a {} model, --variant is {variant}",
                    ck.model.variant()
                )));
            }
            let seed = ck.model_seed;
            let mut t = ck.into_trainer();
            t.config.max_steps = rc.train.max_steps;
            (t, seed)
        }
        None => {
            let g = d.grid();
            let mut cfg = rc.model_config(variant, d.branch.ncols(), g.coord_dim(), g.channels);
            cfg.benchmark = Some(d.benchmark());
            let mut model = DeepOnetModel::build(cfg, rc.model_seed)?;
            if rc.normalize {
                fit_normalization(&mut model, &d)?;
            }
            (Trainer::new(model, rc.train)?, rc.model_seed)
        }
    };
    check_compatible(&trainer.model, &d)?;
    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    let until = trainer.config.max_steps;
    let mut history = LossHistory::new();
    let quiet = a.quiet;
    let result = trainer.run(&d, until, &mut history, |e| {
        if let (Some(h), false) = (e.holdout_rel_l2, quiet) {
            println!("step {:>7}  mse {:.6e}  holdout rel l2 {:.6e}", e.step + 1, e.train_mse, h);
        }
    });
    history.write_csv(&history_path)?;
    result?;
    save_checkpoint(&Checkpoint::from_trainer(&trainer, model_seed), &a.out)?;
    println!(
        "trained {} on {} for {} steps -> {} (history {})",
        variant,
        d.benchmark(),
        trainer.step,
        a.out.display(),
        history_path.display()
    );
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Error> {
    init_threads(a.threads)?;
    let strata: Vec<&str> = a.strata.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = strata.iter().find(|s| !matches!(**s, "best" | "median" | "worst")) {
        return Err(Error::InvalidArgument(format!("unknown stratum `{bad}`")));
    }
    let d = read_dataset(&a.data)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let grid = d.grid();
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut labels = HashSet::new();
    for path in &a.ckpts {
        let ck = load_checkpoint(path)?;
        let model = ck.model;
        let report = evaluate_model(&model, &d)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let label = if labels.insert(stem.clone()) { stem } else { format!("{stem}_{}", labels.len()) };
        write_text(&a.out, &format!("{label}_report.json"), &report.to_json())?;
        write_text(&a.out, &format!("{label}_per_sample.csv"), &report.to_csv())?;
        for s in &strata {
            let i = report.stratum(s).expect("validated stratum");
            let pred = predict_samples(&model, &d, &[i])?;
            let pred = pred.index_axis(Axis(0), 0);
            let truth = d.targets.index_axis(Axis(0), i);
            write_text(&a.out, &format!("{label}_{s}_field.csv"), &field_csv(&grid, truth, pred)?)?;
            if let Some(curve) = time_cumulative_error(&grid, truth, pred)? {
                let axis = &grid.axes[0];
                let times = (0..axis.len).map(|t| axis.position(t));
                write_text(&a.out, &format!("{label}_{s}_cumulative.csv"), &cumulative_csv(&curve, times))?;
            }
            if a.spectra {
                if let Some(table) = spectrum_table(&grid, truth, pred)? {
                    write_text(&a.out, &format!("{label}_{s}_spectrum.csv"), &table.to_csv())?;
                }
            }
        }
        println!(
            "{label}: {} {} on {} holdout samples, rel l2 mean {:.4}% std {:.4}% median {:.4}% (best #{}, worst #{})",
            report.variant,
            report.benchmark,
            report.sample_count,
            100.0 * report.mean,
            100.0 * report.std,
            100.0 * report.median,
            report.best_index,
            report.worst_index
        );
        reports.push(report);
    }
    write_text(&a.out, "table.csv", &paired_table(&reports))?;
    if a.spectra {
        match spectrum_kind(&grid) {
            Some(SpectrumKind::Shell2d) => println!("spectra: 2-D shell sums"),
            Some(SpectrumKind::TimeAveraged1d) => println!("spectra: 1-D, averaged over time"),
            None => println!("spectra: not defined for {}", d.benchmark()),
        }
    }
    Ok(())
}

fn cmd_selftest(a: &SelftestArgs) -> Result<(), Error> {
    init_threads(None)?;
    let checks = run_selftest(a.quick, |c| println!("{c}"));
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        return Err(Error::Divergence(format!("{failed} self-test checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedonet: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
