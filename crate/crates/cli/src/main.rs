//! `dlpa`: dataset generation, training, evaluation, sweeps and runtime
//! benchmarks for learned power allocation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 validation
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dlpa_core::dataset::{self, Dataset, TEST_SEED_OFFSET};
use dlpa_core::experiment::{self, ExperimentReport, UsersSweep};
use dlpa_core::net::{Checkpoint, LossKind, TrainConfig, DEFAULT_HIDDEN};
use dlpa_core::{AbHpDesign, Error, PsoConfig, Scenario};

#[derive(Parser)]
#[command(name = "dlpa", version, about = "Hybrid-precoded MIMO power allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PSO-labeled dataset (resumes an interrupted file).
    Generate(GenerateArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Mean sum-rate of DL-PA, PSO-PA and EQ-PA per data split.
    Evaluate(EvaluateArgs),
    /// Train on nested subsets of one dataset and evaluate each model.
    SweepSize(SweepSizeArgs),
    /// Generate, train and evaluate for several user counts.
    SweepUsers(SweepUsersArgs),
    /// Time PSO-PA against DL-PA on the same realizations.
    BenchRuntime(BenchArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario key/value file; built-in microcell defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "out")]
    output_dir: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(short, long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Clone)]
struct Training {
    #[arg(long, default_value = "mse")]
    loss: LossKind,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIDDEN.to_vec())]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
}

impl Training {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            loss: self.loss,
            hidden: self.hidden.clone(),
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset size S.
    #[arg(short = 'n', long, default_value_t = 2000)]
    size: usize,
    /// Draw from the disjoint test seed range.
    #[arg(long)]
    test: bool,
    /// Output file; defaults to `train.ds` or `test.ds` in the output dir.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    training: Training,
    /// Training dataset; defaults to `train.ds` in the output dir.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Model checkpoint; DL-PA rows are omitted without one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training dataset, evaluated on the same split `train` used.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
}

#[derive(Args)]
struct SweepSizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    training: Training,
    #[arg(long, value_delimiter = ',', default_values_t = vec![500, 2000, 8000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
}

#[derive(Args)]
struct SweepUsersArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    training: Training,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 6, 8, 10, 12])]
    users: Vec<usize>,
    /// Dataset size S per user count.
    #[arg(short = 'n', long, default_value_t = 2000)]
    size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Realizations timed per user count; 0 skips timing.
    #[arg(long, default_value_t = 1000)]
    bench_realizations: usize,
    #[arg(long, default_value_t = 1)]
    bench_workers: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Model checkpoint; defaults to `model.ckpt` in the output dir.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::EmptySelection { .. } | Error::Infeasible { .. } => 1,
        Error::Io(_) | Error::Format(_) | Error::Checksum { .. } | Error::Version { .. } => 2,
        Error::Validation(_) | Error::Dimension { .. } | Error::Singular | Error::DegenerateScaling(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> dlpa_core::Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepSize(a) => sweep_size(a),
        Command::SweepUsers(a) => sweep_users(a),
        Command::BenchRuntime(a) => bench(a),
    }
}

struct Setup {
    scenario: Scenario,
    design: AbHpDesign,
    pso: PsoConfig,
}

fn setup(common: &Common) -> dlpa_core::Result<Setup> {
    let scenario = match &common.config {
        Some(path) => Scenario::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            other => other,
        })?,
        None => Scenario::default(),
    };
    scenario.validate()?;
    let design = AbHpDesign::for_scenario(&scenario)?;
    fs::create_dir_all(&common.output_dir)?;
    Ok(Setup {
        scenario,
        design,
        pso: PsoConfig::default(),
    })
}

fn out(common: &Common, name: &str) -> PathBuf {
    common.output_dir.join(name)
}

fn write(path: &Path, text: &str) -> dlpa_core::Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Writes the config echo, seed and stage timings next to a command's CSV.
fn write_summary(
    common: &Common,
    name: &str,
    s: &Setup,
    train_cfg: Option<&TrainConfig>,
    runtimes: Vec<(String, f64)>,
) -> dlpa_core::Result<()> {
    let mut config = experiment::config_echo(&s.scenario, &s.pso, train_cfg);
    config.push(("workers".into(), common.workers.to_string()));
    let report = ExperimentReport {
        seed: common.seed,
        config,
        runtimes,
        ..Default::default()
    };
    write(&out(common, name), &report.summary())
}

fn load_dataset(path: &Path, scenario: &Scenario) -> dlpa_core::Result<Dataset> {
    let (ds, warning) = Dataset::load_for(path, scenario)?;
    if let Some(w) = warning {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(ds)
}

fn generate(a: GenerateArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let base = if a.test {
        a.common.seed.wrapping_add(TEST_SEED_OFFSET)
    } else {
        a.common.seed
    };
    let path = a
        .file
        .clone()
        .unwrap_or_else(|| out(&a.common, if a.test { "test.ds" } else { "train.ds" }));
    let mut ds = if path.exists() {
        let existing = load_dataset(&path, &s.scenario)?;
        if existing.header.base_seed != base {
            return Err(Error::Validation(format!(
                "{} was generated with base seed {}, not {base}",
                path.display(),
                existing.header.base_seed
            )));
        }
        if existing.len() > a.size {
            return Err(Error::Validation(format!(
                "{} already holds {} samples, more than the requested {}",
                path.display(),
                existing.len(),
                a.size
            )));
        }
        eprintln!("resuming {} at sample {}", path.display(), existing.len());
        existing
    } else {
        Dataset::empty(&s.scenario, &s.design, base)
    };
    let started = Instant::now();
    let progress = |done: usize, total: usize| eprintln!("labeled {done}/{total}");
    ds.extend_to(&s.scenario, &s.design, &s.pso, a.size, a.common.workers, Some(&progress))?;
    ds.save(&path)?;
    dataset::write_sidecar(
        &path,
        &ds,
        &s.scenario,
        &s.pso,
        started.elapsed().as_secs_f64(),
        a.common.workers,
    )?;
    println!(
        "wrote {} ({} samples, {} users, {} RF chains)",
        path.display(),
        ds.len(),
        ds.header.num_users,
        ds.header.num_rf_chains
    );
    Ok(())
}

fn train(a: TrainArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let path = a.dataset.clone().unwrap_or_else(|| out(&a.common, "train.ds"));
    let ds = load_dataset(&path, &s.scenario)?;
    let cfg = a.training.config(a.common.seed);
    let started = Instant::now();
    let (outcome, train_set, val_set) = experiment::train_on_dataset(&ds, a.training.train_fraction, &cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut csv = String::from("epoch,train_loss,validation_loss\n");
    for (i, t) in outcome.history.train_loss.iter().enumerate() {
        let v = outcome.history.val_loss.get(i).copied().unwrap_or(f64::NAN);
        csv.push_str(&format!("{},{t:.9},{v:.9}\n", i + 1));
    }
    write(&out(&a.common, "train_history.csv"), &csv)?;
    let ckpt = out(&a.common, "model.ckpt");
    Checkpoint::new(outcome.model, Some(outcome.adam)).save(&ckpt)?;
    write_summary(&a.common, "train.txt", &s, Some(&cfg), vec![("train".into(), elapsed)])?;
    println!(
        "wrote {} ({} training, {} validation samples)",
        ckpt.display(),
        train_set.len(),
        val_set.len()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let model = a.model.as_ref().map(Checkpoint::load).transpose()?.map(|c| c.model);
    let mut report = ExperimentReport {
        seed: a.common.seed,
        config: experiment::config_echo(&s.scenario, &s.pso, None),
        ..Default::default()
    };
    let train_path = a.dataset.clone().unwrap_or_else(|| out(&a.common, "train.ds"));
    let test_path = a.test_dataset.clone().unwrap_or_else(|| out(&a.common, "test.ds"));
    let mut any = false;
    if train_path.exists() || a.dataset.is_some() {
        let ds = load_dataset(&train_path, &s.scenario)?;
        let (tr, va) = dataset::split(&ds, a.train_fraction, a.common.seed)?;
        for (name, part) in [("train", &tr), ("validation", &va)] {
            let t = Instant::now();
            report.splits.push(experiment::evaluate_split(
                name,
                &s.scenario,
                &s.design,
                part,
                model.as_ref(),
                a.common.workers,
            )?);
            report.runtimes.push((format!("evaluate_{name}"), t.elapsed().as_secs_f64()));
        }
        any = true;
    }
    if test_path.exists() || a.test_dataset.is_some() {
        let ds = load_dataset(&test_path, &s.scenario)?;
        let t = Instant::now();
        report.splits.push(experiment::evaluate_split(
            "test",
            &s.scenario,
            &s.design,
            &ds,
            model.as_ref(),
            a.common.workers,
        )?);
        report.runtimes.push(("evaluate_test".into(), t.elapsed().as_secs_f64()));
        any = true;
    }
    if !any {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no dataset found at {} or {}", train_path.display(), test_path.display()),
        )));
    }
    let csv = report.to_csv();
    print!("{csv}");
    write(&out(&a.common, "evaluation.csv"), &csv)?;
    write(&out(&a.common, "evaluation.txt"), &report.summary())
}

fn sweep_size(a: SweepSizeArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let largest = a.sizes.iter().copied().max().unwrap_or(0);
    let seed = a.common.seed;
    let master = experiment::generate(&s.scenario, &s.design, &s.pso, largest, seed, a.common.workers)?;
    let test = experiment::generate(
        &s.scenario,
        &s.design,
        &s.pso,
        a.test_size,
        seed.wrapping_add(TEST_SEED_OFFSET),
        a.common.workers,
    )?;
    let points = experiment::sweep_dataset_size(
        &s.scenario,
        &s.design,
        &master,
        &test,
        &a.sizes,
        a.training.train_fraction,
        &a.training.config(seed),
        a.common.workers,
    )?;
    let csv = experiment::size_sweep_csv(&points);
    print!("{csv}");
    write(&out(&a.common, "sweep_size.csv"), &csv)?;
    write_summary(&a.common, "sweep_size.txt", &s, Some(&a.training.config(seed)), Vec::new())
}

fn sweep_users(a: SweepUsersArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let cfg = UsersSweep {
        user_counts: a.users.clone(),
        dataset_size: a.size,
        test_size: a.test_size,
        train_fraction: a.training.train_fraction,
        pso: s.pso,
        train: a.training.config(a.common.seed),
        seed: a.common.seed,
        workers: a.common.workers,
        bench_realizations: a.bench_realizations,
        bench_workers: a.bench_workers,
    };
    let points = experiment::sweep_users(&s.scenario, &cfg)?;
    let table = experiment::users_table_csv(&points);
    print!("{table}");
    write(&out(&a.common, "sweep_users_table.csv"), &table)?;
    write(&out(&a.common, "sweep_users.csv"), &experiment::users_detail_csv(&points))?;
    let benches: Vec<_> = points.iter().filter_map(|p| p.runtime.clone()).collect();
    if !benches.is_empty() {
        write(&out(&a.common, "sweep_users_runtime.csv"), &experiment::runtime_csv(&benches))?;
    }
    write_summary(&a.common, "sweep_users.txt", &s, Some(&cfg.train), Vec::new())
}

fn bench(a: BenchArgs) -> dlpa_core::Result<()> {
    let s = setup(&a.common)?;
    let path = a.model.clone().unwrap_or_else(|| out(&a.common, "model.ckpt"));
    let model = Checkpoint::load(&path)?.model;
    // single worker unless asked otherwise, so ratios compare across hosts
    let workers = a.common.workers.max(1);
    let b = experiment::bench_runtime(
        &s.scenario,
        &s.design,
        &model,
        &s.pso,
        a.realizations,
        a.common.seed.wrapping_add(TEST_SEED_OFFSET),
        workers,
    )?;
    let csv = experiment::runtime_csv(std::slice::from_ref(&b));
    print!("{csv}");
    write(&out(&a.common, "bench_runtime.csv"), &csv)?;
    write_summary(
        &a.common,
        "bench_runtime.txt",
        &s,
        None,
        vec![("pso_total".into(), b.pso_total_s), ("dl_total".into(), b.dl_total_s)],
    )
}
