//! Experiment pipelines: evaluation of DL-PA, PSO-PA and EQ-PA, dataset-size
//! and user-count sweeps, runtime benchmarking and CSV reports.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::dataset::{pso_seed, realize, split_indices, with_workers, Dataset, TEST_SEED_OFFSET};
use crate::error::{Error, Result};
use crate::metrics::{normalize_full_power, LinkGains};
use crate::net::features::{build_features, power_matrix};
use crate::net::mlp::MlpModel;
use crate::net::train::{predict, train, Split, TrainConfig, TrainOutcome};
use crate::precoding::AbHpDesign;
use crate::pso::{equal_power_from_gains, pso_optimize, PsoConfig};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DlPa,
    PsoPa,
    EqPa,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::DlPa => "DL-PA",
            Method::PsoPa => "PSO-PA",
            Method::EqPa => "EQ-PA",
        }
    }
}

/// Sum-rates of one realization under each method, bps/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRates {
    pub dl: Option<f64>,
    pub pso: f64,
    pub eq: f64,
}

/// Mean sum-rates of one data split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split: String,
    pub samples: usize,
    pub dl: Option<f64>,
    pub pso: f64,
    pub eq: f64,
}

impl SplitResult {
    pub fn mean(&self, method: Method) -> Option<f64> {
        match method {
            Method::DlPa => self.dl,
            Method::PsoPa => Some(self.pso),
            Method::EqPa => Some(self.eq),
        }
    }

    /// `100 · method mean / PSO-PA mean`.
    pub fn relative_pct(&self, method: Method) -> Option<f64> {
        self.mean(method).map(|m| 100.0 * m / self.pso)
    }

    /// PSO-PA mean minus DL-PA mean.
    pub fn dl_gap(&self) -> Option<f64> {
        self.dl.map(|dl| self.pso - dl)
    }
}

fn check_model(model: &MlpModel, dataset: &Dataset) -> Result<()> {
    if model.input_size() != dataset.header.input_size || model.output_size() != dataset.header.num_users {
        return Err(Error::Validation(format!(
            "model maps {} inputs to {} outputs, dataset has {} features and {} users",
            model.input_size(),
            model.output_size(),
            dataset.header.input_size,
            dataset.header.num_users
        )));
    }
    Ok(())
}

/// Per-realization sum-rates of every sample. Link gains are rebuilt from
/// each sample's seed; DL-PA runs on the stored features.
pub fn evaluate_samples(
    scenario: &Scenario,
    design: &AbHpDesign,
    dataset: &Dataset,
    model: Option<&MlpModel>,
    workers: usize,
) -> Result<Vec<SampleRates>> {
    if let Some(m) = model {
        check_model(m, dataset)?;
    }
    let predictions = match model {
        Some(m) if !dataset.is_empty() => Some(predict(m, dataset.features().view())?),
        _ => None,
    };
    let (sigma2, p_total) = (design.noise_power_mw, design.total_power_mw);
    with_workers(workers, || {
        dataset
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, sample)| {
                let (_, gains) = realize(design, scenario, sample.seed)?;
                let pso = normalize_full_power(&sample.label, &gains.bb_gains, p_total)?;
                let eq = equal_power_from_gains(&gains.bb_gains, p_total)?;
                let dl = match &predictions {
                    Some(p) => {
                        let p_hat = p.row(i).to_vec();
                        let alloc = power_matrix(&p_hat, &gains.bb_gains, p_total)?;
                        Some(gains.sum_rate(&alloc.powers_mw, sigma2))
                    }
                    None => None,
                };
                Ok(SampleRates {
                    dl,
                    pso: gains.sum_rate(&pso.powers_mw, sigma2),
                    eq: gains.sum_rate(&eq.powers_mw, sigma2),
                })
            })
            .collect()
    })?
}

pub fn summarize(split: &str, rates: &[SampleRates]) -> SplitResult {
    let n = rates.len().max(1) as f64;
    let dl = if !rates.is_empty() && rates.iter().all(|r| r.dl.is_some()) {
        Some(rates.iter().map(|r| r.dl.unwrap_or(0.0)).sum::<f64>() / n)
    } else {
        None
    };
    SplitResult {
        split: split.to_string(),
        samples: rates.len(),
        dl,
        pso: rates.iter().map(|r| r.pso).sum::<f64>() / n,
        eq: rates.iter().map(|r| r.eq).sum::<f64>() / n,
    }
}

pub fn evaluate_split(
    split: &str,
    scenario: &Scenario,
    design: &AbHpDesign,
    dataset: &Dataset,
    model: Option<&MlpModel>,
    workers: usize,
) -> Result<SplitResult> {
    Ok(summarize(split, &evaluate_samples(scenario, design, dataset, model, workers)?))
}

/// Evaluation results together with everything needed to regenerate them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub splits: Vec<SplitResult>,
    /// Wall-clock seconds per named stage; not part of the CSV.
    pub runtimes: Vec<(String, f64)>,
    /// `key = value` echo of scenario, PSO and training settings.
    pub config: Vec<(String, String)>,
    pub seed: u64,
}

impl ExperimentReport {
    /// One row per method per split, sorted in insertion order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,method,samples,mean_sum_rate_bps_hz,relative_to_pso_pct\n");
        for s in &self.splits {
            for method in [Method::DlPa, Method::PsoPa, Method::EqPa] {
                if let (Some(mean), Some(rel)) = (s.mean(method), s.relative_pct(method)) {
                    let _ = writeln!(out, "{},{},{},{:.6},{:.4}", s.split, method.name(), s.samples, mean, rel);
                }
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        for (k, v) in &self.config {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (stage, secs) in &self.runtimes {
            let _ = writeln!(out, "runtime.{stage}_s = {secs:.3}");
        }
        out
    }
}

/// Key/value echo of a scenario and the solver settings.
pub fn config_echo(scenario: &Scenario, pso: &PsoConfig, train_cfg: Option<&TrainConfig>) -> Vec<(String, String)> {
    let mut echo: Vec<(String, String)> = scenario
        .to_config_string()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (format!("scenario.{}", k.trim()), v.trim().to_string()))
        .collect();
    echo.push(("scenario.fingerprint".into(), format!("{:016x}", scenario.fingerprint())));
    echo.push(("pso.swarm_size".into(), pso.swarm_size.to_string()));
    echo.push(("pso.max_iters".into(), pso.max_iters.to_string()));
    echo.push(("pso.stall_iters".into(), pso.stall_iters.to_string()));
    if let Some(c) = train_cfg {
        echo.push(("train.epochs".into(), c.epochs.to_string()));
        echo.push(("train.batch_size".into(), c.batch_size.to_string()));
        echo.push(("train.learning_rate".into(), format!("{:?}", c.learning_rate)));
        echo.push(("train.loss".into(), c.loss.as_str().into()));
        echo.push(("train.hidden".into(), format!("{:?}", c.hidden)));
        echo.push(("train.seed".into(), c.seed.to_string()));
    }
    echo
}

/// Splits `dataset` into train and validation parts and trains on them.
pub fn train_on_dataset(
    dataset: &Dataset,
    train_fraction: f64,
    cfg: &TrainConfig,
) -> Result<(TrainOutcome, Dataset, Dataset)> {
    let (train_idx, val_idx) = split_indices(dataset.len(), train_fraction, cfg.seed)?;
    let (train_set, val_set) = (dataset.subset(&train_idx), dataset.subset(&val_idx));
    let outcome = fit(&train_set, &val_set, cfg)?;
    Ok((outcome, train_set, val_set))
}

fn fit(train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (xt, yt) = (train_set.features(), train_set.labels());
    let (xv, yv) = (val_set.features(), val_set.labels());
    let val = Split::new(xv.view(), yv.view())?;
    train(
        Split::new(xt.view(), yt.view())?,
        (!val.is_empty()).then_some(val),
        cfg,
    )
}

/// Generates `count` labeled samples; test data should pass a base seed
/// offset by [`TEST_SEED_OFFSET`].
pub fn generate(
    scenario: &Scenario,
    design: &AbHpDesign,
    pso: &PsoConfig,
    count: usize,
    base_seed: u64,
    workers: usize,
) -> Result<Dataset> {
    let mut ds = Dataset::empty(scenario, design, base_seed);
    ds.extend_to(scenario, design, pso, count, workers, None)?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizePoint {
    pub size: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test: SplitResult,
}

/// Trains one model per size on nested subsets of `master` and evaluates
/// each on `test`. Subsets come from one shuffle of `master`: size `n`
/// trains on the first `round(0.8·n)` samples of the shuffled training
/// part and validates on the first `n − round(0.8·n)` of the rest.
#[allow(clippy::too_many_arguments)]
pub fn sweep_dataset_size(
    scenario: &Scenario,
    design: &AbHpDesign,
    master: &Dataset,
    test: &Dataset,
    sizes: &[usize],
    train_fraction: f64,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<Vec<SizePoint>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("dataset sizes must be non-empty and strictly ascending"));
    }
    if let Some(&largest) = sizes.last().filter(|&&n| n > master.len()) {
        return Err(Error::config(format!(
            "size {largest} exceeds the master dataset ({} samples)",
            master.len()
        )));
    }
    let (pool_train, pool_val) = split_indices(master.len(), train_fraction, cfg.seed)?;
    sizes
        .iter()
        .map(|&n| {
            let n_train = ((n as f64 * train_fraction).round() as usize).min(pool_train.len());
            let n_val = (n - n_train).min(pool_val.len());
            let train_set = master.subset(&pool_train[..n_train]);
            let val_set = master.subset(&pool_val[..n_val]);
            let outcome = fit(&train_set, &val_set, cfg)?;
            let test = evaluate_split("test", scenario, design, test, Some(&outcome.model), workers)?;
            Ok(SizePoint {
                size: n,
                train_samples: n_train,
                val_samples: n_val,
                test,
            })
        })
        .collect()
}

pub fn size_sweep_csv(points: &[SizePoint]) -> String {
    let mut out = String::from(
        "dataset_size,train_samples,validation_samples,test_samples,dl_pa_bps_hz,pso_pa_bps_hz,eq_pa_bps_hz,gap_bps_hz,dl_relative_pct\n",
    );
    for p in points {
        let dl = p.test.dl.unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4}",
            p.size,
            p.train_samples,
            p.val_samples,
            p.test.samples,
            dl,
            p.test.pso,
            p.test.eq,
            p.test.pso - dl,
            100.0 * dl / p.test.pso
        );
    }
    out
}

/// Timing of PSO-PA and DL-PA over the same realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeBench {
    pub users: usize,
    pub realizations: usize,
    pub workers: usize,
    pub pso_total_s: f64,
    pub dl_total_s: f64,
}

impl RuntimeBench {
    pub fn ratio(&self) -> f64 {
        self.dl_total_s / self.pso_total_s
    }

    pub fn pso_mean_s(&self) -> f64 {
        self.pso_total_s / self.realizations.max(1) as f64
    }

    pub fn dl_mean_s(&self) -> f64 {
        self.dl_total_s / self.realizations.max(1) as f64
    }
}

const WARMUP_REALIZATIONS: usize = 10;

/// Times PSO-PA (swarm search plus normalization) and DL-PA (feature build,
/// one batched forward pass, normalization) on `n` realizations. Precoders
/// are computed beforehand since both methods share them. A warm-up pass
/// over a few realizations precedes the timed runs.
pub fn bench_runtime(
    scenario: &Scenario,
    design: &AbHpDesign,
    model: &MlpModel,
    pso: &PsoConfig,
    n: usize,
    base_seed: u64,
    workers: usize,
) -> Result<RuntimeBench> {
    let k = scenario.num_users();
    if model.output_size() != k || model.input_size() != crate::net::input_size(design.num_rf_chains(), k) {
        return Err(Error::Validation("model shape does not match the scenario".into()));
    }
    let (sigma2, p_total) = (design.noise_power_mw, design.total_power_mw);
    let inputs = (0..n as u64)
        .map(|i| realize(design, scenario, base_seed.wrapping_add(i + 1)))
        .collect::<Result<Vec<_>>>()?;

    let run_pso = |items: &[(crate::precoding::HybridPrecoder, LinkGains)]| -> Result<Vec<Vec<f64>>> {
        items
            .par_iter()
            .enumerate()
            .map(|(i, (_, gains))| {
                let cfg = pso.with_seed(pso_seed(base_seed.wrapping_add(i as u64 + 1)));
                let res = pso_optimize(gains, sigma2, p_total, &cfg)?;
                Ok(res.allocation(gains, p_total)?.powers_mw)
            })
            .collect()
    };
    let run_dl = |items: &[(crate::precoding::HybridPrecoder, LinkGains)]| -> Result<Vec<Vec<f64>>> {
        let features = items
            .par_iter()
            .map(|(pre, _)| build_features(pre.effective.view(), pre.bb.view()))
            .collect::<Result<Vec<_>>>()?;
        let width = model.input_size();
        let x = Array2::from_shape_fn((features.len(), width), |(i, j)| features[i].values[j]);
        let p_hat = predict(model, x.view())?;
        items
            .par_iter()
            .enumerate()
            .map(|(i, (_, gains))| Ok(power_matrix(&p_hat.row(i).to_vec(), &gains.bb_gains, p_total)?.powers_mw))
            .collect()
    };

    with_workers(workers, || -> Result<RuntimeBench> {
        let warm = &inputs[..n.min(WARMUP_REALIZATIONS)];
        if !warm.is_empty() {
            run_pso(warm)?;
            run_dl(warm)?;
        }
        let t = Instant::now();
        std::hint::black_box(run_pso(&inputs)?);
        let pso_total_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        std::hint::black_box(run_dl(&inputs)?);
        let dl_total_s = t.elapsed().as_secs_f64();
        Ok(RuntimeBench {
            users: k,
            realizations: n,
            workers,
            pso_total_s,
            dl_total_s,
        })
    })?
}

pub fn runtime_csv(benches: &[RuntimeBench]) -> String {
    let mut out = String::from("users,realizations,workers,pso_total_s,dl_total_s,pso_mean_ms,dl_mean_ms,dl_to_pso_pct\n");
    for b in benches {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4}",
            b.users,
            b.realizations,
            b.workers,
            b.pso_total_s,
            b.dl_total_s,
            1e3 * b.pso_mean_s(),
            1e3 * b.dl_mean_s(),
            100.0 * b.ratio()
        );
    }
    out
}

/// Settings of a user-count sweep.
#[derive(Debug, Clone)]
pub struct UsersSweep {
    pub user_counts: Vec<usize>,
    pub dataset_size: usize,
    pub test_size: usize,
    pub train_fraction: f64,
    pub pso: PsoConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub workers: usize,
    /// Realizations timed per user count; 0 skips the runtime benchmark.
    pub bench_realizations: usize,
    pub bench_workers: usize,
}

#[derive(Debug, Clone)]
pub struct UsersPoint {
    pub users: usize,
    pub rf_chains: usize,
    pub test: SplitResult,
    pub runtime: Option<RuntimeBench>,
    pub model: MlpModel,
}

/// Scenario with `users` spread evenly over the groups of `base`.
pub fn with_user_count(base: &Scenario, users: usize) -> Result<Scenario> {
    let g = base.groups.len();
    if g == 0 || users == 0 || users % g != 0 {
        return Err(Error::config(format!("{users} users cannot be split evenly over {g} groups")));
    }
    let mut sc = base.clone();
    for group in &mut sc.groups {
        group.users = users / g;
    }
    sc.validate()?;
    Ok(sc)
}

/// For each user count: generate, label, train, evaluate on a disjoint
/// test set and optionally benchmark runtime.
pub fn sweep_users(base: &Scenario, cfg: &UsersSweep) -> Result<Vec<UsersPoint>> {
    let scenarios = cfg
        .user_counts
        .iter()
        .map(|&k| with_user_count(base, k))
        .collect::<Result<Vec<_>>>()?;
    scenarios
        .iter()
        .map(|sc| {
            let design = AbHpDesign::for_scenario(sc)?;
            let train_data = generate(sc, &design, &cfg.pso, cfg.dataset_size, cfg.seed, cfg.workers)?;
            let test_base = cfg.seed.wrapping_add(TEST_SEED_OFFSET);
            let test_data = generate(sc, &design, &cfg.pso, cfg.test_size, test_base, cfg.workers)?;
            let (outcome, _, _) = train_on_dataset(&train_data, cfg.train_fraction, &cfg.train)?;
            let test = evaluate_split("test", sc, &design, &test_data, Some(&outcome.model), cfg.workers)?;
            let runtime = (cfg.bench_realizations > 0)
                .then(|| {
                    bench_runtime(
                        sc,
                        &design,
                        &outcome.model,
                        &cfg.pso,
                        cfg.bench_realizations,
                        test_base,
                        cfg.bench_workers,
                    )
                })
                .transpose()?;
            Ok(UsersPoint {
                users: sc.num_users(),
                rf_chains: design.num_rf_chains(),
                test,
                runtime,
                model: outcome.model,
            })
        })
        .collect()
}

/// Two-row table: relative sum-rate and relative runtime of DL-PA against
/// PSO-PA, one column per user count.
pub fn users_table_csv(points: &[UsersPoint]) -> String {
    let mut out = String::from("metric");
    for p in points {
        let _ = write!(out, ",K={}", p.users);
    }
    out.push_str("\nsum_rate_relative_pct");
    for p in points {
        let _ = write!(out, ",{:.4}", p.test.relative_pct(Method::DlPa).unwrap_or(f64::NAN));
    }
    out.push_str("\nruntime_relative_pct");
    for p in points {
        let _ = write!(out, ",{:.4}", p.runtime.as_ref().map_or(f64::NAN, |r| 100.0 * r.ratio()));
    }
    out.push('\n');
    out
}

pub fn users_detail_csv(points: &[UsersPoint]) -> String {
    let mut out =
        String::from("users,rf_chains,test_samples,dl_pa_bps_hz,pso_pa_bps_hz,eq_pa_bps_hz,dl_relative_pct,eq_relative_pct\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.4},{:.4}",
            p.users,
            p.rf_chains,
            p.test.samples,
            p.test.dl.unwrap_or(f64::NAN),
            p.test.pso,
            p.test.eq,
            p.test.relative_pct(Method::DlPa).unwrap_or(f64::NAN),
            p.test.relative_pct(Method::EqPa).unwrap_or(f64::NAN)
        );
    }
    out
}
