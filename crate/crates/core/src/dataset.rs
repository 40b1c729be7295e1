//! Labeled datasets: generation, persistence, splitting.
//!
//! File layout, little-endian:
//!
//! ```text
//! magic         8 bytes  "DLPA-DS\0"
//! version       u32
//! users         u32      K
//! rf_chains     u32      N_RF
//! input_size    u32      L₀ = (4·N_RF + 2)·K
//! count         u64      S
//! fingerprint   u64      scenario fingerprint
//! base_seed     u64
//! records       S × { features L₀ × f64, scaling 4 × f64, label K × f64,
//!                     p_opt K × f64, fitness f64, seed u64 }
//! crc32         u32      over every preceding byte
//! ```
//!
//! A human-readable key/value sidecar (`<file>.meta`) echoes the scenario
//! and PSO settings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{Decoder, Encoder};
use crate::channel::sample_realization;
use crate::error::{Error, Result};
use crate::metrics::LinkGains;
use crate::net::features::{build_features, input_size, scale_labels, FeatureVector};
use crate::precoding::{AbHpDesign, HybridPrecoder};
use crate::pso::{pso_optimize, PsoConfig};
use crate::scenario::Scenario;

pub const DATASET_MAGIC: &[u8; 8] = b"DLPA-DS\0";
pub const DATASET_VERSION: u32 = 1;
const HEADER_BYTES: usize = 8 + 4 * 4 + 8 * 3;

/// Lower bound on a scaled label. PSO may switch a user off entirely; the
/// label keeps a vanishing but positive share so that labels stay in (0, 1].
pub const LABEL_FLOOR: f64 = 1e-12;

/// Offset between training and test seed ranges.
pub const TEST_SEED_OFFSET: u64 = 1_000_000_000;

/// Samples labeled between progress callbacks.
const PROGRESS_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub num_users: usize,
    pub num_rf_chains: usize,
    pub input_size: usize,
    pub count: u64,
    pub fingerprint: u64,
    pub base_seed: u64,
}

impl DatasetHeader {
    fn record_bytes(&self) -> usize {
        8 * (self.input_size + 4 + 2 * self.num_users + 2)
    }

    fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_rf_chains < self.num_users {
            return Err(Error::format(format!(
                "invalid shape: {} users, {} RF chains",
                self.num_users, self.num_rf_chains
            )));
        }
        if self.input_size != input_size(self.num_rf_chains, self.num_users) {
            return Err(Error::format(format!(
                "input size {} does not match {} users and {} RF chains",
                self.input_size, self.num_users, self.num_rf_chains
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// Scaled optimal powers, maximum exactly 1.
    pub label: Vec<f64>,
    /// PSO powers in milliwatts.
    pub p_opt: Vec<f64>,
    /// PSO sum-rate in bps/Hz.
    pub fitness: f64,
    pub seed: u64,
}

impl LabeledSample {
    pub fn validate(&self, header: &DatasetHeader) -> Result<()> {
        let fail = |what: String| Err(Error::Validation(format!("sample seed {}: {what}", self.seed)));
        if self.features.len() != header.input_size {
            return fail(format!("{} features, expected {}", self.features.len(), header.input_size));
        }
        if self.label.len() != header.num_users || self.p_opt.len() != header.num_users {
            return fail("label width does not match the user count".into());
        }
        if self.features.values.iter().any(|v| !(v.abs() <= 1.0)) {
            return fail("feature outside [-1, 1]".into());
        }
        if self.label.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return fail("label outside (0, 1]".into());
        }
        if self.label.iter().copied().fold(f64::NEG_INFINITY, f64::max) != 1.0 {
            return fail("label maximum is not 1".into());
        }
        if self.p_opt.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || !self.fitness.is_finite() {
            return fail("non-finite or negative PSO result".into());
        }
        Ok(())
    }
}

/// Scaled label of a PSO power vector, floored at [`LABEL_FLOOR`].
pub fn label_from_powers(p_opt: &[f64]) -> Result<Vec<f64>> {
    Ok(scale_labels(p_opt)?.into_iter().map(|l| l.max(LABEL_FLOOR)).collect())
}

/// Derives the PSO seed of a sample from its realization seed.
pub fn pso_seed(realization_seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = realization_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the realization at 0-based `index` of a dataset.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    base_seed.wrapping_add(index + 1)
}

/// Precoder and link gains of the realization drawn from `seed`.
pub fn realize(design: &AbHpDesign, scenario: &Scenario, seed: u64) -> Result<(HybridPrecoder, LinkGains)> {
    let realization = sample_realization(scenario, seed)?;
    let precoder = design.precode(&realization)?;
    let gains = LinkGains::from_precoder(&precoder);
    Ok((precoder, gains))
}

/// Draws one realization, precodes it, and labels it with PSO.
pub fn label_sample(design: &AbHpDesign, scenario: &Scenario, pso: &PsoConfig, seed: u64) -> Result<LabeledSample> {
    let (precoder, gains) = realize(design, scenario, seed)?;
    let features = build_features(precoder.effective.view(), precoder.bb.view())?;
    let cfg = pso.with_seed(pso_seed(seed));
    let result = pso_optimize(&gains, design.noise_power_mw, design.total_power_mw, &cfg)?;
    let alloc = result.allocation(&gains, design.total_power_mw)?;
    let label = label_from_powers(&alloc.powers_mw)?;
    Ok(LabeledSample {
        features,
        label,
        p_opt: alloc.powers_mw,
        fitness: result.best_fitness,
        seed,
    })
}

/// Runs `f` on a pool of `workers` threads; 0 selects one per core.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Reports `(completed, total)` sample counts.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn empty(scenario: &Scenario, design: &AbHpDesign, base_seed: u64) -> Self {
        let k = scenario.num_users();
        let n_rf = design.num_rf_chains();
        Self {
            header: DatasetHeader {
                num_users: k,
                num_rf_chains: n_rf,
                input_size: input_size(n_rf, k),
                count: 0,
                fingerprint: scenario.fingerprint(),
                base_seed,
            },
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Labels samples until the dataset holds `target` of them. Sample `i`
    /// always uses seed `base_seed + i + 1`, so extending an interrupted run
    /// yields the same dataset as an uninterrupted one.
    pub fn extend_to(
        &mut self,
        scenario: &Scenario,
        design: &AbHpDesign,
        pso: &PsoConfig,
        target: usize,
        workers: usize,
        progress: Option<Progress<'_>>,
    ) -> Result<()> {
        self.check_shape(scenario, design)?;
        while self.samples.len() < target {
            let start = self.samples.len();
            let end = (start + PROGRESS_CHUNK * workers.max(1)).min(target);
            let base = self.header.base_seed;
            let batch: Vec<LabeledSample> = with_workers(workers, || {
                (start..end)
                    .into_par_iter()
                    .map(|i| label_sample(design, scenario, pso, sample_seed(base, i as u64)))
                    .collect::<Result<Vec<_>>>()
            })??;
            self.samples.extend(batch);
            self.header.count = self.samples.len() as u64;
            if let Some(report) = progress {
                report(self.samples.len(), target);
            }
        }
        Ok(())
    }

    fn check_shape(&self, scenario: &Scenario, design: &AbHpDesign) -> Result<()> {
        if self.header.fingerprint != scenario.fingerprint()
            || self.header.num_users != scenario.num_users()
            || self.header.num_rf_chains != design.num_rf_chains()
        {
            return Err(Error::Validation(
                "dataset was generated for a different scenario; refusing to extend it".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.header.count != self.samples.len() as u64 {
            return Err(Error::Validation(format!(
                "header announces {} samples, found {}",
                self.header.count,
                self.samples.len()
            )));
        }
        self.samples.iter().try_for_each(|s| s.validate(&self.header))
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples: Vec<_> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Dataset {
            header: DatasetHeader {
                count: samples.len() as u64,
                ..self.header
            },
            samples,
        }
    }

    /// `S × L₀` feature matrix.
    pub fn features(&self) -> Array2<f64> {
        let width = self.header.input_size;
        Array2::from_shape_fn((self.len(), width), |(i, j)| self.samples[i].features.values[j])
    }

    /// `S × K` label matrix.
    pub fn labels(&self) -> Array2<f64> {
        let k = self.header.num_users;
        Array2::from_shape_fn((self.len(), k), |(i, j)| self.samples[i].label[j])
    }

    /// Warning text when the dataset was generated for another scenario.
    pub fn scenario_warning(&self, scenario: &Scenario) -> Option<String> {
        let expected = scenario.fingerprint();
        (self.header.fingerprint != expected).then(|| {
            format!(
                "dataset fingerprint {:016x} differs from the active scenario {:016x}",
                self.header.fingerprint, expected
            )
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut enc = Encoder::new();
        enc.bytes(DATASET_MAGIC);
        enc.u32(DATASET_VERSION);
        enc.u32(h.num_users as u32);
        enc.u32(h.num_rf_chains as u32);
        enc.u32(h.input_size as u32);
        enc.u64(self.samples.len() as u64);
        enc.u64(h.fingerprint);
        enc.u64(h.base_seed);
        for s in &self.samples {
            enc.f64s(&s.features.values);
            enc.f64s(&s.features.scaling);
            enc.f64s(&s.label);
            enc.f64s(&s.p_opt);
            enc.f64(s.fitness);
            enc.u64(s.seed);
        }
        enc.finish()
    }

    /// Parses and revalidates a dataset. The header is checked before the
    /// payload; any truncation, checksum or version problem is an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        let expected = (header.count as usize)
            .checked_mul(header.record_bytes())
            .and_then(|n| n.checked_add(HEADER_BYTES + 4))
            .ok_or_else(|| Error::format("dataset size overflows"))?;
        if bytes.len() != expected {
            return Err(Error::format(format!(
                "dataset holds {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let mut dec = Decoder::checked(bytes, "dataset")?;
        dec.take(HEADER_BYTES)?;
        let (l0, k) = (header.input_size, header.num_users);
        let samples = (0..header.count)
            .map(|_| {
                let values = dec.f64s(l0)?;
                let scaling = dec.f64s(4)?;
                Ok(LabeledSample {
                    features: FeatureVector {
                        values,
                        scaling: [scaling[0], scaling[1], scaling[2], scaling[3]],
                    },
                    label: dec.f64s(k)?,
                    p_opt: dec.f64s(k)?,
                    fitness: dec.f64()?,
                    seed: dec.u64()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        dec.expect_end()?;
        let ds = Dataset { header, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads a dataset and checks it against `scenario`. A differing
    /// fingerprint is returned as a warning; a differing shape is an error.
    pub fn load_for(path: impl AsRef<Path>, scenario: &Scenario) -> Result<(Self, Option<String>)> {
        let ds = Self::load(path)?;
        if ds.header.num_users != scenario.num_users() {
            return Err(Error::Validation(format!(
                "dataset has {} users, scenario has {}",
                ds.header.num_users,
                scenario.num_users()
            )));
        }
        let warning = ds.scenario_warning(scenario);
        Ok((ds, warning))
    }
}

/// Reads and checks the fixed-size header only.
pub fn read_header(bytes: &[u8]) -> Result<DatasetHeader> {
    let mut dec = Decoder::unchecked(bytes, "dataset");
    if dec.take(8)? != DATASET_MAGIC {
        return Err(Error::format("not a dataset file (bad magic)"));
    }
    let version = dec.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            supported: DATASET_VERSION,
        });
    }
    let header = DatasetHeader {
        num_users: dec.u32()? as usize,
        num_rf_chains: dec.u32()? as usize,
        input_size: dec.u32()? as usize,
        count: dec.u64()?,
        fingerprint: dec.u64()?,
        base_seed: dec.u64()?,
    };
    header.validate()?;
    Ok(header)
}

/// Shuffles `0..n` with `seed` and cuts it at `round(n·train_fraction)`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie strictly between 0 and 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_fraction).round() as usize;
    let val = order.split_off(cut);
    Ok((order, val))
}

/// Seeded train/validation partition of a dataset.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(dataset.len(), train_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Metadata echoed next to a dataset file.
pub fn sidecar_text(dataset: &Dataset, scenario: &Scenario, pso: &PsoConfig, elapsed_s: f64, workers: usize) -> String {
    let h = &dataset.header;
    let mut out = String::new();
    let _ = writeln!(out, "# dataset metadata");
    let _ = writeln!(out, "format_version = {DATASET_VERSION}");
    let _ = writeln!(out, "samples = {}", dataset.len());
    let _ = writeln!(out, "users = {}", h.num_users);
    let _ = writeln!(out, "rf_chains = {}", h.num_rf_chains);
    let _ = writeln!(out, "input_size = {}", h.input_size);
    let _ = writeln!(out, "fingerprint = {:016x}", h.fingerprint);
    let _ = writeln!(out, "base_seed = {}", h.base_seed);
    let _ = writeln!(out, "label_floor = {LABEL_FLOOR:?}");
    let _ = writeln!(out, "workers = {workers}");
    let _ = writeln!(out, "generation_seconds = {elapsed_s:.3}");
    let _ = writeln!(out, "pso.swarm_size = {}", pso.swarm_size);
    let _ = writeln!(out, "pso.max_iters = {}", pso.max_iters);
    let _ = writeln!(out, "pso.inertia_start = {:?}", pso.inertia_start);
    let _ = writeln!(out, "pso.inertia_end = {:?}", pso.inertia_end);
    let _ = writeln!(out, "pso.cognitive_c1 = {:?}", pso.cognitive_c1);
    let _ = writeln!(out, "pso.social_c2 = {:?}", pso.social_c2);
    let _ = writeln!(out, "pso.velocity_clamp = {:?}", pso.velocity_clamp);
    let _ = writeln!(out, "pso.stall_iters = {}", pso.stall_iters);
    let _ = writeln!(out, "# scenario");
    for line in scenario.to_config_string().lines() {
        if !line.starts_with('#') && !line.trim().is_empty() {
            let _ = writeln!(out, "scenario.{}", line.trim());
        }
    }
    out
}

pub fn write_sidecar(
    path: &Path,
    dataset: &Dataset,
    scenario: &Scenario,
    pso: &PsoConfig,
    elapsed_s: f64,
    workers: usize,
) -> Result<()> {
    fs::write(sidecar_path(path), sidecar_text(dataset, scenario, pso, elapsed_s, workers))?;
    Ok(())
}
