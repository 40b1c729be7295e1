//! Python bindings. Matrices cross the boundary as nested lists.

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dlpa_core::dataset::{self, Dataset, TEST_SEED_OFFSET};
use dlpa_core::experiment;
use dlpa_core::net::{self, Checkpoint, LossKind, MlpModel, TrainConfig};
use dlpa_core::{AbHpDesign, Error, PsoConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format(_) | Error::Checksum { .. } | Error::Version { .. } => {
            PyIOError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for dlpa_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_matrix(data: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = data.first().map_or(0, Vec::len);
    if data.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = data.len();
    Array2::from_shape_vec((n, cols), data.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Simulation scenario: array geometry, user groups and link budget.
#[pyclass(name = "Scenario", module = "dlpa", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: dlpa_core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Microcell with a `side × side` array and `users` spread over `groups`.
    #[new]
    #[pyo3(signature = (side=16, groups=1, users=3))]
    fn new(side: usize, groups: usize, users: usize) -> PyResult<Self> {
        let inner = dlpa_core::Scenario::microcell(side, groups, users);
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dlpa_core::Scenario::from_config_str(text).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dlpa_core::Scenario::load(path).py()?,
        })
    }

    fn to_config(&self) -> String {
        self.inner.to_config_string()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_antennas(&self) -> usize {
        self.inner.geometry.m()
    }

    #[getter]
    fn noise_power_mw(&self) -> f64 {
        self.inner.noise_power_mw()
    }

    #[getter]
    fn total_power_mw(&self) -> f64 {
        self.inner.total_power_mw()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        format!("{:016x}", self.inner.fingerprint())
    }

    /// Copy of this scenario with `users` spread over the same groups.
    fn with_users(&self, users: usize) -> PyResult<Self> {
        Ok(Self {
            inner: experiment::with_user_count(&self.inner, users).py()?,
        })
    }

    /// User channels of one realization, `K` rows of `M` complex entries.
    fn channels(&self, seed: u64) -> PyResult<Vec<Vec<Complex64>>> {
        let r = dlpa_core::sample_realization(&self.inner, seed).py()?;
        Ok(rows(&r.channels))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(antennas={}, groups={}, users={})",
            self.inner.geometry.m(),
            self.inner.groups.len(),
            self.inner.num_users()
        )
    }
}

/// Per-realization link quantities after hybrid precoding.
#[pyclass(name = "Link", module = "dlpa", skip_from_py_object)]
struct PyLink {
    gains: dlpa_core::LinkGains,
    features: Vec<f64>,
    sigma2: f64,
    p_total: f64,
    #[pyo3(get)]
    seed: u64,
}

#[pymethods]
impl PyLink {
    #[getter]
    fn num_users(&self) -> usize {
        self.gains.num_users()
    }

    /// `|h_kᵀ F b_t|²` for every user pair.
    #[getter]
    fn gain_sq(&self) -> Vec<Vec<f64>> {
        rows(&self.gains.gain_sq)
    }

    /// Squared norm of every baseband column.
    #[getter]
    fn bb_gains(&self) -> Vec<f64> {
        self.gains.bb_gains.clone()
    }

    /// Scaled network input for this realization.
    #[getter]
    fn features(&self) -> Vec<f64> {
        self.features.clone()
    }

    /// Sum-rate in bps/Hz of the given per-user powers (mW).
    fn sum_rate(&self, powers_mw: Vec<f64>) -> PyResult<f64> {
        if powers_mw.len() != self.gains.num_users() {
            return Err(PyValueError::new_err("one power per user is required"));
        }
        Ok(self.gains.sum_rate(&powers_mw, self.sigma2))
    }

    /// Powers (mW) that use the full budget with the given relative weights.
    fn normalize(&self, weights: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dlpa_core::normalize_full_power(&weights, &self.gains.bb_gains, self.p_total)
            .py()?
            .powers_mw)
    }

    fn equal_power(&self) -> PyResult<Vec<f64>> {
        self.normalize(vec![1.0; self.gains.num_users()])
    }

    /// Runs the particle swarm search; returns `(powers_mw, sum_rate)`.
    #[pyo3(signature = (seed=0, swarm_size=50, max_iters=500))]
    fn pso(&self, seed: u64, swarm_size: usize, max_iters: usize) -> PyResult<(Vec<f64>, f64)> {
        let cfg = PsoConfig {
            swarm_size,
            max_iters,
            ..PsoConfig::default().with_seed(seed)
        };
        let res = dlpa_core::pso_optimize(&self.gains, self.sigma2, self.p_total, &cfg).py()?;
        let alloc = res.allocation(&self.gains, self.p_total).py()?;
        Ok((alloc.powers_mw, res.best_fitness))
    }
}

/// Analog beamformer of a scenario, reused across realizations.
#[pyclass(name = "Design", module = "dlpa", skip_from_py_object)]
struct PyDesign {
    scenario: dlpa_core::Scenario,
    inner: AbHpDesign,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(scenario: &PyScenario) -> PyResult<Self> {
        Ok(Self {
            scenario: scenario.inner.clone(),
            inner: AbHpDesign::for_scenario(&scenario.inner).py()?,
        })
    }

    #[getter]
    fn num_rf_chains(&self) -> usize {
        self.inner.num_rf_chains()
    }

    /// Analog precoder, `M` rows of `N_RF` complex entries.
    fn rf_matrix(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.rf.matrix)
    }

    /// Samples and precodes the realization with the given seed.
    fn realize(&self, seed: u64) -> PyResult<PyLink> {
        let (precoder, gains) = dataset::realize(&self.inner, &self.scenario, seed).py()?;
        let features = net::build_features(precoder.effective.view(), precoder.bb.view()).py()?;
        Ok(PyLink {
            gains,
            features: features.values.to_vec(),
            sigma2: self.inner.noise_power_mw,
            p_total: self.inner.total_power_mw,
            seed,
        })
    }
}

/// Labeled samples for network training.
#[pyclass(name = "Dataset", module = "dlpa", skip_from_py_object)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Dataset::load(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.header.num_users
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.header.input_size
    }

    #[getter]
    fn base_seed(&self) -> u64 {
        self.inner.header.base_seed
    }

    fn features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.features())
    }

    fn labels(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.labels())
    }

    fn seeds(&self) -> Vec<u64> {
        self.inner.samples.iter().map(|s| s.seed).collect()
    }
}

/// Trained fully connected network.
#[pyclass(name = "Model", module = "dlpa", skip_from_py_object)]
struct PyModel {
    checkpoint: Checkpoint,
    #[pyo3(get)]
    train_loss: Vec<f64>,
    #[pyo3(get)]
    val_loss: Vec<f64>,
}

#[pymethods]
impl PyModel {
    /// Untrained network with the given layer widths.
    #[new]
    #[pyo3(signature = (layer_sizes, seed=0))]
    fn new(layer_sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self::wrap(MlpModel::new(&layer_sizes, seed).py()?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            checkpoint: Checkpoint::load(path).py()?,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.checkpoint.save(path).py()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.checkpoint.model.layer_sizes()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.checkpoint.model.num_parameters()
    }

    /// Scaled powers in `(0, 1)` for each feature row.
    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_matrix(features)?;
        Ok(rows(&net::predict(&self.checkpoint.model, x.view()).py()?))
    }
}

impl PyModel {
    fn wrap(model: MlpModel) -> Self {
        Self {
            checkpoint: Checkpoint::new(model, None),
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        }
    }
}

/// Labels `size` realizations with the particle swarm search.
#[pyfunction]
#[pyo3(signature = (scenario, size, seed=1, test=false, workers=1))]
fn generate(py: Python<'_>, scenario: &PyScenario, size: usize, seed: u64, test: bool, workers: usize) -> PyResult<PyDataset> {
    let sc = scenario.inner.clone();
    let base = if test { seed + TEST_SEED_OFFSET } else { seed };
    let inner = py.detach(move || -> dlpa_core::Result<Dataset> {
        let design = AbHpDesign::for_scenario(&sc)?;
        experiment::generate(&sc, &design, &PsoConfig::default(), size, base, workers)
    });
    Ok(PyDataset { inner: inner.py()? })
}

/// Trains a network on an 80/20 split of `dataset`.
#[pyfunction]
#[pyo3(signature = (dataset, epochs=25, loss="mse", seed=1, hidden=None, batch_size=32, learning_rate=1e-3))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    epochs: usize,
    loss: &str,
    seed: u64,
    hidden: Option<Vec<usize>>,
    batch_size: usize,
    learning_rate: f64,
) -> PyResult<PyModel> {
    let loss: LossKind = loss.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs,
        loss,
        seed,
        batch_size,
        learning_rate,
        hidden: hidden.unwrap_or(defaults.hidden.clone()),
        ..defaults
    };
    let ds = &dataset.inner;
    let (outcome, _, _) = py.detach(|| experiment::train_on_dataset(ds, 0.8, &cfg)).py()?;
    Ok(PyModel {
        checkpoint: Checkpoint::new(outcome.model, Some(outcome.adam)),
        train_loss: outcome.history.train_loss,
        val_loss: outcome.history.val_loss,
    })
}

/// Mean sum-rates (bps/Hz) of every method on `dataset`.
#[pyfunction]
#[pyo3(signature = (scenario, dataset, model=None, workers=1))]
fn evaluate<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    dataset: &PyDataset,
    model: Option<&PyModel>,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = &scenario.inner;
    let ds = &dataset.inner;
    let m = model.map(|m| &m.checkpoint.model);
    let res = py
        .detach(|| -> dlpa_core::Result<_> {
            let design = AbHpDesign::for_scenario(sc)?;
            experiment::evaluate_split("eval", sc, &design, ds, m, workers)
        })
        .py()?;
    let out = PyDict::new(py);
    out.set_item("samples", res.samples)?;
    out.set_item("pso", res.pso)?;
    out.set_item("eq", res.eq)?;
    out.set_item("dl", res.dl)?;
    Ok(out)
}

#[pymodule]
fn dlpa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyLink>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
