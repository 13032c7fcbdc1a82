//! Python bindings: configs and presets, runs, tail fits, Kesten roots and
//! the post-hoc analyses. Structured results come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tailchain::analysis::{basin_stats_values, default_bandwidth, kde_1d, kde_1d_log, pca_project_rows};
use tailchain::cli_io::{
    execute, output_root, preset_names, preset_scaled, run_experiment, theory_report, ExperimentConfig,
    ExperimentOutput,
};
use tailchain::problems::scalar_objective_catalog;
use tailchain::tail_fit::{fit_tail as fit_tail_rs, select_tmin as select_tmin_rs, BootstrapOptions, TailFitOptions, TailFitReport};
use tailchain::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::UnknownName { .. } | Error::Dimension { .. } | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Round-trip a serializable value through JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// An experiment configuration.
#[pyclass(name = "Config", module = "tailchain_py")]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = ExperimentConfig::from_toml(text).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (name, scale = 1.0, seed = None))]
    fn preset(name: &str, scale: f64, seed: Option<u64>) -> PyResult<Self> {
        let inner = preset_scaled(name, scale, seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    #[getter]
    fn n_steps(&self) -> u64 {
        self.inner.chain.n_steps
    }

    #[setter]
    fn set_n_steps(&mut self, n: u64) {
        self.inner.chain.n_steps = n;
        self.inner.chain.burn_in = None;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.chain.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.chain.seed = seed;
    }

    #[getter]
    fn assumed(&self) -> Vec<String> {
        self.inner.assumed.clone()
    }

    /// Run in memory.
    fn execute(&self, py: Python<'_>) -> PyResult<RunOutput> {
        let cfg = self.inner.clone();
        let out = py.detach(move || execute(&cfg)).map_err(py_err)?;
        Ok(RunOutput { inner: out })
    }

    /// Run and write a bundle; returns `(bundle_path, report)`.
    #[pyo3(signature = (output_root = None))]
    fn run<'py>(&self, py: Python<'py>, output_root: Option<PathBuf>) -> PyResult<(String, Bound<'py, PyAny>)> {
        let root = output_root.unwrap_or_else(tailchain::cli_io::output_root);
        let cfg = self.inner.clone();
        let out = py.detach(move || run_experiment(&cfg, &root)).map_err(py_err)?;
        Ok((out.bundle.display().to_string(), to_py(py, &out.report)?))
    }

    /// Kesten roots and ergodicity diagnostic of the configured recurrence.
    fn theory<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.inner.clone();
        let r = py.detach(move || theory_report(&cfg)).map_err(py_err)?;
        to_py(py, &r)
    }

    fn __repr__(&self) -> String {
        format!("Config(name={:?}, fingerprint={})", self.inner.name, self.inner.fingerprint())
    }
}

/// Result of an in-memory run.
#[pyclass(module = "tailchain_py")]
struct RunOutput {
    inner: ExperimentOutput,
}

#[pymethods]
impl RunOutput {
    #[getter]
    fn status(&self) -> String {
        format!("{:?}", self.inner.report.status).to_lowercase()
    }

    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.report)
    }

    #[getter]
    fn n_chains(&self) -> usize {
        self.inner.traces.len()
    }

    /// Post-burn-in step norms of every chain, concatenated.
    fn step_norms(&self) -> Vec<f64> {
        self.inner.step_norms()
    }

    /// Recorded iterates of one chain, one list per row.
    #[pyo3(signature = (chain = 0))]
    fn iterates(&self, chain: usize) -> PyResult<Vec<Vec<f64>>> {
        let t = self
            .inner
            .traces
            .get(chain)
            .ok_or_else(|| PyValueError::new_err(format!("no chain {chain}")))?;
        Ok(t.iterates().map(<[f64]>::to_vec).collect())
    }

    /// Norms of the weight block of one chain's recorded iterates.
    #[pyo3(signature = (chain = 0))]
    fn weight_norms(&self, chain: usize) -> PyResult<Vec<f64>> {
        self.inner
            .traces
            .get(chain)
            .map(|t| t.weight_norms())
            .ok_or_else(|| PyValueError::new_err(format!("no chain {chain}")))
    }
}

/// A power-law tail fit.
#[pyclass(name = "TailFit", module = "tailchain_py")]
struct PyTailFit {
    inner: TailFitReport,
}

#[pymethods]
impl PyTailFit {
    #[getter]
    fn alpha_hat(&self) -> f64 {
        self.inner.alpha_hat
    }

    #[getter]
    fn beta_hat(&self) -> f64 {
        self.inner.beta_hat
    }

    #[getter]
    fn t_min(&self) -> f64 {
        self.inner.t_min
    }

    #[getter]
    fn ci95(&self) -> (f64, f64) {
        self.inner.ci95
    }

    #[getter]
    fn n_tail(&self) -> usize {
        self.inner.n_tail
    }

    #[getter]
    fn low_confidence(&self) -> bool {
        self.inner.low_confidence
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TailFit(alpha_hat={:.4}, ci95=({:.4}, {:.4}), n_tail={})",
            self.inner.alpha_hat, self.inner.ci95.0, self.inner.ci95.1, self.inner.n_tail
        )
    }
}

/// Fit `P(X > t) ~ t^-alpha` with automatic cutoff selection.
#[pyfunction]
#[pyo3(signature = (samples, asymptotic = false, n_boot = 1000, seed = 0))]
fn fit_tail(py: Python<'_>, samples: Vec<f64>, asymptotic: bool, n_boot: usize, seed: u64) -> PyResult<PyTailFit> {
    let mut opts = if asymptotic {
        TailFitOptions::asymptotic()
    } else {
        TailFitOptions::default()
    };
    opts.bootstrap = BootstrapOptions {
        n_boot,
        seed,
        ..opts.bootstrap
    };
    let inner = py.detach(move || fit_tail_rs(&samples, &opts)).map_err(py_err)?;
    Ok(PyTailFit { inner })
}

/// Cutoff selection only: `(t_min, alpha, n_tail, ks_distance)`.
#[pyfunction]
fn select_tmin(samples: Vec<f64>) -> PyResult<(f64, f64, usize, f64)> {
    let s = select_tmin_rs(&samples).map_err(py_err)?;
    Ok((s.t_min, s.alpha, s.n_tail, s.ks_distance))
}

/// Gaussian KDE on a regular grid: `(grid, density)`.
#[pyfunction]
#[pyo3(signature = (samples, bandwidth = None, grid_size = 512, log_scale = false))]
fn kde(samples: Vec<f64>, bandwidth: Option<f64>, grid_size: usize, log_scale: bool) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let est = if log_scale {
        kde_1d_log(&samples, grid_size)
    } else {
        let h = match bandwidth {
            Some(h) => h,
            None => default_bandwidth(&samples).map_err(py_err)?,
        };
        kde_1d(&samples, h, grid_size)
    }
    .map_err(py_err)?;
    Ok((est.grid, est.density))
}

/// Project rows on the requested 1-based principal components.
#[pyfunction]
fn pca<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, components: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let flat: Vec<f64> = rows.concat();
    let p = pca_project_rows(&flat, dim, &components).map_err(py_err)?;
    let k = p.component_indices.len();
    let scores: Vec<Vec<f64>> = (0..p.n_rows).map(|r| p.scores[r * k..(r + 1) * k].to_vec()).collect();
    let d = PyDict::new(py);
    d.set_item("components", p.component_indices)?;
    d.set_item("scores", scores)?;
    d.set_item("explained_variance_ratio", p.explained_variance_ratio)?;
    d.set_item("mean", p.mean)?;
    d.set_item("loadings", p.loadings)?;
    d.set_item("rank", p.rank)?;
    d.set_item("flags", p.flags)?;
    Ok(d)
}

/// Basin occupancy, hop count and near-critical mass of a scalar trajectory.
#[pyfunction]
#[pyo3(signature = (xs, objective, radius = tailchain::analysis::DEFAULT_RADIUS))]
fn basin_stats<'py>(py: Python<'py>, xs: Vec<f64>, objective: &str, radius: f64) -> PyResult<Bound<'py, PyAny>> {
    let obj = scalar_objective_catalog(objective).map_err(py_err)?;
    let r = basin_stats_values(&xs, &obj, radius).map_err(py_err)?;
    to_py(py, &r)
}

/// Names accepted by `Config.preset`.
#[pyfunction]
fn presets() -> Vec<String> {
    preset_names()
}

/// Output root used when `Config.run` gets none.
#[pyfunction]
fn default_output_root() -> String {
    output_root().display().to_string()
}

#[pymodule]
fn tailchain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<RunOutput>()?;
    m.add_class::<PyTailFit>()?;
    m.add_function(wrap_pyfunction!(fit_tail, m)?)?;
    m.add_function(wrap_pyfunction!(select_tmin, m)?)?;
    m.add_function(wrap_pyfunction!(kde, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(basin_stats, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(default_output_root, m)?)?;
    Ok(())
}
