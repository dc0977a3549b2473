//! Python bindings. Matrices cross the boundary as lists of rows.

use fedmoo::compression::{self, CompressorKind, CompressorSpec};
use fedmoo::config::{run_repeats, ExperimentConfig, ProblemConfig};
use fedmoo::metrics::{self, RoundRecord, StationarityMode};
use fedmoo::objectives::{GradOracleSpec, Problem as CoreProblem};
use fedmoo::tensor::{project_simplex, Matrix, SeededRng, SimplexPoint, StreamRole};
use fedmoo::weights::{self, PreferenceVector};
use fedmoo::FedMooError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;

fn err(e: FedMooError) -> PyErr {
    match e.root() {
        FedMooError::Io(_) | FedMooError::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    let json = obj.py().import("json")?;
    json.call_method1("dumps", (obj,))?.extract()
}

fn record_dict<'py>(py: Python<'py>, r: &RoundRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("round", r.round)?;
    d.set_item("losses", r.losses.clone())?;
    d.set_item("stationarity", r.stationarity)?;
    d.set_item("stationarity_at_w", r.stationarity_at_w)?;
    d.set_item("mu_r", r.mu_r)?;
    d.set_item("weights", r.weights.clone())?;
    d.set_item("upload_floats", r.upload_floats)?;
    d.set_item("download_floats", r.download_floats)?;
    d.set_item("sidechannel_floats", r.sidechannel_floats)?;
    d.set_item("cumulative_upload_floats", r.cumulative_upload_floats)?;
    Ok(d)
}

/// A synthetic federated problem built from a problem table
/// (`{"family": "quadratic", "dim": 10, ...}`).
#[pyclass(frozen)]
struct Problem {
    inner: Box<dyn CoreProblem>,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (spec, seed = 0, noise_std = 0.0))]
    fn new(spec: &Bound<'_, PyAny>, seed: u64, noise_std: f64) -> PyResult<Self> {
        let cfg: ProblemConfig =
            serde_json::from_str(&to_json(spec)?).map_err(|e| PyValueError::new_err(format!("problem spec: {e}")))?;
        let inner = cfg.build(GradOracleSpec::with_noise(noise_std), seed).map_err(err)?;
        Ok(Problem { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_tasks(&self) -> usize {
        self.inner.num_tasks()
    }

    #[getter]
    fn num_clients(&self) -> usize {
        self.inner.num_clients()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.inner.initial_point()
    }

    fn global_losses(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.global_losses(&x).map_err(err)
    }

    fn local_losses(&self, client: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.local_losses(client, &x).map_err(err)
    }

    /// Exact Jacobian of the global losses, `d` rows of `M` entries.
    fn global_jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.exact_global_jacobian(&x).map_err(err)?.to_rows())
    }

    #[pyo3(signature = (client, x, seed = 0))]
    fn local_stoch_jacobian(&self, client: usize, x: Vec<f64>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = SeededRng::for_role(seed, 0, StreamRole::ClientGrad, client as u64);
        Ok(self.inner.local_stoch_jacobian(client, &x, &mut rng).map_err(err)?.to_rows())
    }

    /// Min-norm stationarity at `x`, or `‖J w‖²` when `weights` is given.
    #[pyo3(signature = (x, weights = None))]
    fn stationarity(&self, x: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<f64> {
        let mode = match &weights {
            Some(w) => StationarityMode::AtWeights(w),
            None => StationarityMode::MgdaMin,
        };
        metrics::stationarity(self.inner.as_ref(), &x, mode).map_err(err)
    }
}

/// A full experiment config: TOML text, JSON text, or a dict with the same
/// layout.
#[pyclass(frozen)]
struct Experiment {
    config: ExperimentConfig,
}

#[pymethods]
impl Experiment {
    #[new]
    fn new(config: &Bound<'_, PyAny>) -> PyResult<Self> {
        let config = if let Ok(text) = config.extract::<String>() {
            if text.trim_start().starts_with('{') {
                ExperimentConfig::from_json_str(&text)
            } else {
                ExperimentConfig::from_toml_str(&text)
            }
        } else {
            ExperimentConfig::from_json_str(&to_json(config)?)
        }
        .map_err(err)?;
        Ok(Experiment { config })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Experiment { config: ExperimentConfig::load(&path).map_err(err)? })
    }

    #[getter]
    fn engine(&self) -> &'static str {
        self.config.run.engine.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn validate(&self) -> PyResult<()> {
        self.config.validate().map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        Ok(self.config.to_json().map_err(err)?.to_string())
    }

    /// Runs every repeat. Each entry holds `seed`, `records`, the final
    /// model `x` and weights `w`, and ledger totals.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let runs = py.detach(|| run_repeats(&self.config, |_, _| {})).map_err(err)?;
        let out = PyList::empty(py);
        for r in &runs {
            let d = PyDict::new(py);
            d.set_item("repeat", r.repeat)?;
            d.set_item("seed", r.seed)?;
            let recs = PyList::empty(py);
            for rec in &r.output.records {
                recs.append(record_dict(py, rec)?)?;
            }
            d.set_item("records", recs)?;
            d.set_item("x", r.output.x.clone())?;
            d.set_item("w", r.output.w.as_slice().to_vec())?;
            let t = r.output.ledger.totals();
            d.set_item("upload_floats", t.upload)?;
            d.set_item("download_floats", t.download)?;
            d.set_item("sidechannel_floats", t.sidechannel)?;
            out.append(d)?;
        }
        Ok(out)
    }
}

/// Min-norm convex combination of the columns of a `d x M` Jacobian.
/// Returns `(weights, norm)`.
#[pyfunction]
#[pyo3(signature = (jacobian, tol = 1e-12))]
fn mgda(jacobian: Vec<Vec<f64>>, tol: f64) -> PyResult<(Vec<f64>, f64)> {
    let r = weights::mgda_exact(&to_matrix(jacobian)?, tol).map_err(err)?;
    Ok((r.weights.into_vec(), r.norm))
}

#[pyfunction]
#[pyo3(signature = (gram, tol = 1e-12))]
fn mgda_from_gram(gram: Vec<Vec<f64>>, tol: f64) -> PyResult<(Vec<f64>, f64)> {
    let r = weights::mgda_from_gram(&to_matrix(gram)?, tol).map_err(err)?;
    Ok((r.weights.into_vec(), r.norm))
}

/// `k` projected gradient steps of size `beta` on `wᵀGw` from `w`.
#[pyfunction]
fn get_weights(w: Vec<f64>, gram: Vec<Vec<f64>>, beta: f64, k: usize) -> PyResult<Vec<f64>> {
    let w = SimplexPoint::new(w).map_err(err)?;
    Ok(weights::get_weights(&w, &to_matrix(gram)?, beta, k).map_err(err)?.into_vec())
}

#[pyfunction(name = "project_simplex")]
fn py_project_simplex(v: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(project_simplex(&v).map_err(err)?.into_vec())
}

/// Preference-guided weights. Returns a dict with `weights`, `mu`,
/// `balancing` and `branch`.
#[pyfunction]
#[pyo3(signature = (preference, losses, gram, eps = 0.01))]
fn preference_weights<'py>(
    py: Python<'py>,
    preference: Vec<f64>,
    losses: Vec<f64>,
    gram: Vec<Vec<f64>>,
    eps: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = PreferenceVector::new(preference).map_err(err)?;
    let sol = weights::get_preference_weights(&r, &losses, &to_matrix(gram)?, eps).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("weights", sol.weights.into_vec())?;
    d.set_item("mu", sol.state.mu)?;
    d.set_item("balancing", sol.balancing)?;
    d.set_item("branch", format!("{:?}", sol.branch))?;
    Ok(d)
}

/// Compresses and decompresses a `d x M` Jacobian. Returns the
/// reconstruction and the upload cost in floats.
#[pyfunction]
#[pyo3(signature = (jacobian, kind, budget, seed = 0))]
fn compress(jacobian: Vec<Vec<f64>>, kind: &str, budget: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let kind: CompressorKind = serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown compressor `{kind}`")))?;
    let spec = CompressorSpec::new(kind, budget);
    let mut rng = SeededRng::for_role(seed, 0, StreamRole::ClientCompress, 0);
    let c = compression::compress(&spec, &to_matrix(jacobian)?, &mut rng).map_err(err)?;
    let h = compression::decompress(&c).map_err(err)?;
    Ok((h.to_rows(), c.upload_cost_floats))
}

#[pyfunction]
fn nrmse(truth: Vec<Vec<f64>>, estimate: Vec<Vec<f64>>) -> PyResult<f64> {
    compression::nrmse(&to_matrix(truth)?, &to_matrix(estimate)?).map_err(err)
}

/// Mean signed relative gap of multi-task scores against single-task ones.
#[pyfunction]
fn delta_m(multi: Vec<f64>, single: Vec<f64>, higher_better: Vec<bool>) -> PyResult<f64> {
    metrics::delta_m(&multi, &single, &higher_better).map_err(err)
}

#[pymodule]
fn fedmoo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(mgda, m)?)?;
    m.add_function(wrap_pyfunction!(mgda_from_gram, m)?)?;
    m.add_function(wrap_pyfunction!(get_weights, m)?)?;
    m.add_function(wrap_pyfunction!(py_project_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(preference_weights, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(delta_m, m)?)?;
    Ok(())
}
