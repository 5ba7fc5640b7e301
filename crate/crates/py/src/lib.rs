//! Python bindings. Results come back as plain dicts and lists; states as
//! `DensityMatrix` objects.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde_json::Value;

use ces_core::bell::{analytic_chsh, max_chsh_from_state, ChshAngles};
use ces_core::config::{defaults, from_overrides, ExperimentConfig};
use ces_core::detection::detected_state as detect;
use ces_core::fit::{fit_lifetime as fit, FitPoint, SeriesKind};
use ces_core::io::{read_tomography, BellJson, MatrixJson};
use ces_core::linalg::{c, trace_distance, CMatrix};
use ces_core::measures;
use ces_core::pipeline::{analyze_dataset, run_bell as bell, run_pipeline as pipeline, run_rates, run_tomo, Method, Mode, RunOptions};
use ces_core::protocol::{final_state as source_state, singlet};
use ces_core::{ErrorKind, Result as CoreResult};

create_exception!(ces, CesError, PyException);
create_exception!(ces, ConfigError, CesError);
create_exception!(ces, DataError, CesError);
create_exception!(ces, ConvergenceError, CesError);

fn py_err(e: ces_core::Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => ConfigError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::NonConvergence => ConvergenceError::new_err(msg),
    }
}

fn ok<T>(r: CoreResult<T>) -> PyResult<T> {
    r.map_err(py_err)
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| DataError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Defaults overlaid with `overrides`, a dict shaped like the config file.
fn config(py: Python<'_>, overrides: Option<&Bound<'_, PyAny>>) -> PyResult<ExperimentConfig> {
    let Some(obj) = overrides else {
        return ok(defaults());
    };
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    let v: Value = serde_json::from_str(&text).map_err(|e| ConfigError::new_err(e.to_string()))?;
    ok(from_overrides(&v))
}

fn method(name: &str) -> PyResult<Method> {
    match name {
        "mle" => Ok(Method::Mle),
        "linear" => Ok(Method::Linear),
        other => Err(ConfigError::new_err(format!("method must be 'mle' or 'linear', got '{other}'"))),
    }
}

/// Two-qubit density matrix, photon 1 ⊗ photon 2, basis σ⁺/σ⁻.
#[pyclass(name = "DensityMatrix", module = "ces", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensity(ces_core::DensityMatrix);

#[pymethods]
impl PyDensity {
    /// From nested lists of real and imaginary parts.
    #[new]
    #[pyo3(signature = (re, im=None))]
    fn new(re: Vec<Vec<f64>>, im: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let d = re.len();
        let im = im.unwrap_or_else(|| vec![vec![0.0; d]; d]);
        if re.iter().chain(&im).any(|row| row.len() != d) || im.len() != d {
            return Err(DataError::new_err("re and im must be square and of equal size"));
        }
        let entries = re.iter().flatten().zip(im.iter().flatten()).map(|(&r, &i)| c(r, i)).collect();
        let m = ok(CMatrix::from_row_major(entries))?;
        Ok(Self(ok(ces_core::DensityMatrix::new(m))?))
    }

    #[staticmethod]
    fn singlet() -> Self {
        Self(singlet())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `(re, im)` as nested lists.
    fn to_lists(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let j = MatrixJson::from_matrix(self.0.matrix());
        (j.re.chunks(j.dim).map(<[f64]>::to_vec).collect(), j.im.chunks(j.dim).map(<[f64]>::to_vec).collect())
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues()
    }

    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn fidelity_singlet(&self) -> PyResult<f64> {
        ok(measures::fidelity_singlet(&self.0))
    }

    fn concurrence(&self) -> PyResult<f64> {
        ok(measures::concurrence(&self.0))
    }

    fn negativity(&self) -> PyResult<f64> {
        ok(measures::negativity(&self.0))
    }

    fn fidelity(&self, other: &PyDensity) -> PyResult<f64> {
        ok(measures::state_fidelity(&self.0, &other.0))
    }

    fn trace_distance(&self, other: &PyDensity) -> f64 {
        trace_distance(self.0.matrix(), other.0.matrix())
    }

    /// All entanglement measures as a dict.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &ok(measures::report(&self.0))?)
    }

    /// Largest CHSH value over all analyzer directions.
    fn max_chsh(&self) -> PyResult<f64> {
        Ok(ok(max_chsh_from_state(&self.0))?.s_max)
    }

    /// `(S, [E(α,β), E(α,β′), E(α′,β), E(α′,β′)])` for linear analyzers at the given angles (degrees).
    fn chsh(&self, alpha: f64, alpha_p: f64, beta: f64, beta_p: f64) -> PyResult<(f64, Vec<f64>)> {
        let r = ok(analytic_chsh(&self.0, &ChshAngles::new(alpha, alpha_p, beta, beta_p)))?;
        Ok((r.s_value, r.e_values.to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("DensityMatrix(dim={}, purity={:.6})", self.0.dim(), self.0.purity())
    }
}

/// Configuration after applying `overrides` to the defaults.
#[pyfunction]
#[pyo3(signature = (overrides=None))]
fn load_config<'py>(py: Python<'py>, overrides: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &config(py, overrides)?)
}

/// Photon-photon state after storage time `dt_us`, before detection.
#[pyfunction]
#[pyo3(signature = (dt_us, config=None))]
fn final_state(py: Python<'_>, dt_us: f64, config: Option<&Bound<'_, PyAny>>) -> PyResult<PyDensity> {
    let cfg = self::config(py, config)?;
    Ok(PyDensity(ok(source_state(&cfg.noise, dt_us))?))
}

/// Effective state behind the configured detectors.
#[pyfunction]
#[pyo3(signature = (dt_us, config=None))]
fn detected_state(py: Python<'_>, dt_us: f64, config: Option<&Bound<'_, PyAny>>) -> PyResult<PyDensity> {
    let cfg = self::config(py, config)?;
    let rho = ok(source_state(&cfg.noise, dt_us))?;
    Ok(PyDensity(ok(detect(&rho, &cfg.detector))?))
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn rates<'py>(py: Python<'py>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(py, config)?;
    serialize(py, &ok(run_rates(&cfg))?)
}

/// Monte-Carlo CHSH experiment; both photon-routing sets plus analytic values.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_bell<'py>(py: Python<'py>, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(py, config)?;
    let run = py.detach(|| bell(&cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("results", serialize(py, &run.results.iter().map(BellJson::from).collect::<Vec<_>>())?)?;
    d.set_item("analytic", serialize(py, &run.analytic.iter().map(BellJson::from).collect::<Vec<_>>())?)?;
    Ok(d.into_any())
}

fn tomo_dict<'py>(
    py: Python<'py>,
    result: &ces_core::tomography::ReconstructionResult,
    metrics: &measures::EntanglementReport,
    projected: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    // linear inversion can leave small negative eigenvalues
    let estimate = ok(ces_core::tomography::project_to_physical(&result.estimate))?;
    d.set_item("state", PyDensity(estimate))?;
    d.set_item("converged", result.converged)?;
    d.set_item("iterations", result.iterations)?;
    d.set_item("log_likelihood", result.log_likelihood)?;
    d.set_item("metrics", serialize(py, metrics)?)?;
    d.set_item("metrics_from_projection", projected)?;
    Ok(d)
}

/// Simulated tomography at the configured storage time and its reconstruction.
#[pyfunction]
#[pyo3(signature = (config=None, method="mle", bootstrap=None))]
fn run_tomography<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyAny>>,
    method: &str,
    bootstrap: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(py, config)?;
    let opts = RunOptions { method: self::method(method)?, bootstrap };
    let run = py.detach(|| run_tomo(&cfg, &opts)).map_err(py_err)?;
    let d = tomo_dict(py, &run.result, &run.report, run.projected)?;
    d.set_item("expected_metrics", serialize(py, &run.expected)?)?;
    d.set_item("total_counts", run.dataset.total_counts())?;
    d.set_item("bootstrap", serialize(py, &run.bootstrap)?)?;
    Ok(d.into_any())
}

/// Reconstruction of a tomography CSV file.
#[pyfunction]
#[pyo3(signature = (path, method="mle"))]
fn reconstruct<'py>(py: Python<'py>, path: PathBuf, method: &str) -> PyResult<Bound<'py, PyAny>> {
    let ds = ok(read_tomography(&path))?;
    let m = self::method(method)?;
    let (result, metrics, projected) = py.detach(|| analyze_dataset(&ds, m)).map_err(py_err)?;
    Ok(tomo_dict(py, &result, &metrics, projected)?.into_any())
}

/// Gaussian decay fit `N(Δt) = N0·exp(−(Δt/τ)²)`. `kind` is "N" for
/// negativity or "EN" for log-negativity values.
#[pyfunction]
#[pyo3(signature = (dt_us, values, kind="EN", sigma=None))]
fn fit_lifetime<'py>(
    py: Python<'py>,
    dt_us: Vec<f64>,
    values: Vec<f64>,
    kind: &str,
    sigma: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = match kind {
        "N" => SeriesKind::N,
        "EN" => SeriesKind::EN,
        other => return Err(DataError::new_err(format!("kind must be 'N' or 'EN', got '{other}'"))),
    };
    if values.len() != dt_us.len() || sigma.as_ref().is_some_and(|s| s.len() != dt_us.len()) {
        return Err(DataError::new_err("dt_us, values and sigma must have equal length"));
    }
    let points: Vec<FitPoint> = dt_us
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(i, (&dt, &value))| FitPoint { dt_us: dt, value, kind, sigma: sigma.as_ref().map(|s| s[i]) })
        .collect();
    serialize(py, &ok(fit(&points))?)
}

/// Runs a pipeline mode ("simulate", "bell", "tomo", "sweep", "rates") and
/// writes its outputs under `out_dir`; returns the manifest.
#[pyfunction]
#[pyo3(signature = (mode, out_dir, config=None, method="mle", bootstrap=None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    mode: &str,
    out_dir: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
    method: &str,
    bootstrap: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: Mode = serde_json::from_value(Value::String(mode.to_string()))
        .map_err(|_| ConfigError::new_err(format!("unknown mode '{mode}'")))?;
    let cfg = self::config(py, config)?;
    let opts = RunOptions { method: self::method(method)?, bootstrap };
    let manifest = py.detach(|| pipeline(&cfg, mode, &out_dir, &opts)).map_err(py_err)?;
    serialize(py, &manifest)
}

#[pymodule]
fn ces(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CesError", py.get_type::<CesError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("ConvergenceError", py.get_type::<ConvergenceError>())?;
    m.add_class::<PyDensity>()?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(final_state, m)?)?;
    m.add_function(wrap_pyfunction!(detected_state, m)?)?;
    m.add_function(wrap_pyfunction!(rates, m)?)?;
    m.add_function(wrap_pyfunction!(run_bell, m)?)?;
    m.add_function(wrap_pyfunction!(run_tomography, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lifetime, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
