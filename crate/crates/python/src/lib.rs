//! Python bindings: data and model wrappers, the OWL fit, radius tuning,
//! I-projections, mixture model selection, bootstrap bands and verifiers.

// Keyword-heavy Python signatures map one-to-one onto Rust parameters.
#![allow(clippy::too_many_arguments)]

use owl_core::bench::os_bootstrap;
use owl_core::verify::{coarsened_likelihood_mc as mc, okl_bruteforce as bruteforce};
use owl_core::{
    AdmmConfig, CovarianceKind, KernelSpec, ModelParams, ModelSpec, OklResult, OwlConfig, OwlError, Penalty,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn err(e: OwlError) -> PyErr {
    match e {
        OwlError::Singular(_) | OwlError::IllConditioned { .. } | OwlError::FitFailed(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let l = PyList::empty(py);
            for x in a {
                l.append(to_py(py, x)?)?;
            }
            l.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn ser<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn okl_dict(py: Python<'_>, r: &OklResult) -> PyResult<Py<PyAny>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("weights", r.weights.as_slice().to_vec())?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("primal_residual", r.primal_residual)?;
    d.set_item("dual_residual", r.dual_residual)?;
    Ok(d.into_any().unbind())
}

/// Observations: one row of features per observation and an optional response.
#[pyclass(name = "Dataset", module = "owl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: owl_core::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, response=None))]
    fn new(rows: Vec<Vec<f64>>, response: Option<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: owl_core::Dataset::from_rows(&rows, response).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn response(&self) -> Option<Vec<f64>> {
        self.inner.response().map(<[f64]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Model family: `gaussian`, `linear`, `logistic`, `gaussian_mixture` or
/// `bernoulli_mixture`.
#[pyclass(name = "Model", module = "owl", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (family, k=1, covariance="spherical", ridge=0.0))]
    fn new(family: &str, k: usize, covariance: &str, ridge: f64) -> PyResult<Self> {
        let kind = match covariance {
            "spherical" => CovarianceKind::Spherical,
            "diagonal" => CovarianceKind::Diagonal,
            "full" => CovarianceKind::Full,
            other => return Err(PyValueError::new_err(format!("unknown covariance '{other}'"))),
        };
        let inner = match family {
            "gaussian" => ModelSpec::gaussian(),
            "linear" => ModelSpec::linear_regression(),
            "logistic" => ModelSpec::logistic_regression(ridge),
            "gaussian_mixture" => ModelSpec::gaussian_mixture(kind, k),
            "bernoulli_mixture" => ModelSpec::bernoulli_mixture(k),
            other => return Err(PyValueError::new_err(format!("unknown family '{other}'"))),
        };
        if !inner.family.is_mixture() && k != 1 {
            return Err(PyValueError::new_err("k applies to mixture families only"));
        }
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, k={})", self.inner.family, self.inner.k)
    }
}

/// Result of an OWL fit.
#[pyclass(name = "OwlFit", module = "owl", frozen)]
struct PyOwlFit {
    inner: owl_core::OwlFit,
    epsilon: f64,
}

#[pymethods]
impl PyOwlFit {
    /// Fitted parameters as nested dicts and lists.
    #[getter]
    fn params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        ser(py, &self.inner.params)
    }

    /// Flattened `(name, value)` pairs of the parameters.
    fn flat_params(&self) -> Vec<(String, f64)> {
        self.inner.params.flatten()
    }

    /// Weights on the simplex, one per observation.
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.as_slice().to_vec()
    }

    /// `n·w`; values below one mark down-weighted observations.
    #[getter]
    fn scaled_weights(&self) -> Vec<f64> {
        self.inner.weights.scaled()
    }

    #[getter]
    fn okl(&self) -> f64 {
        self.inner.okl.value
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// OKL after every alternating step.
    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.trace.okl_per_iter.clone()
    }

    #[getter]
    fn terminated_reason(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        ser(py, &self.inner.trace.terminated_reason)
    }

    #[getter]
    fn restart(&self) -> usize {
        self.inner.restart
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn __repr__(&self) -> String {
        format!("OwlFit(epsilon={}, okl={:.6})", self.epsilon, self.inner.okl.value)
    }
}

fn config(epsilon: f64, restarts: usize, seed: u64, max_iters: usize, bandwidth: Option<f64>) -> OwlConfig {
    OwlConfig {
        epsilon,
        restarts,
        seed,
        max_owl_iters: max_iters,
        kernel: bandwidth.map_or(KernelSpec::Indicator, |h| KernelSpec::Gaussian { bandwidth: h }),
        ..OwlConfig::default()
    }
}

/// Fits `model` to `data` inside a TV ball of radius `epsilon`. A
/// `bandwidth` switches to Gaussian-kernel smoothing of the data.
#[pyfunction]
#[pyo3(signature = (model, data, epsilon, *, restarts=10, seed=0, max_iters=100, bandwidth=None))]
fn owl_fit(
    py: Python<'_>,
    model: &PyModel,
    data: &PyDataset,
    epsilon: f64,
    restarts: usize,
    seed: u64,
    max_iters: usize,
    bandwidth: Option<f64>,
) -> PyResult<PyOwlFit> {
    let cfg = config(epsilon, restarts, seed, max_iters, bandwidth);
    let inner = py
        .detach(|| owl_core::owl_fit(&model.inner, &data.inner, &cfg, None))
        .map_err(err)?;
    Ok(PyOwlFit { inner, epsilon })
}

/// OKL of the fit's parameters re-scored at another radius.
#[pyfunction]
#[pyo3(signature = (model, fit, data, epsilon, bandwidth=None))]
fn okl_estimate(
    py: Python<'_>,
    model: &PyModel,
    fit: &PyOwlFit,
    data: &PyDataset,
    epsilon: f64,
    bandwidth: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let kernel = bandwidth.map_or(KernelSpec::Indicator, |h| KernelSpec::Gaussian { bandwidth: h });
    let r = owl_core::okl_estimate(&model.inner, &fit.inner.params, &data.inner, epsilon, &kernel).map_err(err)?;
    okl_dict(py, &r)
}

/// Minimal OKL over `grid` and the radius at the bend of the curve.
#[pyfunction]
#[pyo3(signature = (model, data, grid, *, restarts=10, seed=0, max_iters=100))]
fn tune_epsilon(
    py: Python<'_>,
    model: &PyModel,
    data: &PyDataset,
    grid: Vec<f64>,
    restarts: usize,
    seed: u64,
    max_iters: usize,
) -> PyResult<Py<PyAny>> {
    let cfg = config(0.0, restarts, seed, max_iters, None);
    let r = py
        .detach(|| owl_core::tune_epsilon(&model.inner, &data.inner, &grid, &cfg))
        .map_err(err)?;
    ser(py, &r)
}

/// Chooses the number of mixture components by the weighted AIC or BIC.
#[pyfunction]
#[pyo3(signature = (model, data, k_range, epsilon, penalty="bic", *, restarts=10, seed=0))]
fn select_components(
    py: Python<'_>,
    model: &PyModel,
    data: &PyDataset,
    k_range: Vec<usize>,
    epsilon: f64,
    penalty: &str,
    restarts: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let penalty = match penalty {
        "aic" => Penalty::Aic,
        "bic" => Penalty::Bic,
        other => return Err(PyValueError::new_err(format!("unknown penalty '{other}'"))),
    };
    let cfg = config(epsilon, restarts, seed, 100, None);
    let r = py
        .detach(|| owl_core::owl_selection_criterion(&model.inner, &data.inner, &k_range, epsilon, penalty, &cfg))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("chosen_k", r.chosen_k)?;
    d.set_item("values", r.values)?;
    d.set_item("warnings", r.warnings)?;
    Ok(d.into_any().unbind())
}

/// Minimizes `Σ w_i (ln w_i + ln counts_i − logp_i)` over the simplex
/// within TV `epsilon` of the empirical distribution.
#[pyfunction]
#[pyo3(signature = (logp, epsilon, counts=None))]
fn i_projection(py: Python<'_>, logp: Vec<f64>, epsilon: f64, counts: Option<Vec<u32>>) -> PyResult<Py<PyAny>> {
    let counts = counts.unwrap_or_else(|| vec![1; logp.len()]);
    let r = owl_core::i_projection(&logp, &counts, epsilon, &AdmmConfig::default()).map_err(err)?;
    okl_dict(py, &r)
}

/// I-projection with one likelihood factor per observation.
#[pyfunction]
fn i_projection_conditional(py: Python<'_>, loglik: Vec<f64>, epsilon: f64) -> PyResult<Py<PyAny>> {
    let r = owl_core::i_projection_conditional(&loglik, epsilon, &AdmmConfig::default()).map_err(err)?;
    okl_dict(py, &r)
}

/// Outlier-stratified bootstrap bands around an OWL fit.
#[pyfunction]
#[pyo3(signature = (model, data, epsilon, *, replicates=200, level=0.9, seed=0, restarts=10))]
fn bootstrap(
    py: Python<'_>,
    model: &PyModel,
    data: &PyDataset,
    epsilon: f64,
    replicates: usize,
    level: f64,
    seed: u64,
    restarts: usize,
) -> PyResult<Py<PyAny>> {
    let cfg = config(epsilon, restarts, seed, 100, None);
    let spec = model.inner;
    let bands = py
        .detach(|| {
            let fit = owl_core::owl_fit(&spec, &data.inner, &cfg, None)?;
            os_bootstrap(
                &data.inner,
                &fit.weights,
                |d| owl_core::owl_fit(&spec, d, &cfg, None).map(|f| f.params),
                replicates,
                level,
                seed,
            )
        })
        .map_err(err)?;
    ser(py, &bands)
}

/// Brute-force OKL between two distributions on at most five atoms.
#[pyfunction]
#[pyo3(signature = (p_hat, p_theta, epsilon, resolution=1e-3))]
fn okl_bruteforce(p_hat: Vec<f64>, p_theta: Vec<f64>, epsilon: f64, resolution: f64) -> PyResult<f64> {
    bruteforce(&p_hat, &p_theta, epsilon, resolution).map_err(err)
}

/// Monte-Carlo estimate of the normalized log coarsened likelihood.
#[pyfunction]
#[pyo3(signature = (p_theta, x_data, epsilon, reps=100_000, seed=0))]
fn coarsened_likelihood_mc(
    py: Python<'_>,
    p_theta: Vec<f64>,
    x_data: Vec<usize>,
    epsilon: f64,
    reps: u64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| mc(&p_theta, &x_data, epsilon, reps, seed)).map_err(err)?;
    ser(py, &r)
}

#[pyfunction]
fn log_spaced_grid(lo: f64, hi: f64, m: usize) -> PyResult<Vec<f64>> {
    owl_core::log_spaced_grid(lo, hi, m).map_err(err)
}

#[pyfunction]
fn uniform_grid(start: f64, stop: f64, step: f64) -> PyResult<Vec<f64>> {
    owl_core::uniform_grid(start, stop, step).map_err(err)
}

/// Log-likelihood of every observation under parameters given as a dict
/// in the layout of `OwlFit.params`.
#[pyfunction]
fn log_likelihoods(model: &PyModel, params: &Bound<'_, PyAny>, data: &PyDataset) -> PyResult<Vec<f64>> {
    let json = params.py().import("json")?.call_method1("dumps", (params,))?;
    let params: ModelParams =
        serde_json::from_str(json.extract::<&str>()?).map_err(|e| PyValueError::new_err(e.to_string()))?;
    owl_core::density::log_likelihoods(&model.inner, &params, &data.inner).map_err(err)
}

#[pymodule]
fn owl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", owl_core::VERSION)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyOwlFit>()?;
    m.add_function(wrap_pyfunction!(owl_fit, m)?)?;
    m.add_function(wrap_pyfunction!(okl_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(tune_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(select_components, m)?)?;
    m.add_function(wrap_pyfunction!(i_projection, m)?)?;
    m.add_function(wrap_pyfunction!(i_projection_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(okl_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(coarsened_likelihood_mc, m)?)?;
    m.add_function(wrap_pyfunction!(log_spaced_grid, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_grid, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihoods, m)?)?;
    Ok(())
}
