//! Python bindings for `subdiv`.
//!
//! Reports and certificates are returned as plain dicts with the same keys as
//! the CLI's JSON output.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use subdiv::catalog;
use subdiv::mask::{Mask, DEFAULT_TOL};
use subdiv::operator::{self, SearchParams};
use subdiv::refine::{self, delta_padding, RefinementState};
use subdiv::scheme::{self, CertifyOptions, LevelRange, SchemeSpec};

create_exception!(subdiv_py, SubdivError, PyException, "Analysis failure; `args[0]` is the reason name.");

fn to_py(e: subdiv::Error) -> PyErr {
    SubdivError::new_err((e.reason(), e.to_string()))
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SubdivError::new_err(("Serialization", e.to_string())))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Mask", module = "subdiv_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyMask(Mask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(base: i64, coeffs: Vec<f64>) -> Self {
        PyMask(Mask::new(base, coeffs))
    }

    #[getter]
    fn base(&self) -> i64 {
        self.0.base()
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    fn symbol(&self, z: f64) -> f64 {
        self.0.symbol(z)
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn reproduces_constants(&self, tol: f64) -> bool {
        self.0.reproduces_constants(tol)
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn difference_mask(&self, tol: f64) -> PyResult<PyMask> {
        self.0
            .difference_mask(tol)
            .map(PyMask)
            .map_err(|e| to_py(e.into()))
    }

    /// Operator sup-norm for the given arity (2 for a single level).
    #[pyo3(signature = (arity = 2))]
    fn residue_norm(&self, arity: u64) -> f64 {
        self.0.residue_norm(arity)
    }

    fn residue_sums(&self, arity: u64) -> Vec<f64> {
        self.0.residue_sums(arity)
    }

    fn coeff_sup(&self) -> f64 {
        self.0.coeff_sup()
    }

    fn __eq__(&self, other: &PyMask) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Mask(base={}, coeffs={:?})", self.0.base(), self.0.coeffs())
    }
}

#[pyclass(name = "Scheme", module = "subdiv_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyScheme(SchemeSpec);

#[pymethods]
impl PyScheme {
    /// Catalog lookup: `Scheme.catalog("derham", gamma=2, alpha=1.5)`.
    #[staticmethod]
    #[pyo3(signature = (name, **params))]
    fn catalog(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut map = std::collections::BTreeMap::new();
        if let Some(params) = params {
            for (k, v) in params.iter() {
                map.insert(k.extract::<String>()?, v.extract::<f64>()?);
            }
        }
        catalog::lookup(name, &map).map(|e| PyScheme(e.spec)).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (mask, locality, name = "stationary"))]
    fn stationary(mask: &PyMask, locality: i64, name: &str) -> PyResult<Self> {
        SchemeSpec::stationary(name, mask.0.clone(), locality)
            .map(PyScheme)
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (masks, k0, locality, name = "table"))]
    fn table(masks: Vec<PyMask>, k0: u32, locality: i64, name: &str) -> PyResult<Self> {
        SchemeSpec::table(name, masks.into_iter().map(|m| m.0).collect(), k0, locality)
            .map(PyScheme)
            .map_err(to_py)
    }

    /// Scheme JSON in the same format as the CLI's scheme files.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SchemeSpec::from_json(text).map(PyScheme).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn k0(&self) -> u32 {
        self.0.k0()
    }

    #[getter]
    fn locality(&self) -> i64 {
        self.0.locality()
    }

    #[getter]
    fn is_stationary(&self) -> bool {
        self.0.is_stationary()
    }

    fn mask_at(&self, k: u32) -> PyResult<PyMask> {
        self.0.mask_at(k).map(PyMask).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Scheme({:?}, k0={}, N={})", self.0.name(), self.0.k0(), self.0.locality())
    }
}

/// Sup-norm of the product of level operators listed rightmost-first.
#[pyfunction]
fn product_norm(masks: Vec<PyMask>) -> f64 {
    let masks: Vec<Mask> = masks.into_iter().map(|m| m.0).collect();
    operator::product_norm(&masks)
}

#[pyfunction]
#[pyo3(signature = (scheme, n_max = 8, k_max = 32, window = 64, tol = DEFAULT_TOL))]
fn condition_a_search<'py>(
    py: Python<'py>,
    scheme: &PyScheme,
    n_max: u32,
    k_max: u32,
    window: u32,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = SearchParams {
        n_max,
        k_max,
        window,
        tol,
    };
    let w = py
        .detach(|| operator::condition_a_search(&scheme.0, &params))
        .map_err(to_py)?;
    to_dict(py, &w)
}

#[pyfunction]
#[pyo3(signature = (left, right, first, last, tol = DEFAULT_TOL))]
fn similarity_report<'py>(
    py: Python<'py>,
    left: &PyScheme,
    right: &PyScheme,
    first: u32,
    last: u32,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let range = LevelRange::new(first, last).map_err(to_py)?;
    let report = scheme::similarity_report(&left.0, &right.0, range, tol).map_err(to_py)?;
    to_dict(py, &report)
}

fn options(eta: Option<f64>, mu: Option<f64>, window: u32, n_max: u32) -> CertifyOptions {
    let mut opts = CertifyOptions {
        eta,
        mu,
        ..CertifyOptions::default()
    };
    opts.search.window = window;
    opts.search.n_max = n_max;
    opts
}

fn certificate(
    py: Python<'_>,
    s: &PyScheme,
    comparator: Option<&PyScheme>,
    opts: &CertifyOptions,
) -> PyResult<scheme::ConvergenceCertificate> {
    py.detach(|| match comparator {
        Some(c) => scheme::certify_theorem4(&s.0, &c.0, opts),
        None => scheme::certify_stationary(&s.0, opts),
    })
    .map_err(to_py)
}

/// Convergence certificate; a stationary `scheme` is certified on its own,
/// any other against a stationary `comparator`.
#[pyfunction]
#[pyo3(signature = (scheme, comparator = None, eta = None, mu = None, window = 64, n_max = 8))]
fn certify<'py>(
    py: Python<'py>,
    scheme: &PyScheme,
    comparator: Option<&PyScheme>,
    eta: Option<f64>,
    mu: Option<f64>,
    window: u32,
    n_max: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let cert = certificate(py, scheme, comparator, &options(eta, mu, window, n_max))?;
    to_dict(py, &cert)
}

/// Decay table from `δ` at the scheme's first level. With `certified=True`
/// the certified bounds are evaluated alongside.
#[pyfunction]
#[pyo3(signature = (scheme, steps = 12, comparator = None, certified = false))]
fn decay_report<'py>(
    py: Python<'py>,
    scheme: &PyScheme,
    steps: u32,
    comparator: Option<&PyScheme>,
    certified: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cert = if certified {
        Some(certificate(py, scheme, comparator, &CertifyOptions::default())?)
    } else {
        None
    };
    let f0 = RefinementState::delta(scheme.0.k0(), delta_padding(scheme.0.locality()));
    let report = refine::decay_report(&scheme.0, &f0, steps, cert.as_ref()).map_err(to_py)?;
    to_dict(py, &report)
}

/// `(x, value)` samples at `level` from `δ` (or `data` starting at index 0)
/// at the scheme's first level.
#[pyfunction]
#[pyo3(signature = (scheme, level, data = None))]
fn limit_sample(scheme: &PyScheme, level: u32, data: Option<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
    let k0 = scheme.0.k0();
    let f0 = match data {
        Some(values) => RefinementState::new(k0, subdiv::Window::new(0, values)),
        None => RefinementState::delta(k0, delta_padding(scheme.0.locality())),
    };
    refine::limit_sample(&scheme.0, &f0, level, None)
        .map(|s| s.points)
        .map_err(to_py)
}

#[pymodule]
fn subdiv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SubdivError", m.py().get_type::<SubdivError>())?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyScheme>()?;
    m.add_function(wrap_pyfunction!(product_norm, m)?)?;
    m.add_function(wrap_pyfunction!(condition_a_search, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_report, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(decay_report, m)?)?;
    m.add_function(wrap_pyfunction!(limit_sample, m)?)?;
    Ok(())
}
