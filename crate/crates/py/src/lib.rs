//! Python bindings. Results that are structs on the Rust side come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use iqswitch::bounds::{self, DriftParams};
use iqswitch::geometry;
use iqswitch::matching::{self, TieBreak};
use iqswitch::model::{self, Schedule};
use iqswitch::sim::config::ConfigFile;
use iqswitch::sim::{self, Diagnostics, SimConfig, SimError};
use iqswitch::{ArrivalMatrix, Matrix, QueueMatrix, RealMatrix};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    if e.is_invariant_violation() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        value_err(e)
    }
}

/// Builds a square matrix from nested rows.
pub fn square<T>(rows: Vec<Vec<T>>) -> Result<Matrix<T>, String> {
    let n = rows.len();
    Matrix::from_rows(rows).ok_or_else(|| format!("expected a square matrix with {n} rows"))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(value_err)?)
}

/// Traffic on the face of the capacity region at distance `epsilon`.
#[pyclass(name = "TrafficModel", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrafficModel {
    inner: model::TrafficModel,
}

#[pymethods]
impl PyTrafficModel {
    #[staticmethod]
    fn uniform_bernoulli(n: usize, epsilon: f64) -> PyResult<Self> {
        let inner = model::TrafficModel::uniform_bernoulli(n, epsilon).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// `nu` is the row-major list of `n * n` rates.
    #[staticmethod]
    fn bernoulli(n: usize, epsilon: f64, nu: Vec<f64>) -> PyResult<Self> {
        let inner = model::TrafficModel::bernoulli(n, epsilon, nu).map_err(value_err)?;
        model::validate_traffic(&inner).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn with_pmfs(n: usize, epsilon: f64, nu: Vec<f64>, pmfs: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = model::TrafficModel::with_pmfs(n, epsilon, nu, pmfs).map_err(value_err)?;
        model::validate_traffic(&inner).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parses the JSON configuration format used by the command line tool.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = ConfigFile::from_json(text)
            .and_then(|c| c.model())
            .map_err(sim_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn sigma_norm_sq(&self) -> f64 {
        self.inner.sigma_norm_sq()
    }

    #[getter]
    fn nu_min(&self) -> f64 {
        self.inner.nu_min()
    }

    #[getter]
    fn a_max(&self) -> u32 {
        self.inner.a_max()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(
            py,
            &model::validate_traffic(&self.inner).map_err(value_err)?,
        )
    }

    fn sample_arrivals(&self, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = iqswitch::streams::stream(seed, 0, 0);
        model::sample_arrivals(&self.inner, &mut rng).to_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrafficModel(n={}, epsilon={}, bernoulli={})",
            self.inner.n(),
            self.inner.epsilon(),
            self.inner.is_bernoulli()
        )
    }
}

type Rows<T> = Vec<Vec<T>>;

/// One slot of queue dynamics; returns `(q_next, unused)`.
#[pyfunction]
fn step(q: Rows<u64>, perm: Vec<usize>, a: Rows<u32>) -> PyResult<(Rows<u64>, Rows<u32>)> {
    let q: QueueMatrix = square(q).map_err(value_err)?;
    let a: ArrivalMatrix = square(a).map_err(value_err)?;
    let sched = Schedule::new(perm).map_err(value_err)?;
    if q.n() != a.n() || q.n() != sched.n() {
        return Err(value_err("queue, arrival and schedule sizes differ"));
    }
    let out = model::step(&q, &sched, &a);
    Ok((
        out.q_next.to_rows(),
        out.unused.map(|&u| u as u32).to_rows(),
    ))
}

/// Maximum-weight schedule with optimal duals. Ties are broken by a random relabelling
/// when `seed` is given and by lowest index otherwise.
#[pyfunction]
#[pyo3(signature = (q, seed=None))]
fn max_weight_matching<'py>(
    py: Python<'py>,
    q: Vec<Vec<u64>>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let q: QueueMatrix = square(q).map_err(value_err)?;
    let r = match seed {
        Some(s) => matching::max_weight_matching(&q, &mut iqswitch::streams::stream(s, 0, 0)),
        None => matching::max_weight_matching_deterministic(&q),
    };
    let d = PyDict::new(py);
    d.set_item("permutation", r.schedule.perm().to_vec())?;
    d.set_item("weight", r.weight)?;
    d.set_item("w", r.w)?;
    d.set_item("w_tilde", r.w_tilde)?;
    Ok(d.into_any())
}

#[pyfunction]
fn brute_force_matching<'py>(py: Python<'py>, q: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    let q: QueueMatrix = square(q).map_err(value_err)?;
    to_dict(py, &matching::brute_force_matching(&q).map_err(value_err)?)
}

/// Nearest point of the cone `{w_i + w~_j : w, w~ >= 0}` and the residual.
#[pyfunction]
fn project_onto_cone<'py>(py: Python<'py>, x: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let x: RealMatrix = square(x).map_err(value_err)?;
    let d = geometry::project_onto_cone(&x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("q_para", d.q_para.to_rows())?;
    out.set_item("q_perp", d.q_perp.to_rows())?;
    out.set_item("w", d.w)?;
    out.set_item("w_tilde", d.w_tilde)?;
    out.set_item("kkt_residual", d.kkt_residual)?;
    out.set_item("iterations", d.iterations)?;
    Ok(out.into_any())
}

#[pyfunction]
fn project_onto_subspace(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let x: RealMatrix = square(x).map_err(value_err)?;
    Ok(geometry::project_onto_subspace(&x).to_rows())
}

#[pyfunction]
fn universal_lower_bound(model: &PyTrafficModel) -> f64 {
    bounds::universal_lower_bound(&model.inner)
}

#[pyfunction]
#[pyo3(signature = (model, r=bounds::DEFAULT_ORDER))]
fn theorem1_bracket<'py>(
    py: Python<'py>,
    model: &PyTrafficModel,
    r: u32,
) -> PyResult<Bound<'py, PyAny>> {
    to_dict(
        py,
        &bounds::theorem1_bracket(&model.inner, r).map_err(value_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (n, epsilon, r=bounds::DEFAULT_ORDER))]
fn bernoulli_bracket<'py>(
    py: Python<'py>,
    n: usize,
    epsilon: f64,
    r: u32,
) -> PyResult<Bound<'py, PyAny>> {
    to_dict(
        py,
        &bounds::bernoulli_bracket(n, epsilon, r).map_err(value_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (n, beta, gamma, r=bounds::DEFAULT_ORDER))]
fn scaling_regime_bracket<'py>(
    py: Python<'py>,
    n: usize,
    beta: f64,
    gamma: f64,
    r: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let report = bounds::scaling_regime_bracket(n, beta, gamma, r).map_err(value_err)?;
    to_dict(py, &report)
}

/// Returns `(M_r, applicable)`.
#[pyfunction]
fn ssc_moment_constant(model: &PyTrafficModel, r: u32) -> PyResult<(f64, bool)> {
    let m = bounds::ssc_moment_constant(r, &model.inner).map_err(value_err)?;
    Ok((m.value, m.applicable))
}

#[pyfunction]
fn drift_tail_bound(kappa: f64, eta: f64, d: f64, m: u32) -> PyResult<f64> {
    let p = DriftParams::new(kappa, eta, d).map_err(value_err)?;
    Ok(bounds::drift_tail_bound(&p, m))
}

#[pyfunction]
fn drift_moment_bound(kappa: f64, eta: f64, d: f64, r: u32) -> PyResult<f64> {
    let p = DriftParams::new(kappa, eta, d).map_err(value_err)?;
    bounds::drift_moment_bound(&p, r).map_err(value_err)
}

/// Monte Carlo estimate of the steady state; returns the estimate as a dict.
#[pyfunction]
#[pyo3(signature = (
    model, sample_slots=1_000_000, replications=8, seed=0, warmup_slots=None,
    ssc=false, lyapunov_drift=false, gg1_coupling=false, diag_every=sim::DEFAULT_DIAG_EVERY,
))]
#[allow(clippy::too_many_arguments)]
fn run_steady_state<'py>(
    py: Python<'py>,
    model: &PyTrafficModel,
    sample_slots: u64,
    replications: u32,
    seed: u64,
    warmup_slots: Option<u64>,
    ssc: bool,
    lyapunov_drift: bool,
    gg1_coupling: bool,
    diag_every: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SimConfig {
        model: model.inner.clone(),
        warmup_slots,
        sample_slots,
        replications,
        seed,
        diagnostics: Diagnostics {
            ssc,
            lyapunov_drift,
            gg1_coupling,
        },
        diag_every,
        tie_break: TieBreak::Auto,
    };
    let est = py.detach(|| sim::run_steady_state(&cfg)).map_err(sim_err)?;
    to_dict(py, &est)
}

/// Runs a heavy-traffic sweep from a JSON configuration; returns the table as a dict.
#[pyfunction]
#[pyo3(signature = (config_json, eps, r=bounds::DEFAULT_ORDER))]
fn heavy_traffic_sweep<'py>(
    py: Python<'py>,
    config_json: &str,
    eps: Vec<f64>,
    r: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ConfigFile::from_json(config_json)
        .and_then(|c| c.sim_config())
        .map_err(sim_err)?;
    let table = py
        .detach(|| sim::heavy_traffic_sweep(&cfg, &eps, r))
        .map_err(sim_err)?;
    to_dict(py, &table)
}

#[pymodule]
fn pyiqswitch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrafficModel>()?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(max_weight_matching, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_matching, m)?)?;
    m.add_function(wrap_pyfunction!(project_onto_cone, m)?)?;
    m.add_function(wrap_pyfunction!(project_onto_subspace, m)?)?;
    m.add_function(wrap_pyfunction!(universal_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(bernoulli_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_regime_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(ssc_moment_constant, m)?)?;
    m.add_function(wrap_pyfunction!(drift_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(drift_moment_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(heavy_traffic_sweep, m)?)?;
    Ok(())
}
