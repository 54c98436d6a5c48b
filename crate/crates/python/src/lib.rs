//! Python bindings: tree weights and their constants, factorization, extension,
//! θ-spectra, martingales, the counterexample builder and the experiment runner.
//! Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use dyadlab::geometry::{GridNode, UnitArc};
use dyadlab::harness::{self, Command, RunOptions};
use dyadlab::lattice::{self, DyadicDomain};
use dyadlab::martingale::{self as mart, BuildSpec, DyadicInterval, Martingale, Thresholds};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: dyadlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Positive weight on the cells of a rotated dyadic tree, stored in heap order.
#[pyclass(name = "TreeWeight", module = "dyadlab_py")]
struct PyTreeWeight(lattice::TreeWeight);

#[pymethods]
impl PyTreeWeight {
    #[new]
    #[pyo3(signature = (values, depth, theta = 0.0))]
    fn new(values: Vec<f64>, depth: u32, theta: f64) -> PyResult<Self> {
        lattice::TreeWeight::new(theta, depth, values).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (value, depth, theta = 0.0))]
    fn constant(value: f64, depth: u32, theta: f64) -> PyResult<Self> {
        lattice::TreeWeight::constant(theta, depth, value).map(Self).map_err(err)
    }

    /// Multiplicative cascade with log-steps uniform in `[-step, step]`.
    #[staticmethod]
    #[pyo3(signature = (depth, step, seed, theta = 0.0))]
    fn cascade(depth: u32, step: f64, seed: u64, theta: f64) -> PyResult<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        dyadlab::sample::cascade_weight(theta, depth, step, &mut rng).map(Self).map_err(err)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.0.depth()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta()
    }

    fn value(&self, level: u32, index: u64) -> PyResult<f64> {
        let node = GridNode::new(self.0.theta(), level, index).map_err(err)?;
        self.0.value(&node).map_err(err)
    }

    fn powf(&self, a: f64) -> PyResult<Self> {
        self.0.powf(a).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }

    fn __repr__(&self) -> String {
        format!("TreeWeight(depth={}, theta={})", self.0.depth(), self.0.theta())
    }
}

fn domain(theta: f64, nodes: Option<Vec<(u32, u64)>>) -> PyResult<Option<DyadicDomain>> {
    let Some(nodes) = nodes else { return Ok(None) };
    let cells = nodes.into_iter().map(|(l, j)| GridNode::new(theta, l, j)).collect::<dyadlab::Result<Vec<_>>>().map_err(err)?;
    DyadicDomain::new(theta, cells).map(Some).map_err(err)
}

/// `[w]_{B_p,D}`, restricted to the listed `(level, index)` cells when `domain` is given.
#[pyfunction]
#[pyo3(signature = (w, p, domain = None))]
fn bp_constant(w: &PyTreeWeight, p: f64, domain: Option<Vec<(u32, u64)>>) -> PyResult<f64> {
    let omega = self::domain(w.0.theta(), domain)?;
    lattice::bp_constant(&w.0, p, omega.as_ref()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (w, domain = None))]
fn b1_constant(w: &PyTreeWeight, domain: Option<Vec<(u32, u64)>>) -> PyResult<f64> {
    let omega = self::domain(w.0.theta(), domain)?;
    lattice::b1_constant(&w.0, omega.as_ref()).map_err(err)
}

/// `(C_w, L_w)`.
#[pyfunction]
#[pyo3(signature = (w, domain = None))]
fn osc_constants(w: &PyTreeWeight, domain: Option<Vec<(u32, u64)>>) -> PyResult<(f64, f64)> {
    let omega = self::domain(w.0.theta(), domain)?;
    lattice::osc_constants(&w.0, omega.as_ref()).map_err(err)
}

#[pyfunction]
fn maximal(w: &PyTreeWeight) -> PyResult<PyTreeWeight> {
    lattice::maximal(&w.0, None).map(PyTreeWeight).map_err(err)
}

/// Full-disc factorization: `(w1, w2, certificates)`.
#[pyfunction]
fn factorize<'py>(py: Python<'py>, w: &PyTreeWeight, p: f64) -> PyResult<(PyTreeWeight, PyTreeWeight, Bound<'py, PyAny>)> {
    let f = dyadlab::factor::factor_bho_full(&w.0, p).map_err(err)?;
    let mut cert = serde_json::to_value(&f).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(r) = cert.get_mut("result").and_then(|r| r.as_object_mut()) {
        r.remove("w1");
        r.remove("w2");
    }
    cert["violations"] = serde_json::json!(f.result.violations());
    Ok((PyTreeWeight(f.result.w1), PyTreeWeight(f.result.w2), to_py(py, &cert)?))
}

/// Extension from the listed cells to the whole tree: `(W, certificates)`.
#[pyfunction]
#[pyo3(signature = (w, domain, p, q = 2.0))]
fn extend<'py>(py: Python<'py>, w: &PyTreeWeight, domain: Vec<(u32, u64)>, p: f64, q: f64) -> PyResult<(PyTreeWeight, Bound<'py, PyAny>)> {
    let omega = self::domain(w.0.theta(), Some(domain))?.expect("domain given");
    let r = dyadlab::extend::extend_bp(&w.0, &omega, p, q).map_err(err)?;
    let mut cert = serde_json::to_value(&r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(o) = cert.as_object_mut() {
        o.remove("weight");
        o.remove("k");
    }
    cert["violations"] = serde_json::json!(r.violations());
    Ok((PyTreeWeight(r.weight), to_py(py, &cert)?))
}

/// `{k: measure}` of rotations whose minimal dyadic predecessor of the arc is `2^k` times the smallest.
#[pyfunction]
fn theta_measure_spectrum(center: f64, length: f64) -> PyResult<Vec<(u32, f64)>> {
    let arc = UnitArc::new(center, length).map_err(err)?;
    Ok(dyadlab::averaging::theta_measure_spectrum(&arc).into_iter().collect())
}

fn martingale(kind: &str) -> PyResult<Martingale> {
    match kind {
        "kahane" => Ok(Martingale::Kahane),
        "random_walk" => Ok(Martingale::RandomWalk),
        _ => Err(PyValueError::new_err(format!("unknown martingale {kind:?}; use \"kahane\" or \"random_walk\""))),
    }
}

/// Value on the interval with binary address `address` ("" is [0,1]).
#[pyfunction]
#[pyo3(signature = (address, kind = "kahane"))]
fn martingale_value(address: &str, kind: &str) -> PyResult<f64> {
    let node = DyadicInterval::parse(address).map_err(err)?;
    martingale(kind)?.value(&node).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (level, kind = "kahane"))]
fn level_values(level: u32, kind: &str) -> PyResult<Vec<f64>> {
    martingale(kind)?.level_values(level).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (depth, kind = "kahane"))]
fn bloch_seminorm(depth: u32, kind: &str) -> PyResult<f64> {
    mart::bloch_seminorm(&martingale(kind)?, depth).map_err(err)
}

/// Number of relative-depth-`k` subintervals of `[0,1]` with `|M_J - M_root| > eps·k`.
#[pyfunction]
#[pyo3(signature = (eps, k, kind = "kahane"))]
fn azuma_counts(eps: f64, k: u32, kind: &str) -> PyResult<u64> {
    mart::azuma_counts(&martingale(kind)?, &DyadicInterval::root(), eps, k).map_err(err)
}

/// Kahane construction with thresholds `s_j = c·j·log(j+1)`; returns the full report.
#[pyfunction]
#[pyo3(signature = (c = 2.0, generations = 4, depth_budget = 60))]
fn counterexample<'py>(py: Python<'py>, c: f64, generations: u32, depth_budget: u32) -> PyResult<Bound<'py, PyAny>> {
    let spec = BuildSpec { thresholds: Thresholds::JLogJ { c }, generations, depth_budget, ..BuildSpec::default() };
    let built = mart::counterexample_build(&Martingale::Kahane, &spec).map_err(err)?;
    to_py(py, &built)
}

/// Runs a CLI command in process. `config` is the same dict a `--config` file holds;
/// the result is the report with each table's rows under `rows`.
#[pyfunction]
#[pyo3(signature = (command, config = None, seed = None, depth = None))]
fn run<'py>(
    py: Python<'py>,
    command: &str,
    config: Option<&Bound<'py, PyAny>>,
    seed: Option<u64>,
    depth: Option<u32>,
) -> PyResult<Bound<'py, PyAny>> {
    let command: Command = command.parse().map_err(err)?;
    let config = match config {
        Some(c) => {
            let text: String = py.import("json")?.call_method1("dumps", (c,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => serde_json::Value::Null,
    };
    let opts = RunOptions { seed, depth, base_dir: PathBuf::from(".") };
    let report = harness::run(command, &config, &opts).map_err(err)?;
    let mut value = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    for (i, t) in report.tables.iter().enumerate() {
        value["tables"][i]["rows"] = serde_json::json!(t.rows);
    }
    value["exit_code"] = serde_json::json!(report.exit_code());
    to_py(py, &value)
}

#[pymodule]
fn dyadlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTreeWeight>()?;
    m.add_function(wrap_pyfunction!(bp_constant, m)?)?;
    m.add_function(wrap_pyfunction!(b1_constant, m)?)?;
    m.add_function(wrap_pyfunction!(osc_constants, m)?)?;
    m.add_function(wrap_pyfunction!(maximal, m)?)?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(extend, m)?)?;
    m.add_function(wrap_pyfunction!(theta_measure_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(martingale_value, m)?)?;
    m.add_function(wrap_pyfunction!(level_values, m)?)?;
    m.add_function(wrap_pyfunction!(bloch_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(azuma_counts, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
