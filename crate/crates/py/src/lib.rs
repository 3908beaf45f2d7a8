//! Python module `gesfem`: configs, step-by-step simulations and the
//! run/converge/meshgen drivers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gesfem::diagnostics::{self, MonitorRow, RadialSolution};
use gesfem::experiment::{self, ExperimentConfig};
use gesfem::mesh::SurfaceKind;
use gesfem::stepper;

fn to_py(e: gesfem::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn row_dict<'py>(py: Python<'py>, row: &MonitorRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let names = diagnostics::MONITOR_HEADER.split(',');
    for (name, v) in names.zip(row.values()) {
        d.set_item(name, v)?;
    }
    Ok(d)
}

/// Experiment configuration, as read from JSON.
#[pyclass(name = "Config", module = "gesfem")]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Shrinking sphere with R0 = u0 = 1 and the exact bootstrap.
    #[staticmethod]
    #[pyo3(signature = (alpha, level, tau, t_end, scheme = "p1"))]
    fn radial(alpha: f64, level: u32, tau: f64, t_end: f64, scheme: &str) -> PyResult<Self> {
        let mut inner = ExperimentConfig::radial(alpha, level, tau, t_end);
        inner.scheme = match scheme {
            "p1" => stepper::Scheme::P1,
            "p2" => stepper::Scheme::P2,
            other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.inner.to_json().replace('\n', "").replace("  ", ""))
    }
}

/// A running experiment that can be advanced step by step.
#[pyclass(name = "Simulation", module = "gesfem")]
struct PySimulation {
    inner: experiment::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        experiment::Simulation::new(&config.inner).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Advances `steps` steps, stopping early at the final time.
    #[pyo3(signature = (steps = 1))]
    fn advance(&mut self, steps: usize) -> PyResult<usize> {
        let mut done = 0;
        while done < steps && !self.inner.is_finished().map_err(to_py)? {
            self.inner.advance().map_err(to_py)?;
            done += 1;
        }
        Ok(done)
    }

    fn run_to_end(&mut self) -> PyResult<usize> {
        self.advance(usize::MAX)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.state().t
    }

    #[getter]
    fn steps_done(&self) -> usize {
        self.inner.steps_done()
    }

    #[getter]
    fn finished(&self) -> PyResult<bool> {
        self.inner.is_finished().map_err(to_py)
    }

    /// Node positions as a list of `[x, y, z]`.
    #[getter]
    fn x(&self) -> Vec<[f64; 3]> {
        self.inner.state().x.clone()
    }

    #[getter]
    fn normal(&self) -> Vec<[f64; 3]> {
        self.inner.state().n.clone()
    }

    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.state().u.clone()
    }

    /// Normal velocity.
    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.state().v.clone()
    }

    /// Mean curvature, carried by scheme P2 only.
    #[getter]
    fn h(&self) -> Option<Vec<f64>> {
        self.inner.state().h.clone()
    }

    #[getter]
    fn triangles(&self) -> Vec<Vec<usize>> {
        let mesh = self.inner.mesh();
        (0..mesh.element_count()).map(|e| mesh.element(e).to_vec()).collect()
    }

    fn mean_radius(&self) -> f64 {
        diagnostics::mean_radius(&self.inner.state().x)
    }

    fn monitor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        row_dict(py, &self.inner.monitor().map_err(to_py)?)
    }

    /// Errors against the exact radial solution; radial setups only.
    fn errors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let e = self.inner.errors().map_err(to_py)?;
        let d = PyDict::new(py);
        for (name, v) in diagnostics::ErrorNorms::NAMES.iter().zip(e.as_array()) {
            d.set_item(*name, v)?;
        }
        Ok(d)
    }
}

/// Runs to the final time; returns the summary and monitor rows.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn run<'py>(py: Python<'py>, config: &PyConfig, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let s = experiment::run(&config.inner, out_dir.as_deref()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("steps", s.steps)?;
    d.set_item("t", s.t)?;
    d.set_item("mean_radius", s.mean_radius)?;
    d.set_item("exact_radius", s.exact_radius)?;
    let rows = s.rows.iter().map(|r| row_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("rows", rows)?;
    if let Some(e) = s.max_errors {
        let errs = PyDict::new(py);
        for (name, v) in diagnostics::ErrorNorms::NAMES.iter().zip(e.as_array()) {
            errs.set_item(*name, v)?;
        }
        d.set_item("max_errors", errs)?;
    }
    d.set_item("files", s.files)?;
    Ok(d)
}

/// Runs the refinement ladder of a converge config; returns the table as CSV.
#[pyfunction]
fn converge(config: &PyConfig) -> PyResult<String> {
    experiment::converge(&config.inner).map(|t| t.to_csv()).map_err(to_py)
}

/// Writes an initial mesh. `surface` is a JSON object such as
/// `{"kind": "sphere", "radius": 1.0}`. Returns `(nodes, triangles)` counts.
#[pyfunction]
#[pyo3(signature = (surface, out, level = 3, degree = 1))]
fn meshgen(surface: &str, out: PathBuf, level: u32, degree: usize) -> PyResult<(usize, usize)> {
    let kind: SurfaceKind = serde_json::from_str(surface).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mesh = experiment::meshgen(kind, level, degree, &out).map_err(to_py)?;
    Ok((mesh.node_count(), mesh.element_count()))
}

/// Closed-form radial solution `(R, u, V, H)` at time `t`.
#[pyfunction]
#[pyo3(signature = (alpha, t, r0 = 1.0, u0 = 1.0))]
fn radial_eval(alpha: f64, t: f64, r0: f64, u0: f64) -> PyResult<(f64, f64, f64, f64)> {
    let sol = RadialSolution::new(r0, u0, alpha, 2.0).map_err(to_py)?;
    let v = diagnostics::radial_eval(&sol, t).map_err(to_py)?;
    Ok((v.r, v.u, v.v, v.h))
}

/// BDF weights `(delta_0..delta_q, gamma_0..gamma_{q-1})`.
#[pyfunction]
fn bdf_coefficients(q: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = stepper::bdf_coefficients(q).map_err(to_py)?;
    Ok((c.delta, c.gamma))
}

/// Experimental orders of convergence between successive entries.
#[pyfunction]
fn eoc(errors: Vec<f64>, sizes: Vec<f64>) -> PyResult<Vec<f64>> {
    diagnostics::eoc(&errors, &sizes).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "gesfem")]
fn gesfem_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(meshgen, m)?)?;
    m.add_function(wrap_pyfunction!(radial_eval, m)?)?;
    m.add_function(wrap_pyfunction!(bdf_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    m.add("MONITOR_HEADER", diagnostics::MONITOR_HEADER)?;
    Ok(())
}
