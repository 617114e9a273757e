//! Python bindings: gait files, simulation, stability analysis, DLQR and
//! optimization. Reports come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use hzd3d::optimizer::{self, Criterion, OptimizationProblem};
use hzd3d::simulator::{self, ControllerKind, Perturbation, SimConfig, WalkSummary};
use hzd3d::stability::{self, Perturbations};
use hzd3d::{diagnostics, published, Error, GaitDesign};

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// One periodic gait: robot parameters, virtual constraints and orbit.
#[pyclass(name = "Gait", module = "hzd3d_py", frozen, skip_from_py_object)]
struct PyGait {
    inner: GaitDesign,
}

#[pymethods]
impl PyGait {
    /// `torque-optimal`, `stability-optimal` or `torque-optimal-y4`.
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let inner = match name {
            "torque-optimal" => published::torque_optimal(),
            "stability-optimal" => published::stability_optimal(),
            "torque-optimal-y4" => published::torque_optimal_y4(),
            _ => return Err(PyValueError::new_err(format!("unknown bundled gait `{name}`"))),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        GaitDesign::load(path).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        GaitDesign::from_json(s).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.params)
    }

    /// Pre-impact configuration.
    #[getter]
    fn qf(&self) -> Vec<f64> {
        self.inner.qf.iter().copied().collect()
    }

    #[getter]
    fn dqf(&self) -> Vec<f64> {
        self.inner.dqf.iter().copied().collect()
    }

    /// Post-impact configuration.
    #[getter]
    fn qi(&self) -> Vec<f64> {
        self.inner.qi.iter().copied().collect()
    }

    #[getter]
    fn dqi(&self) -> Vec<f64> {
        self.inner.dqi.iter().copied().collect()
    }

    #[getter]
    fn has_event_gain(&self) -> bool {
        self.inner.event_gain.is_some()
    }

    fn __repr__(&self) -> String {
        format!("Gait(name={:?})", self.inner.name)
    }
}

/// Walks `steps` steps and returns the per-step summary. CSV files are
/// written when `out` is given.
#[pyfunction]
#[pyo3(signature = (gait, controller = "hzd", steps = 10, perturb_pos = 0.0, perturb_vel = 0.0, out = None))]
fn simulate<'py>(
    py: Python<'py>,
    gait: &PyGait,
    controller: &str,
    steps: usize,
    perturb_pos: f64,
    perturb_vel: f64,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let controller: ControllerKind = controller.parse().map_err(py_err)?;
    let cfg = SimConfig {
        controller,
        steps,
        perturbation: Perturbation { position_deg: perturb_pos, velocity_deg_s: perturb_vel },
        ..Default::default()
    };
    cfg.validate().map_err(py_err)?;
    let design = &gait.inner;
    let summary = py.detach(|| -> hzd3d::Result<WalkSummary> {
        let walk = simulator::simulate_walk(design, &simulator::initial_state(design, &cfg), steps, &cfg);
        if let Some(dir) = &out {
            simulator::write_csv(&walk.steps, &design.params, dir)?;
        }
        Ok(WalkSummary::new(design, controller, &walk))
    });
    to_py(py, &summary.map_err(py_err)?)
}

/// Restricted Poincaré linearization; includes the closed loop when the
/// gait carries an event gain.
#[pyfunction]
fn analyze<'py>(py: Python<'py>, gait: &PyGait) -> PyResult<Bound<'py, PyAny>> {
    let design = &gait.inner;
    let rep = py.detach(|| stability::analyze(design, &Perturbations::default())).map_err(py_err)?;
    to_py(py, &rep)
}

/// Returns the gait with a stride-to-stride LQR gain and the report.
#[pyfunction]
#[pyo3(signature = (gait, r = 2.0))]
fn dlqr<'py>(py: Python<'py>, gait: &PyGait, r: f64) -> PyResult<(PyGait, Bound<'py, PyAny>)> {
    let mut design = gait.inner.clone();
    let rep = py
        .detach(|| -> hzd3d::Result<_> {
            let rep = stability::linearize(&design, &Perturbations::default(), true)?;
            let sol = stability::dlqr(&rep.az, &rep.f.expect("requested"), r)?;
            Ok(rep.with_gain(sol.k))
        })
        .map_err(py_err)?;
    design.event_gain = rep.event_gain(r);
    Ok((PyGait { inner: design }, to_py(py, &rep)?))
}

/// Local optimization seeded at `gait`; `criterion` is `torque` or `stability`.
#[pyfunction]
#[pyo3(signature = (gait, criterion = "torque", max_iterations = None))]
fn optimize<'py>(
    py: Python<'py>,
    gait: &PyGait,
    criterion: &str,
    max_iterations: Option<usize>,
) -> PyResult<(Option<PyGait>, Bound<'py, PyAny>)> {
    let criterion = match criterion {
        "torque" => Criterion::TorquePerStep,
        "stability" => Criterion::SpectralRadius,
        _ => return Err(PyValueError::new_err(format!("unknown criterion `{criterion}`"))),
    };
    let mut problem = OptimizationProblem { criterion, ..Default::default() };
    if let Some(n) = max_iterations {
        problem.settings.max_iterations = n;
    }
    let design = &gait.inner;
    let outcome = py.detach(|| optimizer::optimize(design, &problem)).map_err(py_err)?;
    let result = to_py(py, &outcome)?;
    Ok((outcome.design.map(|inner| PyGait { inner }), result))
}

/// Model property checks for the gait's robot parameters.
#[pyfunction]
fn check<'py>(py: Python<'py>, gait: &PyGait) -> PyResult<Bound<'py, PyAny>> {
    let design = &gait.inner;
    let d = py.detach(|| diagnostics::run(design));
    to_py(py, &d)
}

#[pymodule]
fn hzd3d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGait>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(dlqr, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
