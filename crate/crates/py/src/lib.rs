//! Python bindings: models, cell solves with their densities and measures,
//! and the scenario runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::HashMap;
use std::path::PathBuf;
use weakkam::adjoint::{dissipation_measure, linearized_operator, mather_checks, stationary_adjoint};
use weakkam::cell::{self, CellSpec, SolverOptions};
use weakkam::experiments::{self, RunConfig};
use weakkam::grid::TorusGrid;
use weakkam::hamiltonian::{HamiltonianModel, ModelSpec};
use weakkam::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn point(v: &[f64], dim: usize, what: &str) -> PyResult<[f64; 2]> {
    if v.len() != dim {
        return Err(PyValueError::new_err(format!("{what} must have length {dim}")));
    }
    let mut out = [0.0; 2];
    out[..dim].copy_from_slice(v);
    Ok(out)
}

/// A Hamiltonian H(x, p) on the 1- or 2-torus.
#[pyclass(name = "Model", module = "weakkam_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: HamiltonianModel,
}

#[pymethods]
impl PyModel {
    /// Build from a JSON model spec, e.g.
    /// '{"kind": "mechanical", "dim": 1, "potential": {"kind": "cosine", "amplitude": 1.0}}'.
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: spec.build().map_err(to_py)?,
        })
    }

    /// H = |p|^2/2 + amplitude * sum cos(2 pi x_a)
    #[staticmethod]
    #[pyo3(signature = (amplitude = 1.0, dim = 1))]
    fn pendulum(amplitude: f64, dim: usize) -> PyResult<Self> {
        let spec = ModelSpec::Mechanical {
            dim,
            potential: weakkam::potential::PotentialSpec::Cosine { amplitude },
        };
        Ok(Self {
            inner: spec.build().map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    /// (H, D_pH, D_xH) at one point.
    fn eval(&self, x: Vec<f64>, p: Vec<f64>) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.inner.dim();
        let e = self.inner.eval(point(&x, d, "x")?, point(&p, d, "p")?);
        Ok((e.h, e.hp[..d].to_vec(), e.hx[..d].to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner.label())
    }
}

/// Solution of the viscous cell problem together with its stationary density.
#[pyclass(name = "CellSolution", module = "weakkam_py", frozen)]
struct PyCellSolution {
    sol: cell::CellSolution,
    theta: Vec<f64>,
    trace_mass: f64,
    min_eigenvalue: f64,
    mather: (f64, f64, f64, f64, f64),
}

#[pymethods]
impl PyCellSolution {
    #[getter]
    fn hbar(&self) -> f64 {
        self.sol.hbar
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.sol.spec.epsilon
    }

    #[getter]
    fn resolution(&self) -> Vec<usize> {
        self.sol.spec.grid.resolution().to_vec()
    }

    /// u on the grid, axis 0 fastest
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.sol.u.values.clone()
    }

    /// Du, components interleaved per node
    #[getter]
    fn du(&self) -> Vec<f64> {
        self.sol.du.values.clone()
    }

    /// stationary density theta, unit mass
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.theta.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.sol.residual_inf
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.sol.lipschitz
    }

    /// total mass of the trace of the dissipation measure
    #[getter]
    fn trace_mass(&self) -> f64 {
        self.trace_mass
    }

    #[getter]
    fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// dict with res_a, res_a_identity, res_b, res_c_po, res_c_raw
    fn mather_residuals(&self) -> HashMap<&'static str, f64> {
        let m = self.mather;
        HashMap::from([
            ("res_a", m.0),
            ("res_a_identity", m.1),
            ("res_b", m.2),
            ("res_c_po", m.3),
            ("res_c_raw", m.4),
        ])
    }

    fn __repr__(&self) -> String {
        format!(
            "CellSolution(eps={}, hbar={:.12}, trace_mass={:.3e})",
            self.sol.spec.epsilon, self.sol.hbar, self.trace_mass
        )
    }
}

/// Solve -eps^2/2 Lap u + H(x, P + Du) = Hbar on a grid of the given resolution.
#[pyfunction]
#[pyo3(signature = (model, p, epsilon, resolution, tolerance = None))]
fn solve_cell(
    py: Python<'_>,
    model: &PyModel,
    p: Vec<f64>,
    epsilon: f64,
    resolution: Vec<usize>,
    tolerance: Option<f64>,
) -> PyResult<PyCellSolution> {
    let model = model.inner.clone();
    py.detach(move || -> weakkam::Result<PyCellSolution> {
        let grid = TorusGrid::new(&resolution)?;
        let spec = CellSpec::new(model, &p, epsilon, grid)?;
        let opts = SolverOptions {
            tolerance,
            ..SolverOptions::default()
        };
        let sol = cell::solve_cell(&spec, None, &opts)?;
        let op = linearized_operator(&sol);
        let density = stationary_adjoint(&op)?;
        let m = dissipation_measure(&sol, &density)?;
        let mc = mather_checks(&sol, &op, &density);
        Ok(PyCellSolution {
            theta: density.theta.values.clone(),
            trace_mass: m.trace_mass,
            min_eigenvalue: m.min_eigenvalue,
            mather: (mc.res_a, mc.res_a_identity, mc.res_b, mc.res_c_po, mc.res_c_raw),
            sol,
        })
    })
    .map_err(to_py)
}

/// Built-in scenarios as (name, description) pairs.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    experiments::list_scenarios()
        .into_iter()
        .map(|s| (s.name, s.description))
        .collect()
}

/// Run a scenario from TOML config text; returns (exit_code, manifest_json).
#[pyfunction]
#[pyo3(signature = (config_toml, output = None))]
fn run_scenario(py: Python<'_>, config_toml: &str, output: Option<PathBuf>) -> PyResult<(i32, String)> {
    let mut cfg = RunConfig::from_toml(config_toml).map_err(to_py)?;
    if output.is_some() {
        cfg.output = output;
    }
    let outcome = py.detach(move || experiments::run_scenario(&cfg)).map_err(to_py)?;
    let json = serde_json::to_string(&outcome.manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((outcome.exit_code(), json))
}

/// Recompute a manifest's checks from its CSV; returns (consistent, exit_code).
#[pyfunction]
fn check_manifest(path: PathBuf) -> PyResult<(bool, i32)> {
    let r = experiments::check_manifest(&path).map_err(to_py)?;
    Ok((r.consistent, r.exit_code))
}

#[pymodule]
fn weakkam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyCellSolution>()?;
    m.add_function(wrap_pyfunction!(solve_cell, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(check_manifest, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
