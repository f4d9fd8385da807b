//! Python module `ahtorsion_py`.
//!
//! Configs and reports cross the boundary as JSON strings, in the same schema
//! the command-line tool reads and writes.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use ahtorsion::cli::{self, CliError, Command};
use ahtorsion::{diagnostics, exprlang, flow};

create_exception!(ahtorsion_py, ConfigError, PyValueError, "Invalid config (exit code 2).");
create_exception!(ahtorsion_py, GeometryError, PyValueError, "Geometry or domain error (exit code 3).");
create_exception!(ahtorsion_py, CheckError, PyException, "Internal cross-check failed (exit code 1).");

fn to_py(e: CliError) -> PyErr {
    match e {
        CliError::Config(_) | CliError::Io { .. } => ConfigError::new_err(e.to_string()),
        CliError::Geometry(_) => GeometryError::new_err(e.to_string()),
        CliError::Internal(_) => CheckError::new_err(e.to_string()),
    }
}

fn command(name: &str) -> PyResult<Command> {
    match name {
        "inspect" => Ok(Command::Inspect),
        "verify" => Ok(Command::Verify),
        "classify" => Ok(Command::Classify),
        "flow" => Ok(Command::Flow),
        _ => Err(ConfigError::new_err(format!("unknown command `{name}`"))),
    }
}

/// Run `command` on a JSON config. Returns `(exit_code, report_json)`.
/// Flow side files (trace, grid) are not written.
#[pyfunction]
#[pyo3(signature = (command_name, config, tol=None, seed=None))]
fn run(py: Python<'_>, command_name: &str, config: &str, tol: Option<f64>, seed: Option<u64>) -> PyResult<(i32, String)> {
    let cmd = command(command_name)?;
    let cfg = cli::parse_config(config).map_err(to_py)?;
    let outcome = py
        .detach(|| cli::execute(cmd, &cfg, tol, seed, None))
        .map_err(to_py)?;
    Ok((outcome.exit_code, outcome.report))
}

/// Shifted Halton points in the unit cube.
#[pyfunction]
fn halton(dim: usize, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    if dim == 0 || dim > 16 {
        return Err(PyValueError::new_err("dim must be in 1..=16"));
    }
    Ok(cli::halton_points(dim, count, seed))
}

/// Evaluate an expression in `x1, x2, ...` at a point.
#[pyfunction]
fn eval_expr(expr: &str, x: Vec<f64>) -> PyResult<f64> {
    let e = exprlang::parse(expr).map_err(|e| ConfigError::new_err(e.to_string()))?;
    e.eval(&x).map_err(|e| GeometryError::new_err(e.to_string()))
}

/// Result of the convention audit, `"paper-convention"` when it holds.
#[pyfunction]
fn sign_audit() -> &'static str {
    diagnostics::sign_audit()
}

/// Discrete energy and gradient norm of a random flat structure sampled on an
/// `m^(2n)` grid.
#[pyfunction]
fn grid_energy(py: Python<'_>, seed: u64, n: usize, m: usize, amplitude: f64) -> PyResult<(f64, f64)> {
    py.detach(|| {
        let grid = flow::JGrid::from_random_structure(seed, n, m, amplitude)?;
        let g = flow::gradient(&grid);
        Ok((g.energy, g.norm))
    })
    .map_err(|e: flow::FlowError| to_py(e.into()))
}

#[pymodule]
pub fn ahtorsion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(halton, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    m.add_function(wrap_pyfunction!(sign_audit, m)?)?;
    m.add_function(wrap_pyfunction!(grid_energy, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("GeometryError", m.py().get_type::<GeometryError>())?;
    m.add("CheckError", m.py().get_type::<CheckError>())?;
    m.add("SCHEMA", cli::SCHEMA)?;
    Ok(())
}
