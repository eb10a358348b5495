//! Python bindings for the reduction pipeline.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use symred::catalog::{self, FamilyId, Instantiation};
use symred::detsys::{classical_determining, nonclassical_determining, HeatPDE};
use symred::odesolve::{solve_ivp, Ivp, LinearOde, DEFAULT_ATOL, DEFAULT_EXCLUSION, DEFAULT_RTOL};
use symred::preset::{self, RunOptions};
use symred::reduction::{self, reduce_profile, ReducedODE};
use symred::symkernel::parse;

create_exception!(symred_py, SymredError, PyException);

fn fail(e: impl std::fmt::Display) -> PyErr {
    SymredError::new_err(e.to_string())
}

fn reduced(profile: &str) -> PyResult<ReducedODE> {
    let w = parse(profile).map_err(|e| PyValueError::new_err(e.to_string()))?;
    reduce_profile(&w).map_err(fail)
}

/// Coefficients `(c1, c0, r)` of `c1 E0' + c0 E0 = r` for `w = -y^2 + W(x)`.
#[pyfunction]
fn reduce(profile: &str) -> PyResult<(String, String, String)> {
    let ode = reduced(profile)?;
    Ok((ode.c1.to_string(), ode.c0.to_string(), ode.r.to_string()))
}

/// Roots of `c1` in `[a, b]` as `(value, exact form or None)`.
#[pyfunction]
fn singular_points(profile: &str, a: f64, b: f64) -> PyResult<Vec<(f64, Option<String>)>> {
    let ode = reduced(profile)?;
    Ok(reduction::singular_points(&ode, (a, b))
        .into_iter()
        .map(|s| (s.value, s.exact))
        .collect())
}

/// Integrate from `E0(x0) = e0` across `[a, b]`, stopping short of
/// singular points; returns `(x, E0, residual)` rows.
#[pyfunction]
#[pyo3(signature = (profile, x0, e0, a, b, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, exclusion=DEFAULT_EXCLUSION))]
#[allow(clippy::too_many_arguments)]
fn solve(
    profile: &str,
    x0: f64,
    e0: f64,
    a: f64,
    b: f64,
    rtol: f64,
    atol: f64,
    exclusion: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let ode = LinearOde::from_reduced(&reduced(profile)?);
    let ivp = Ivp::new(ode, x0, e0, (a, b))
        .with_tolerances(rtol, atol)
        .with_exclusion(exclusion);
    let curve = solve_ivp(&ivp).map_err(fail)?;
    Ok(curve
        .samples
        .iter()
        .map(|s| (s.x, s.e, s.residual))
        .collect())
}

/// Full pipeline for example `id`; returns `(pass, report as JSON)`.
#[pyfunction]
#[pyo3(signature = (id, out_dir=None))]
fn run_example(id: u8, out_dir: Option<PathBuf>) -> PyResult<(bool, String)> {
    let opts = RunOptions {
        rtol: DEFAULT_RTOL,
        atol: DEFAULT_ATOL,
        out_dir,
    };
    let run = preset::run_example(id, &opts).map_err(fail)?;
    Ok((run.report.pass, run.report.to_json()))
}

/// Check a catalog family; returns `(pass, reports as JSON)`.
#[pyfunction]
#[pyo3(signature = (family, mu=None, k=None, aux=None))]
fn verify(
    family: &str,
    mu: Option<&str>,
    k: Option<&str>,
    aux: Option<&str>,
) -> PyResult<(bool, String)> {
    let id: FamilyId = family
        .parse()
        .map_err(|e: catalog::CatalogError| PyValueError::new_err(e.to_string()))?;
    let insts = match Instantiation::custom(mu, k, aux)
        .map_err(|e| PyValueError::new_err(e.to_string()))?
    {
        Some(inst) => vec![inst],
        None => catalog::instantiations(id),
    };
    let reports = insts
        .iter()
        .map(|i| catalog::verify_family(id, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let pass = reports.iter().all(|r| r.pass);
    Ok((pass, serde_json::to_string(&reports).map_err(fail)?))
}

/// Determining system, `classical` or `nonclassical`, one equation per line.
#[pyfunction]
fn detsys(kind: &str) -> PyResult<String> {
    let pde = HeatPDE::new();
    let sys = match kind {
        "classical" => classical_determining(&pde),
        "nonclassical" => nonclassical_determining(&pde),
        _ => return Err(PyValueError::new_err(format!("unknown system `{kind}`"))),
    };
    Ok(sys.map_err(fail)?.to_string())
}

#[pymodule]
fn symred_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SymredError", m.py().get_type::<SymredError>())?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(singular_points, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_example, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(detsys, m)?)?;
    Ok(())
}
