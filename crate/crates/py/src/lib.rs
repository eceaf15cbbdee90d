//! Python bindings over the core engine: expression utilities plus the JSON
//! request/report pipeline (test, construct, oracle, verify).

use linearize4::expr::{self, Ex, Var};
use linearize4::number::Number;
use linearize4::pipeline;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

fn param_set(params: Option<Vec<String>>) -> BTreeSet<String> {
    params.unwrap_or_default().into_iter().collect()
}

fn parse_with(src: &str, params: Option<Vec<String>>, rhs: bool) -> PyResult<Ex> {
    let set = param_set(params);
    let r = if rhs {
        expr::parse_rhs(src, &set)
    } else {
        expr::parse_expr(src, &set)
    };
    r.map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Parse an expression and return its canonical printed form.
#[pyfunction]
#[pyo3(signature = (source, params=None, rhs=false))]
fn parse(source: &str, params: Option<Vec<String>>, rhs: bool) -> PyResult<String> {
    Ok(parse_with(source, params, rhs)?.to_string())
}

/// Exact symbolic partial derivative with respect to "x" or "y".
#[pyfunction]
#[pyo3(signature = (source, var, params=None))]
fn diff(source: &str, var: &str, params: Option<Vec<String>>) -> PyResult<String> {
    let v = match var {
        "x" => Var::X,
        "y" => Var::Y,
        other => {
            return Err(PyValueError::new_err(format!(
                "can only differentiate by x or y, got `{}`",
                other
            )))
        }
    };
    let e = parse_with(source, params, false)?;
    Ok(expr::diff(&e, &v).to_string())
}

/// Evaluate an expression at a point, with optional parameter bindings.
#[pyfunction]
#[pyo3(signature = (source, x, y, params=None, eps_sing=1e-8))]
fn eval_expr(
    source: &str,
    x: f64,
    y: f64,
    params: Option<BTreeMap<String, f64>>,
    eps_sing: f64,
) -> PyResult<f64> {
    let params = params.unwrap_or_default();
    let names: Vec<String> = params.keys().cloned().collect();
    let e = parse_with(source, Some(names), false)?;
    let bindings: Vec<(String, Number)> = params
        .iter()
        .map(|(k, v)| (k.clone(), Number::rat_from_f64(*v)))
        .collect();
    let e = e.bind_params(&bindings);
    expr::eval_f64(&e, x, y, eps_sing).map_err(|err| PyRuntimeError::new_err(err.to_string()))
}

/// Partial-derivative table of an expression via jet evaluation:
/// entry [i][j] is d^{i+j} f / dx^i dy^j at (x, y).
#[pyfunction]
#[pyo3(signature = (source, x, y, order=4, eps_sing=1e-8))]
fn jet(source: &str, x: f64, y: f64, order: usize, eps_sing: f64) -> PyResult<Vec<Vec<f64>>> {
    let e = parse_with(source, None, false)?;
    let (bx, by) = (Number::F64(x), Number::F64(y));
    let j = expr::jet_eval(&e, (&bx, &by), order, eps_sing)
        .map_err(|err| PyRuntimeError::new_err(err.to_string()))?;
    let mut rows = Vec::new();
    for i in 0..=order {
        let mut row = Vec::new();
        for jj in 0..=(order - i) {
            row.push(j.deriv(i, jj).to_f64());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Run the linearization test on a JSON request; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (request_json, tol=None))]
fn test(request_json: &str, tol: Option<f64>) -> PyResult<String> {
    let req = pipeline::AnalysisRequest::from_json(request_json)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report =
        pipeline::run_test(&req, tol).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.to_json())
}

/// Test, construct the transformation and verify; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (request_json, tol=None))]
fn construct(request_json: &str, tol: Option<f64>) -> PyResult<String> {
    let req = pipeline::AnalysisRequest::from_json(request_json)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report =
        pipeline::run_construct(&req, tol).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.to_json())
}

/// Forward oracle: coefficient table (as request JSON) of the pullback of
/// `u'''' + alpha u' + beta u = 0` under `t = phi, u = psi`.
#[pyfunction]
#[pyo3(signature = (phi, psi, alpha="0", beta="0", params=None))]
fn oracle(
    phi: &str,
    psi: &str,
    alpha: &str,
    beta: &str,
    params: Option<BTreeMap<String, f64>>,
) -> PyResult<String> {
    pipeline::run_oracle(&pipeline::OracleRequest {
        phi: phi.to_string(),
        psi: psi.to_string(),
        alpha: alpha.to_string(),
        beta: beta.to_string(),
        parameters: params.unwrap_or_default(),
    })
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Round-trip verification of a closed transformation against an equation
/// request; returns the JSON report with `roundtripResidual`.
#[pyfunction]
#[pyo3(signature = (request_json, phi, psi, alpha="0", beta="0", traces=5))]
fn verify(
    request_json: &str,
    phi: &str,
    psi: &str,
    alpha: &str,
    beta: &str,
    traces: usize,
) -> PyResult<String> {
    let equation = pipeline::AnalysisRequest::from_json(request_json)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = pipeline::run_verify(&pipeline::VerifyRequest {
        equation,
        phi: phi.to_string(),
        psi: psi.to_string(),
        alpha: alpha.to_string(),
        beta: beta.to_string(),
        traces,
    })
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.to_json())
}

/// JSON text of a bundled fixture (example1..example4).
#[pyfunction]
fn fixture(name: &str) -> PyResult<String> {
    let text = match name {
        "example1" => linearize4::fixtures::EXAMPLE1,
        "example2" => linearize4::fixtures::EXAMPLE2,
        "example3" => linearize4::fixtures::EXAMPLE3,
        "example4" => linearize4::fixtures::EXAMPLE4,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown fixture `{}`",
                other
            )))
        }
    };
    Ok(text.to_string())
}

#[pymodule]
fn linearize4_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    m.add_function(wrap_pyfunction!(jet, m)?)?;
    m.add_function(wrap_pyfunction!(test, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    Ok(())
}
