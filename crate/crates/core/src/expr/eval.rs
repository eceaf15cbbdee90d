//! Evaluation of expressions: plain scalar values and truncated-Taylor jets.
//!
//! Both walks memoize on node identity, so a shared-subtree DAG evaluates in
//! time proportional to its node count rather than its unfolded tree size.
//! Every quotient, log, sqrt and general power checks its argument against the
//! singularity guard; a violation is an error, never a silent NaN.

use super::{Ex, Expr, Func, Var};
use crate::jet::Jet;
use crate::number::Number;
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// A denominator (or log/sqrt/power argument) fell inside the guard.
    Singular { culprit: String, magnitude: f64 },
    UnboundParam(String),
    /// A `y1`/`y2`/`y3` slot survived to numeric evaluation.
    DerivativeSlot,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Singular { culprit, magnitude } => write!(
                f,
                "singular point: |{}| = {:.3e} inside the guard",
                culprit, magnitude
            ),
            EvalError::UnboundParam(p) => write!(f, "parameter `{}` is not bound to a number", p),
            EvalError::DerivativeSlot => {
                write!(f, "derivative symbol cannot be evaluated at a point")
            }
        }
    }
}

impl std::error::Error for EvalError {}

fn clip(s: String) -> String {
    if s.len() > 80 {
        format!("{}...", &s[..77])
    } else {
        s
    }
}

fn singular(e: &Expr, magnitude: f64) -> EvalError {
    EvalError::Singular {
        culprit: clip(Ex(std::sync::Arc::new(e.clone())).to_string()),
        magnitude,
    }
}

/// Scalar evaluation at a point. Exact when the expression and the point are
/// rational and no transcendental function is involved.
pub fn eval_number(e: &Ex, x: &Number, y: &Number, eps: f64) -> Result<Number, EvalError> {
    let mut memo: HashMap<*const Expr, Number> = HashMap::new();
    eval_num_rec(&e.0, x, y, eps, &mut memo)
}

fn eval_num_rec(
    e: &std::sync::Arc<Expr>,
    x: &Number,
    y: &Number,
    eps: f64,
    memo: &mut HashMap<*const Expr, Number>,
) -> Result<Number, EvalError> {
    let key = std::sync::Arc::as_ptr(e);
    if let Some(v) = memo.get(&key) {
        return Ok(v.clone());
    }
    let v = match &**e {
        Expr::Const(c) => c.clone(),
        Expr::Var(Var::X) => x.clone(),
        Expr::Var(Var::Y) => y.clone(),
        Expr::Var(Var::Param(p)) => return Err(EvalError::UnboundParam(p.to_string())),
        Expr::Var(_) => return Err(EvalError::DerivativeSlot),
        Expr::Neg(a) => -eval_num_rec(a, x, y, eps, memo)?,
        Expr::Add(a, b) => eval_num_rec(a, x, y, eps, memo)? + eval_num_rec(b, x, y, eps, memo)?,
        Expr::Sub(a, b) => eval_num_rec(a, x, y, eps, memo)? - eval_num_rec(b, x, y, eps, memo)?,
        Expr::Mul(a, b) => eval_num_rec(a, x, y, eps, memo)? * eval_num_rec(b, x, y, eps, memo)?,
        Expr::Div(a, b) => {
            let d = eval_num_rec(b, x, y, eps, memo)?;
            if d.abs_f64() < eps {
                return Err(singular(b, d.abs_f64()));
            }
            eval_num_rec(a, x, y, eps, memo)?.div(&d)
        }
        Expr::PowI(a, n) => {
            let b = eval_num_rec(a, x, y, eps, memo)?;
            if *n < 0 && b.abs_f64() < eps {
                return Err(singular(a, b.abs_f64()));
            }
            b.powi(*n)
        }
        Expr::Pow(a, b) => {
            let base = eval_num_rec(a, x, y, eps, memo)?;
            let ex = eval_num_rec(b, x, y, eps, memo)?;
            let bv = base.to_f64();
            if bv < eps {
                return Err(singular(a, bv));
            }
            Number::F64(bv.powf(ex.to_f64()))
        }
        Expr::Func(f, a) => {
            let v = eval_num_rec(a, x, y, eps, memo)?;
            let fv = v.to_f64();
            match f {
                Func::Sin => Number::F64(fv.sin()),
                Func::Cos => Number::F64(fv.cos()),
                Func::Exp => Number::F64(fv.exp()),
                Func::Log => {
                    if fv < eps {
                        return Err(singular(a, fv));
                    }
                    Number::F64(fv.ln())
                }
                Func::Sqrt => {
                    if fv < eps {
                        return Err(singular(a, fv));
                    }
                    Number::F64(fv.sqrt())
                }
            }
        }
    };
    memo.insert(key, v.clone());
    Ok(v)
}

/// Plain float evaluation at an f64 point.
pub fn eval_f64(e: &Ex, x: f64, y: f64, eps: f64) -> Result<f64, EvalError> {
    Ok(eval_number(e, &Number::F64(x), &Number::F64(y), eps)?.to_f64())
}

/// Evaluate as a sum of top-level additive terms, returning the total and the
/// magnitude of the largest single term. The latter normalizes residuals so
/// that badly scaled coefficient sets cannot mask a failure.
pub fn eval_sum_terms(e: &Ex, x: &Number, y: &Number, eps: f64) -> Result<(Number, f64), EvalError> {
    let mut terms: Vec<(bool, Ex)> = Vec::new();
    collect_terms(e, false, &mut terms);
    let mut memo: HashMap<*const Expr, Number> = HashMap::new();
    let mut total = Number::zero();
    let mut max_term = 0.0f64;
    for (negated, t) in &terms {
        let v = eval_num_rec(&t.0, x, y, eps, &mut memo)?;
        max_term = max_term.max(v.abs_f64());
        total = if *negated { total - v } else { total + v };
    }
    Ok((total, max_term))
}

fn collect_terms(e: &Ex, negated: bool, out: &mut Vec<(bool, Ex)>) {
    match &*e.0 {
        Expr::Add(a, b) => {
            collect_terms(&Ex(a.clone()), negated, out);
            collect_terms(&Ex(b.clone()), negated, out);
        }
        Expr::Sub(a, b) => {
            collect_terms(&Ex(a.clone()), negated, out);
            collect_terms(&Ex(b.clone()), !negated, out);
        }
        Expr::Neg(a) => collect_terms(&Ex(a.clone()), !negated, out),
        _ => out.push((negated, e.clone())),
    }
}

/// Jet evaluation: truncated bivariate Taylor expansion at a point.
pub fn jet_eval(
    e: &Ex,
    base: (&Number, &Number),
    order: usize,
    eps: f64,
) -> Result<Jet<Number>, EvalError> {
    let mut memo: HashMap<*const Expr, Jet<Number>> = HashMap::new();
    let b = (base.0.clone(), base.1.clone());
    jet_rec(&e.0, &b, order, eps, &mut memo)
}

/// Float-coefficient jet evaluation; same walk, no exact arithmetic.
pub fn jet_eval_f64(e: &Ex, base: (f64, f64), order: usize, eps: f64) -> Result<Jet<f64>, EvalError> {
    let mut memo: HashMap<*const Expr, Jet<f64>> = HashMap::new();
    jet_rec(&e.0, &base, order, eps, &mut memo)
}

fn jet_rec<C: crate::jet::Coeff>(
    e: &std::sync::Arc<Expr>,
    base: &(C, C),
    order: usize,
    eps: f64,
    memo: &mut HashMap<*const Expr, Jet<C>>,
) -> Result<Jet<C>, EvalError> {
    let key = std::sync::Arc::as_ptr(e);
    if let Some(v) = memo.get(&key) {
        return Ok(v.clone());
    }
    let v = match &**e {
        Expr::Const(c) => Jet::constant(C::from_number(c), base.clone(), order),
        Expr::Var(Var::X) => Jet::var_x(base.clone(), order),
        Expr::Var(Var::Y) => Jet::var_y(base.clone(), order),
        Expr::Var(Var::Param(p)) => return Err(EvalError::UnboundParam(p.to_string())),
        Expr::Var(_) => return Err(EvalError::DerivativeSlot),
        Expr::Neg(a) => jet_rec(a, base, order, eps, memo)?.neg(),
        Expr::Add(a, b) => jet_rec(a, base, order, eps, memo)?.add(&jet_rec(b, base, order, eps, memo)?),
        Expr::Sub(a, b) => jet_rec(a, base, order, eps, memo)?.sub(&jet_rec(b, base, order, eps, memo)?),
        Expr::Mul(a, b) => jet_rec(a, base, order, eps, memo)?.mul(&jet_rec(b, base, order, eps, memo)?),
        Expr::Div(a, b) => {
            let den = jet_rec(b, base, order, eps, memo)?;
            jet_rec(a, base, order, eps, memo)?
                .div(&den, eps)
                .map_err(|s| singular(b, s.magnitude))?
        }
        Expr::PowI(a, n) => jet_rec(a, base, order, eps, memo)?
            .powi(*n, eps)
            .map_err(|s| singular(a, s.magnitude))?,
        Expr::Pow(a, b) => {
            let bj = jet_rec(b, base, order, eps, memo)?;
            jet_rec(a, base, order, eps, memo)?
                .pow_jet(&bj, eps)
                .map_err(|s| singular(a, s.magnitude))?
        }
        Expr::Func(f, a) => jet_rec(a, base, order, eps, memo)?
            .apply_func(*f, eps)
            .map_err(|s| singular(a, s.magnitude))?,
    };
    memo.insert(key, v.clone());
    Ok(v)
}
