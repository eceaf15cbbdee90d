//! Independent validation: the chain-rule transformation of derivatives, used
//! both as an oracle against the forward coefficient maps and as a round-trip
//! check that constructed transformations actually linearize.
//!
//! Two independent implementations of the same chain rule live here:
//!
//! - [`pushforward`] transports one derivative stack through the map with
//!   univariate jets along the solution curve (recursive quotient rule,
//!   never the expanded displays);
//! - [`chainrule_coefficient_oracle`] carries the derivative symbols as
//!   polynomial indeterminates over bivariate jets and collects the
//!   transformed equation's coefficients, which checks the transcribed
//!   forward formulas term by term.

use crate::candidates::{CandidateKind, CoefficientsI, CoefficientsII, LinearTarget};
use crate::expr::{eval_f64, jet_eval, Ex, EvalError};
use crate::jet::{Jet, Jet1};
use crate::number::Number;
use crate::rk::{dp45_partial, AdaptiveOpts};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, thiserror::Error)]
pub enum VerifyError {
    #[error("characteristic direction: D_x(phi) vanishes at (x, y) = ({x:.4}, {y:.4})")]
    CharacteristicDirection { x: f64, y: f64 },
    #[error("trace left the working box immediately (fewer than {min} usable states)")]
    TraceLeftBox { min: usize },
    #[error("could not start any usable trace after {attempts} attempts: {last}")]
    TraceFailed { attempts: usize, last: String },
    #[error("map jets unavailable: {0}")]
    MapJets(String),
    #[error("linear target: {0}")]
    Target(String),
    #[error("oracle inconsistency: {0}")]
    OracleInconsistent(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One state of a traced solution: position plus derivatives through order 4.
#[derive(Clone, Copy, Debug)]
pub struct TraceState {
    pub x: f64,
    pub y: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
}

/// A numerically integrated solution of the nonlinear equation.
#[derive(Clone, Debug)]
pub struct SolutionTrace {
    pub states: Vec<TraceState>,
    pub tol: f64,
}

/// Transformed derivative stack at one state.
#[derive(Clone, Copy, Debug)]
pub struct Pushed {
    pub t: f64,
    pub u: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

/// Anything that can hand out order-4 bivariate jets of `(phi, psi)`.
pub trait TransformJets {
    fn jets_at(&self, x: f64, y: f64) -> Result<(Jet<f64>, Jet<f64>), String>;
}

/// Closed-form maps: jets by direct jet evaluation.
pub struct ClosedMap {
    pub phi: Ex,
    pub psi: Ex,
    pub eps: f64,
}

impl TransformJets for ClosedMap {
    fn jets_at(&self, x: f64, y: f64) -> Result<(Jet<f64>, Jet<f64>), String> {
        let (bx, by) = (Number::F64(x), Number::F64(y));
        let n = crate::jet::DEFAULT_ORDER;
        let p = jet_eval(&self.phi, (&bx, &by), n, self.eps).map_err(|e| e.to_string())?;
        let s = jet_eval(&self.psi, (&bx, &by), n, self.eps).map_err(|e| e.to_string())?;
        Ok((p.to_f64(), s.to_f64()))
    }
}

const W_GUARD: f64 = 1e-9;

/// Transform a derivative stack through the map by exact recursive
/// application of the quotient/total-derivative rules, carried as univariate
/// jets in `x` along the solution.
pub fn pushforward(
    phi: &Jet<f64>,
    psi: &Jet<f64>,
    st: &TraceState,
) -> Result<Pushed, VerifyError> {
    assert!(phi.order() >= 4 && psi.order() >= 4, "need order-4 jets");
    let xj = Jet1::identity(st.x, 4);
    let yj = Jet1::new(vec![
        st.y,
        st.y1,
        st.y2 / 2.0,
        st.y3 / 6.0,
        st.y4 / 24.0,
    ]);
    let t = phi.along_curve(&xj, &yj);
    let u = psi.along_curve(&xj, &yj);
    let w = t.differentiate();
    if w.value().abs() < W_GUARD {
        return Err(VerifyError::CharacteristicDirection { x: st.x, y: st.y });
    }
    let div = |a: &Jet1, b: &Jet1| a.div(b).expect("guarded quotient");
    let u1 = div(&u.differentiate(), &w);
    let u2 = div(&u1.differentiate(), &w);
    let u3 = div(&u2.differentiate(), &w);
    let u4 = div(&u3.differentiate(), &w);
    Ok(Pushed {
        t: t.value(),
        u: u.value(),
        u1: u1.value(),
        u2: u2.value(),
        u3: u3.value(),
        u4: u4.value(),
    })
}

/// Equation under study, by coefficient bundle.
#[derive(Clone)]
pub enum Equation {
    I(CoefficientsI),
    II(CoefficientsII),
}

impl Equation {
    /// Evaluate `y'''' = f(x, y, y', y'', y''')`.
    pub fn y4(&self, x: f64, y: f64, s: [f64; 3], eps: f64) -> Result<f64, EvalError> {
        let [y1, y2, y3] = s;
        match self {
            Equation::I(c) => {
                let v = |e: &Ex| eval_f64(e, x, y, eps);
                Ok(-((v(&c.a1)? * y1 + v(&c.a0)?) * y3
                    + v(&c.b0)? * y2 * y2
                    + (v(&c.c2)? * y1 * y1 + v(&c.c1)? * y1 + v(&c.c0)?) * y2
                    + v(&c.d4)? * y1.powi(4)
                    + v(&c.d3)? * y1.powi(3)
                    + v(&c.d2)? * y1 * y1
                    + v(&c.d1)? * y1
                    + v(&c.d0)?))
            }
            Equation::II(c) => {
                let v = |e: &Ex| eval_f64(e, x, y, eps);
                let r = v(&c.r)?;
                let w = y1 + r;
                if w.abs() < eps {
                    return Err(EvalError::Singular {
                        culprit: "y' + r".into(),
                        magnitude: w.abs(),
                    });
                }
                let lin = (-10.0 * y2 + v(&c.f2)? * y1 * y1 + v(&c.f1)? * y1 + v(&c.f0)?) * y3 / w;
                let quad = (15.0 * y2.powi(3)
                    + (v(&c.h2)? * y1 * y1 + v(&c.h1)? * y1 + v(&c.h0)?) * y2 * y2
                    + (v(&c.j4)? * y1.powi(4)
                        + v(&c.j3)? * y1.powi(3)
                        + v(&c.j2)? * y1 * y1
                        + v(&c.j1)? * y1
                        + v(&c.j0)?)
                        * y2
                    + v(&c.k7)? * y1.powi(7)
                    + v(&c.k6)? * y1.powi(6)
                    + v(&c.k5)? * y1.powi(5)
                    + v(&c.k4)? * y1.powi(4)
                    + v(&c.k3)? * y1.powi(3)
                    + v(&c.k2)? * y1 * y1
                    + v(&c.k1)? * y1
                    + v(&c.k0)?)
                    / (w * w);
                Ok(-(lin + quad))
            }
        }
    }
}

/// Integrate one solution of the nonlinear equation from the given initial
/// state, keeping only states inside the box. The trace ends at the box edge,
/// at a singular right side, or at the far x-bound.
pub fn trace_solution(
    eq: &Equation,
    x0: f64,
    init: [f64; 4],
    bounds: [f64; 4],
    eps: f64,
) -> SolutionTrace {
    let [_, x_hi, y_lo, y_hi] = bounds;
    let tol = 1e-10;
    let rhs = |x: f64, st: &[f64], out: &mut [f64]| -> bool {
        match eq.y4(x, st[0], [st[1], st[2], st[3]], eps) {
            Ok(v) if v.is_finite() => {
                out[0] = st[1];
                out[1] = st[2];
                out[2] = st[3];
                out[3] = v;
                true
            }
            _ => false,
        }
    };
    let opts = AdaptiveOpts {
        rtol: tol,
        atol: 1e-12,
        h_max: (x_hi - x0).abs() / 64.0 + 1e-12,
        max_state: 1e6,
    };
    let (dense, _) = dp45_partial(rhs, x0, x_hi, &init, &opts);
    let mut states = Vec::new();
    for (i, x) in dense.xs.iter().enumerate() {
        let s = &dense.states[i];
        if s[0] < y_lo || s[0] > y_hi {
            break;
        }
        if let Ok(y4) = eq.y4(*x, s[0], [s[1], s[2], s[3]], eps) {
            states.push(TraceState {
                x: *x,
                y: s[0],
                y1: s[1],
                y2: s[2],
                y3: s[3],
                y4,
            });
        } else {
            break;
        }
    }
    SolutionTrace { states, tol }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct RoundtripReport {
    #[serde(rename = "maxResidual")]
    pub max_residual: f64,
    pub traces: usize,
    pub states: usize,
}

/// Integrate `n_solutions` random solutions, push every state forward and
/// evaluate the target residual `|u'''' + alpha u' + beta u|`, normalized by
/// the largest of the three terms (and 1).
pub fn roundtrip_check(
    eq: &Equation,
    map: &dyn TransformJets,
    target: &LinearTarget,
    n_solutions: usize,
    bounds: [f64; 4],
    seed: u64,
    eps: f64,
) -> Result<RoundtripReport, VerifyError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [x_lo, x_hi, y_lo, y_hi] = bounds;
    let mut max_residual = 0.0f64;
    let mut traces = 0usize;
    let mut total_states = 0usize;
    let mut attempts = 0usize;
    let mut last_err = String::from("no trace attempted");
    const MIN_STATES: usize = 4;

    while traces < n_solutions {
        attempts += 1;
        if attempts > 20 * n_solutions.max(1) {
            return Err(VerifyError::TraceFailed {
                attempts,
                last: last_err,
            });
        }
        let x0 = x_lo + (x_hi - x_lo) * rng.random_range(0.05..0.25);
        let y0 = y_lo + (y_hi - y_lo) * rng.random_range(0.25..0.75);
        let y1 = rng.random_range(0.35..0.95);
        let y2 = rng.random_range(-0.3..0.3);
        let y3 = rng.random_range(-0.3..0.3);
        let trace = trace_solution(eq, x0, [y0, y1, y2, y3], bounds, eps);
        if trace.states.len() < MIN_STATES {
            last_err = format!(
                "trace from ({:.3}, {:.3}) kept only {} states",
                x0,
                y0,
                trace.states.len()
            );
            continue;
        }
        // push states forward (thinned to a dozen per trace); stop the
        // trace at a t-monotonicity reversal
        let step = trace.states.len().div_ceil(12).max(1);
        let thinned: Vec<&TraceState> = trace.states.iter().step_by(step).collect();
        let mut w_sign = 0.0f64;
        let mut used = 0usize;
        for st in thinned {
            let (pj, sj) = map
                .jets_at(st.x, st.y)
                .map_err(VerifyError::MapJets)?;
            let pushed = match pushforward(&pj, &sj, st) {
                Ok(p) => p,
                Err(VerifyError::CharacteristicDirection { .. }) => break,
                Err(e) => return Err(e),
            };
            // monotonicity of t along the trace
            let w = {
                let px = pj.partial_x();
                let py = pj.partial_y();
                *px.constant_term() + *py.constant_term() * st.y1
            };
            if w_sign == 0.0 {
                w_sign = w.signum();
            } else if w.signum() != w_sign {
                break;
            }
            let (alpha, beta) = target.eval(pushed.t).map_err(VerifyError::Target)?;
            let terms = [pushed.u4, alpha * pushed.u1, beta * pushed.u];
            let scale = terms
                .iter()
                .map(|v| v.abs())
                .fold(1.0f64, f64::max);
            let res = (terms[0] + terms[1] + terms[2]).abs() / scale;
            max_residual = max_residual.max(res);
            used += 1;
        }
        if used < MIN_STATES {
            last_err = "t reversed or map degenerate too early along the trace".into();
            continue;
        }
        traces += 1;
        total_states += used;
    }
    Ok(RoundtripReport {
        max_residual,
        traces,
        states: total_states,
    })
}

// ----- the polynomial-indeterminate chain-rule oracle -------------------------

/// Polynomial in the derivative symbols `y1..y4` whose coefficients are
/// bivariate jets in `(x, y)`.
#[derive(Clone)]
struct PolyJet {
    terms: BTreeMap<[u8; 4], Jet<f64>>,
}

impl PolyJet {
    fn from_jet(j: Jet<f64>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert([0, 0, 0, 0], j);
        PolyJet { terms }
    }

    fn insert_add(&mut self, m: [u8; 4], j: Jet<f64>) {
        match self.terms.remove(&m) {
            None => {
                self.terms.insert(m, j);
            }
            Some(old) => {
                self.terms.insert(m, old.add(&j));
            }
        }
    }

    fn add(&self, o: &PolyJet) -> PolyJet {
        let mut out = self.clone();
        for (m, j) in &o.terms {
            out.insert_add(*m, j.clone());
        }
        out
    }

    fn mul(&self, o: &PolyJet) -> PolyJet {
        let mut out = PolyJet {
            terms: BTreeMap::new(),
        };
        for (ma, ja) in &self.terms {
            for (mb, jb) in &o.terms {
                let m = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2], ma[3] + mb[3]];
                out.insert_add(m, ja.mul(jb));
            }
        }
        out
    }

    fn scale(&self, s: f64) -> PolyJet {
        PolyJet {
            terms: self
                .terms
                .iter()
                .map(|(m, j)| (*m, j.scale(&s)))
                .collect(),
        }
    }

    fn mul_jet(&self, s: &Jet<f64>) -> PolyJet {
        PolyJet {
            terms: self.terms.iter().map(|(m, j)| (*m, j.mul(s))).collect(),
        }
    }

    /// Total x-derivative: `D = d_x + y1 d_y + y2 d_{y1} + y3 d_{y2} + y4 d_{y3}`.
    fn total_derivative(&self) -> PolyJet {
        let mut out = PolyJet {
            terms: BTreeMap::new(),
        };
        for (m, j) in &self.terms {
            out.insert_add(*m, j.partial_x());
            let mut my = *m;
            my[0] += 1;
            out.insert_add(my, j.partial_y());
            for slot in 0..3 {
                if m[slot] > 0 {
                    let mut md = *m;
                    md[slot] -= 1;
                    md[slot + 1] += 1;
                    out.insert_add(md, j.scale(&(m[slot] as f64)));
                }
            }
        }
        out
    }

    fn powi(&self, n: u32) -> PolyJet {
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.mul(self);
        }
        acc
    }

    fn value(&self, m: [u8; 4]) -> f64 {
        self.terms
            .get(&m)
            .map(|j| *j.constant_term())
            .unwrap_or(0.0)
    }
}

/// Numeric coefficient samples collected from the transformed equation at one
/// point, aligned with the `named()` order of the coefficient bundle.
pub fn chainrule_coefficient_oracle(
    phi: &Ex,
    psi: &Ex,
    alpha: &Ex,
    beta: &Ex,
    kind: CandidateKind,
    points: &[(f64, f64)],
    eps: f64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    let mut out = Vec::with_capacity(points.len());
    let n = crate::jet::DEFAULT_ORDER;
    for &(x, y) in points {
        let (bx, by) = (Number::F64(x), Number::F64(y));
        let pj = jet_eval(phi, (&bx, &by), n, eps)?.to_f64();
        let sj = jet_eval(psi, (&bx, &by), n, eps)?.to_f64();
        let aj = jet_eval(alpha, (&bx, &by), n, eps)?.to_f64();
        let bj = jet_eval(beta, (&bx, &by), n, eps)?.to_f64();

        let phi_poly = PolyJet::from_jet(pj.clone());
        let psi_poly = PolyJet::from_jet(sj.clone());
        let w = phi_poly.total_derivative();
        let n1 = psi_poly.total_derivative();
        let dw = w.total_derivative();
        let n2 = n1.total_derivative().mul(&w).add(&n1.mul(&dw).scale(-1.0));
        let n3 = n2.total_derivative().mul(&w).add(&n2.mul(&dw).scale(-3.0));
        let n4 = n3.total_derivative().mul(&w).add(&n3.mul(&dw).scale(-5.0));
        // u4 + alpha u1 + beta psi, multiplied through by W^7
        let m = n4
            .add(&n1.mul(&w.powi(6)).mul_jet(&aj))
            .add(&psi_poly.mul(&w.powi(7)).mul_jet(&bj));

        let phi_x = *pj.partial_x().constant_term();
        let phi_y = *pj.partial_y().constant_term();
        let psi_x = *sj.partial_x().constant_term();
        let psi_y = *sj.partial_y().constant_term();
        let delta = phi_x * psi_y - phi_y * psi_x;
        if delta.abs() < eps {
            return Err(VerifyError::MapJets(format!(
                "Jacobian vanishes at ({}, {})",
                x, y
            )));
        }

        let samples = match kind {
            CandidateKind::I => {
                if phi_x.abs() < eps {
                    return Err(VerifyError::MapJets(format!(
                        "phi_x vanishes at ({}, {})",
                        x, y
                    )));
                }
                let norm = delta * phi_x * phi_x;
                let c = |m1: u8, m2: u8, m3: u8| m.value([m1, m2, m3, 0]) / norm;
                // consistency: the y4 coefficient must normalize to 1
                let lead = m.value([0, 0, 0, 1]) / norm;
                if (lead - 1.0).abs() > 1e-6 {
                    return Err(VerifyError::OracleInconsistent(format!(
                        "y'''' coefficient normalized to {} (expected 1)",
                        lead
                    )));
                }
                vec![
                    c(1, 0, 1), // A1
                    c(0, 0, 1), // A0
                    c(0, 2, 0), // B0
                    c(2, 1, 0), // C2
                    c(1, 1, 0), // C1
                    c(0, 1, 0), // C0
                    c(4, 0, 0), // D4
                    c(3, 0, 0), // D3
                    c(2, 0, 0), // D2
                    c(1, 0, 0), // D1
                    c(0, 0, 0), // D0
                ]
            }
            CandidateKind::II => {
                if phi_y.abs() < eps {
                    return Err(VerifyError::MapJets(format!(
                        "phi_y vanishes at ({}, {})",
                        x, y
                    )));
                }
                let norm = delta * phi_y * phi_y;
                let c = |m1: u8, m2: u8, m3: u8, m4: u8| m.value([m1, m2, m3, m4]) / norm;
                let r = c(1, 0, 0, 1) / 2.0;
                let lead = c(2, 0, 0, 1);
                let y2cubed = c(0, 3, 0, 0);
                if (lead - 1.0).abs() > 1e-6 || (y2cubed - 15.0).abs() > 1e-5 {
                    return Err(VerifyError::OracleInconsistent(format!(
                        "pattern check failed: y1^2 y4 -> {}, y2^3 -> {}",
                        lead, y2cubed
                    )));
                }
                let f2 = c(3, 0, 1, 0);
                let f1 = c(2, 0, 1, 0) - r * f2;
                let f0 = c(1, 0, 1, 0) - r * f1;
                vec![
                    r,
                    f2,
                    f1,
                    f0,
                    c(2, 2, 0, 0), // H2
                    c(1, 2, 0, 0), // H1
                    c(0, 2, 0, 0), // H0
                    c(4, 1, 0, 0), // J4
                    c(3, 1, 0, 0), // J3
                    c(2, 1, 0, 0), // J2
                    c(1, 1, 0, 0), // J1
                    c(0, 1, 0, 0), // J0
                    c(7, 0, 0, 0), // K7
                    c(6, 0, 0, 0), // K6
                    c(5, 0, 0, 0), // K5
                    c(4, 0, 0, 0), // K4
                    c(3, 0, 0, 0), // K3
                    c(2, 0, 0, 0), // K2
                    c(1, 0, 0, 0), // K1
                    c(0, 0, 0, 0), // K0
                ]
            }
        };
        out.push(samples);
    }
    Ok(out)
}

// ----- random map families ----------------------------------------------------

/// Closed-form transformation families used by the oracle round-trip suites.
/// Coefficients are dyadic rationals in [-1, 1] held as float constants, and
/// every drawn map is screened for nondegeneracy on the box.
pub mod families {
    use super::*;

    fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(-64i64..=64) as f64 / 64.0
    }

    fn grid_min(e: &Ex, bounds: [f64; 4]) -> f64 {
        let [x_lo, x_hi, y_lo, y_hi] = bounds;
        let mut min = f64::INFINITY;
        for i in 0..=12 {
            for j in 0..=12 {
                let x = x_lo + (x_hi - x_lo) * i as f64 / 12.0;
                let y = y_lo + (y_hi - y_lo) * j as f64 / 12.0;
                match eval_f64(e, x, y, 1e-300) {
                    Ok(v) => min = min.min(v.abs()),
                    Err(_) => return 0.0,
                }
            }
        }
        min
    }

    /// `phi = x + c1 x^2`, `psi = y + c2 x y + c3 y^2`, constant alpha, beta.
    pub fn candidate_i(rng: &mut ChaCha8Rng, bounds: [f64; 4]) -> (Ex, Ex, Ex, Ex) {
        loop {
            let (c1, c2, c3) = (dyadic(rng), dyadic(rng), dyadic(rng));
            let phi = Ex::x() + Ex::float(c1) * Ex::x().powi(2);
            let psi = Ex::y() + Ex::float(c2) * Ex::x() * Ex::y() + Ex::float(c3) * Ex::y().powi(2);
            let alpha = Ex::float(dyadic(rng));
            let beta = Ex::float(dyadic(rng));
            let phi_x = crate::expr::diff(&phi, &crate::expr::Var::X);
            let psi_y = crate::expr::diff(&psi, &crate::expr::Var::Y);
            if grid_min(&phi_x, bounds) > 0.05 && grid_min(&psi_y, bounds) > 0.05 {
                return (phi, psi, alpha, beta);
            }
        }
    }

    /// `phi = y + c1 x + c2 x^2`, `psi = x + c3 y + c4 y^2`, constant alpha,
    /// beta; `phi_y = 1` identically and the Jacobian is screened on the box.
    pub fn candidate_ii(rng: &mut ChaCha8Rng, bounds: [f64; 4]) -> (Ex, Ex, Ex, Ex) {
        loop {
            let (c1, c2, c3, c4) = (dyadic(rng), dyadic(rng), dyadic(rng), dyadic(rng));
            let phi = Ex::y() + Ex::float(c1) * Ex::x() + Ex::float(c2) * Ex::x().powi(2);
            let psi = Ex::x() + Ex::float(c3) * Ex::y() + Ex::float(c4) * Ex::y().powi(2);
            let alpha = Ex::float(dyadic(rng));
            let beta = Ex::float(dyadic(rng));
            if jacobian_min(&phi, &psi, bounds) > 0.05 {
                return (phi, psi, alpha, beta);
            }
        }
    }

    /// Richer Candidate II maps with curvature in `y` (exercises every block
    /// of the K-coefficient formulas).
    pub fn candidate_ii_curved(rng: &mut ChaCha8Rng, bounds: [f64; 4]) -> (Ex, Ex, Ex, Ex) {
        loop {
            let c: Vec<f64> = (0..6).map(|_| dyadic(rng) / 4.0).collect();
            let phi = Ex::y()
                + Ex::float(c[0]) * Ex::x()
                + Ex::float(c[1]) * Ex::x().powi(2)
                + Ex::float(c[2]) * Ex::y().powi(2)
                + Ex::float(c[3]) * Ex::x() * Ex::y().powi(2);
            let psi = Ex::x() + Ex::float(c[4]) * Ex::y() + Ex::float(c[5]) * Ex::y().powi(3);
            let alpha = Ex::float(dyadic(rng));
            let beta = Ex::float(dyadic(rng));
            let phi_y = crate::expr::diff(&phi, &crate::expr::Var::Y);
            if grid_min(&phi_y, bounds) > 0.1 && jacobian_min(&phi, &psi, bounds) > 0.05 {
                return (phi, psi, alpha, beta);
            }
        }
    }

    fn jacobian_min(phi: &Ex, psi: &Ex, bounds: [f64; 4]) -> f64 {
        use crate::expr::{diff, Var};
        let d = diff(phi, &Var::X) * diff(psi, &Var::Y) - diff(phi, &Var::Y) * diff(psi, &Var::X);
        grid_min(&d, bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{forward_coefficients_i, forward_coefficients_ii};
    use rand::SeedableRng;

    fn closed(phi: &Ex, psi: &Ex) -> ClosedMap {
        ClosedMap {
            phi: phi.clone(),
            psi: psi.clone(),
            eps: 1e-9,
        }
    }

    #[test]
    fn pushforward_identity() {
        let map = closed(&Ex::x(), &Ex::y());
        let st = TraceState {
            x: 1.2,
            y: 0.8,
            y1: 0.5,
            y2: -0.25,
            y3: 2.0,
            y4: -1.5,
        };
        let (pj, sj) = map.jets_at(st.x, st.y).unwrap();
        let p = pushforward(&pj, &sj, &st).unwrap();
        assert!((p.t - st.x).abs() < 1e-14);
        assert!((p.u - st.y).abs() < 1e-14);
        assert!((p.u1 - st.y1).abs() < 1e-14);
        assert!((p.u2 - st.y2).abs() < 1e-13);
        assert!((p.u3 - st.y3).abs() < 1e-13);
        assert!((p.u4 - st.y4).abs() < 1e-12);
    }

    #[test]
    fn pushforward_x2y2_along_constant_solution() {
        // psi = x^2 y^2 along y = 1: u = x^2, u' = 2x, u'' = 2, rest 0
        let psi = Ex::x().powi(2) * Ex::y().powi(2);
        let map = closed(&Ex::x(), &psi);
        let st = TraceState {
            x: 1.5,
            y: 1.0,
            y1: 0.0,
            y2: 0.0,
            y3: 0.0,
            y4: 0.0,
        };
        let (pj, sj) = map.jets_at(st.x, st.y).unwrap();
        let p = pushforward(&pj, &sj, &st).unwrap();
        assert!((p.u - 2.25).abs() < 1e-13);
        assert!((p.u1 - 3.0).abs() < 1e-13);
        assert!((p.u2 - 2.0).abs() < 1e-12);
        assert!(p.u3.abs() < 1e-11 && p.u4.abs() < 1e-11);
    }

    #[test]
    fn characteristic_direction_detected() {
        // phi = y, so D_x phi = y'; a state with y' = 0 is characteristic
        let map = closed(&Ex::y(), &Ex::x());
        let st = TraceState {
            x: 1.0,
            y: 1.0,
            y1: 0.0,
            y2: 0.3,
            y3: 0.0,
            y4: 0.0,
        };
        let (pj, sj) = map.jets_at(st.x, st.y).unwrap();
        assert!(matches!(
            pushforward(&pj, &sj, &st),
            Err(VerifyError::CharacteristicDirection { .. })
        ));
    }

    #[test]
    fn pushforward_matches_polyjet_expansion() {
        // dual path: univariate-jet pushforward vs the polynomial
        // total-derivative expansion, on a random map and state
        let phi = Ex::y() + Ex::ratio(1, 3) * Ex::x() + Ex::ratio(1, 8) * Ex::x().powi(2);
        let psi = Ex::x() + Ex::ratio(1, 5) * Ex::y().powi(2);
        let st = TraceState {
            x: 1.1,
            y: 0.9,
            y1: 0.7,
            y2: -0.2,
            y3: 0.4,
            y4: 0.6,
        };
        let map = closed(&phi, &psi);
        let (pj, sj) = map.jets_at(st.x, st.y).unwrap();
        let p = pushforward(&pj, &sj, &st).unwrap();

        // independent expansion with derivative symbols as indeterminates
        let (bx, by) = (Number::F64(st.x), Number::F64(st.y));
        let pj6 = jet_eval(&phi, (&bx, &by), 6, 1e-9).unwrap().to_f64();
        let sj6 = jet_eval(&psi, (&bx, &by), 6, 1e-9).unwrap().to_f64();
        let w = PolyJet::from_jet(pj6).total_derivative();
        let n1 = PolyJet::from_jet(sj6).total_derivative();
        let dw = w.total_derivative();
        let n2 = n1.total_derivative().mul(&w).add(&n1.mul(&dw).scale(-1.0));
        let n3 = n2.total_derivative().mul(&w).add(&n2.mul(&dw).scale(-3.0));
        let n4 = n3.total_derivative().mul(&w).add(&n3.mul(&dw).scale(-5.0));
        let at = |p: &PolyJet| {
            let mut acc = 0.0;
            for (m, j) in &p.terms {
                acc += j.constant_term()
                    * st.y1.powi(m[0] as i32)
                    * st.y2.powi(m[1] as i32)
                    * st.y3.powi(m[2] as i32)
                    * st.y4.powi(m[3] as i32);
            }
            acc
        };
        let wv = at(&w);
        let u4_expanded = at(&n4) / wv.powi(7);
        assert!(
            (p.u4 - u4_expanded).abs() < 1e-10 * (1.0 + u4_expanded.abs()),
            "{} vs {}",
            p.u4,
            u4_expanded
        );
    }

    #[test]
    fn oracle_matches_forward_i_on_example1_map() {
        let psi = Ex::x().powi(2) * Ex::y().powi(2);
        let samples = chainrule_coefficient_oracle(
            &Ex::x(),
            &psi,
            &Ex::zero(),
            &Ex::one(),
            CandidateKind::I,
            &[(1.0, 1.0)],
            1e-9,
        )
        .unwrap();
        // A1 = 4/y = 4, A0 = 8/x = 8 at (1,1)
        assert!((samples[0][0] - 4.0).abs() < 1e-9);
        assert!((samples[0][1] - 8.0).abs() < 1e-9);
        // D0 = y/2
        assert!((samples[0][10] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn oracle_identity_map_all_zero() {
        let samples = chainrule_coefficient_oracle(
            &Ex::x(),
            &Ex::y(),
            &Ex::zero(),
            &Ex::zero(),
            CandidateKind::I,
            &[(1.3, 0.8)],
            1e-9,
        )
        .unwrap();
        for v in &samples[0] {
            assert!(v.abs() < 1e-12, "{}", v);
        }
    }

    #[test]
    fn oracle_matches_forward_ii_on_swap_map() {
        let samples = chainrule_coefficient_oracle(
            &Ex::y(),
            &Ex::x(),
            &Ex::one(),
            &Ex::one(),
            CandidateKind::II,
            &[(2.0, 1.0)],
            1e-9,
        )
        .unwrap();
        let s = &samples[0];
        assert!(s[0].abs() < 1e-12, "r sample");
        assert!((s[12] + 2.0).abs() < 1e-9, "K7 sample {}", s[12]);
        assert!((s[13] + 1.0).abs() < 1e-9, "K6 sample {}", s[13]);
    }

    #[test]
    fn oracle_agrees_with_transcribed_forward_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let bounds = [0.5, 2.0, 0.5, 2.0];
        for _ in 0..3 {
            let (phi, psi, alpha, beta) = families::candidate_ii_curved(&mut rng, bounds);
            let fw = forward_coefficients_ii(&phi, &psi, &alpha, &beta).unwrap();
            let pts = [(0.9, 1.1), (1.5, 0.8)];
            let samples =
                chainrule_coefficient_oracle(&phi, &psi, &alpha, &beta, CandidateKind::II, &pts, 1e-9)
                    .unwrap();
            for (k, &(x, y)) in pts.iter().enumerate() {
                for (i, (name, e)) in fw.named().iter().enumerate() {
                    let want = eval_f64(e, x, y, 1e-9).unwrap();
                    let got = samples[k][i];
                    assert!(
                        (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                        "{} at ({}, {}): oracle {} vs forward {}",
                        name,
                        x,
                        y,
                        got,
                        want
                    );
                }
            }
        }
        for _ in 0..3 {
            let (phi, psi, alpha, beta) = families::candidate_i(&mut rng, bounds);
            let fw = forward_coefficients_i(&phi, &psi, &alpha, &beta).unwrap();
            let pts = [(1.2, 0.7)];
            let samples =
                chainrule_coefficient_oracle(&phi, &psi, &alpha, &beta, CandidateKind::I, &pts, 1e-9)
                    .unwrap();
            for (i, (name, e)) in fw.named().iter().enumerate() {
                let want = eval_f64(e, 1.2, 0.7, 1e-9).unwrap();
                let got = samples[0][i];
                assert!(
                    (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "{}: oracle {} vs forward {}",
                    name,
                    got,
                    want
                );
            }
        }
    }

    #[test]
    fn roundtrip_example1() {
        use crate::expr::parse_expr;
        use std::collections::BTreeSet;
        let p = |s: &str| parse_expr(s, &BTreeSet::new()).unwrap();
        let c = CoefficientsI {
            a1: p("4/y"),
            a0: p("8/x"),
            b0: p("3/y"),
            c2: Ex::zero(),
            c1: p("24/(x*y)"),
            c0: p("12/x^2"),
            d4: Ex::zero(),
            d3: Ex::zero(),
            d2: p("12/(x^2*y)"),
            d1: Ex::zero(),
            d0: p("y/2"),
        };
        let map = closed(&Ex::x(), &(Ex::x().powi(2) * Ex::y().powi(2)));
        let target = LinearTarget::constant(0.0, 1.0);
        let report = roundtrip_check(
            &Equation::I(c),
            &map,
            &target,
            5,
            [0.5, 2.0, 0.5, 2.0],
            11,
            1e-9,
        )
        .unwrap();
        assert!(
            report.max_residual < 1e-6,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn roundtrip_trivial_equation() {
        let map = closed(&Ex::x(), &Ex::y());
        let target = LinearTarget::constant(0.0, 0.0);
        let report = roundtrip_check(
            &Equation::I(CoefficientsI::zero()),
            &map,
            &target,
            3,
            [0.5, 2.0, 0.5, 2.0],
            5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_residual < 1e-9, "{}", report.max_residual);
    }

    #[test]
    fn roundtrip_example4_swap() {
        let mut c = CoefficientsII::zero();
        c.k7 = -Ex::x();
        c.k6 = -Ex::one();
        let map = closed(&Ex::y(), &Ex::x());
        let target = LinearTarget::constant(1.0, 1.0);
        let report = roundtrip_check(
            &Equation::II(c),
            &map,
            &target,
            5,
            [0.5, 2.0, 0.5, 2.0],
            17,
            1e-9,
        )
        .unwrap();
        assert!(
            report.max_residual < 1e-5,
            "residual {}",
            report.max_residual
        );
    }
}
