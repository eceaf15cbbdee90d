//! The linearization conditions and the randomized vanishing test.
//!
//! Candidate I carries ten conditions, Candidate II eighteen. Each is built
//! as a symbolic residual expression (left side minus right side, all partial
//! derivatives expanded by [`crate::expr::diff`]), then decided by evaluating
//! at random nonsingular sample points. Since each condition is a fixed
//! differential polynomial in the coefficients, a nonzero one almost surely
//! shows up at a random point; rational inputs are decided exactly.
//!
//! A note on the first Candidate II condition: the sign variant
//! `10 r_yy = -(F1_y + F2_x + F2_y r + r_y F2)` looks plausible but does NOT
//! vanish on transformed equations; the variant obtained from the mixed
//! derivative comparison `Delta_xy = (Delta_x)_y`,
//! `10 r_yy = -(F1_y - F2_x - F2_y r - r_y F2)`, does. We implement the
//! latter, cross-checked against the chain-rule oracle on random maps.

use crate::candidates::{CandidateKind, CoefficientsI, CoefficientsII};
use crate::expr::{diff, eval_sum_terms, Ex, EvalError, Var};
use crate::sample::SamplePlan;
use serde::Serialize;

/// Default pass threshold on the relative residual in float mode. Exact
/// rational evaluations ignore it: they must be literally zero.
pub const TAU_PASS: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConditionRecord {
    pub id: String,
    /// External equation label reported alongside the condition id.
    #[serde(rename = "paperEq")]
    pub paper_eq: String,
    #[serde(rename = "maxAbs")]
    pub max_abs: f64,
    #[serde(rename = "maxRel")]
    pub max_rel: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Linearizable,
    NotLinearizable,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub candidate: CandidateKind,
    pub verdict: Verdict,
    pub conditions: Vec<ConditionRecord>,
    pub plan: SamplePlan,
    /// Sample points rejected and redrawn because some subexpression tripped
    /// the singularity guard.
    pub redrawn: usize,
}

impl ConditionReport {
    pub fn failing_ids(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LintestError {
    #[error(
        "sampling exhausted: {attempts} draws could not find {needed} nonsingular points; \
         last offending denominators: {culprits:?}"
    )]
    SamplingExhausted {
        attempts: usize,
        needed: usize,
        culprits: Vec<String>,
    },
    #[error("invalid sample plan: {0}")]
    BadPlan(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// The ten Candidate I conditions as residual expressions, in order.
pub fn build_conditions_i(c: &CoefficientsI) -> Vec<Ex> {
    let dx = |e: &Ex| diff(e, &Var::X);
    let dy = |e: &Ex| diff(e, &Var::Y);
    let CoefficientsI {
        a1,
        a0,
        b0,
        c2,
        c1,
        c0,
        d4,
        d3,
        d2,
        d1,
        d0,
    } = c;

    vec![
        dy(a0) - dx(a1),
        4 * b0 - 3 * a1,
        12 * dy(a1) + 3 * a1.powi(2) - 8 * c2,
        12 * dx(a1) + 3 * a0 * a1 - 4 * c1,
        32 * dy(c0) + 12 * dx(a0) * a1 - 16 * dx(c1) + 3 * a0.powi(2) * a1 - 4 * a0 * c1,
        4 * dy(c2) + a1 * c2 - 24 * d4,
        4 * dy(c1) + a1 * c1 - 12 * d3,
        16 * dx(c1) - 12 * dx(a0) * a1 - 3 * a0.powi(2) * a1 + 4 * a0 * c1 + 8 * a1 * c0
            - 32 * d2,
        192 * dx(d2) + 36 * dx(a0) * a0 * a1 - 48 * dx(a0) * c1 - 48 * dx(c0) * a1
            - 288 * dy(d1)
            + 9 * a0.powi(3) * a1
            - 12 * a0.powi(2) * c1
            - 36 * a0 * a1 * c0
            + 48 * a0 * d2
            + 32 * c0 * c1,
        384 * dx(&dy(d1))
            - (3 * ((3 * a0 * a1 - 4 * c1) * a0.powi(2) + 16 * (2 * a1 * d1 + c0 * c1)
                - 16 * (a1 * c0 - d2) * a0)
                * a0
                - 32 * (4 * (c1 * d1 - 2 * c2 * d0 + c0 * d2) + (3 * a1 * d0 - c0.powi(2)) * a1)
                - 96 * dy(d1) * a0
                + 384 * dy(d0) * a1
                + 1536 * dy(&dy(d0))
                - 16 * (3 * a0 * a1 - 4 * c1) * dx(c0)
                + 12 * ((3 * a0 * a1 - 4 * c1) * a0 - 4 * (a1 * c0 - 4 * d2)) * dx(a0)),
    ]
}

/// Condition ids and their report labels for Candidate I.
pub fn condition_ids_i() -> Vec<(String, String)> {
    (1..=10)
        .map(|k| (format!("T1.C{}", k), format!("{}", 44 + k)))
        .collect()
}

/// The eighteen Candidate II conditions as residual expressions, in order.
pub fn build_conditions_ii(c: &CoefficientsII) -> Vec<Ex> {
    let dx = |e: &Ex| diff(e, &Var::X);
    let dy = |e: &Ex| diff(e, &Var::Y);
    let CoefficientsII {
        r,
        f2,
        f1,
        f0,
        h2,
        h1,
        h0,
        j4,
        j3,
        j2,
        j1,
        j0,
        k7,
        k6,
        k5,
        k4,
        k3,
        k2,
        k1,
        k0,
    } = c;

    let r_y = dy(r);
    let f2_y = dy(f2);
    let f2_yy = dy(&f2_y);
    let j4_y = dy(j4);

    vec![
        // T2.C1 (label 64), in the sign convention that actually vanishes
        10 * dy(&r_y) + dy(f1) - dx(f2) - &f2_y * r - &r_y * f2,
        // T2.C2 (label 65)
        10 * dx(r) - (10 * &r_y * r - f0 + f1 * r - f2 * r.powi(2)),
        // T2.C3 (label 67)
        h2 + 3 * f2,
        // T2.C4 (label 68)
        4 * h1 + 3 * (5 * f1 - 2 * f2 * r),
        // T2.C5 (label 69)
        4 * h0 + 3 * (6 * f0 - f1 * r),
        // T2.C6 (label 70)
        10 * dy(&dy(f1))
            + (dy(f1) * f2 - 40 * dy(&dx(f2)) - 16 * dx(f2) * f2
                + 20 * &f2_yy * r
                + 40 * &f2_y * &r_y
                + 14 * &f2_y * f2 * r
                + 20 * dx(j4)
                - 20 * &j4_y * r
                + 14 * &r_y * f2.powi(2)
                - 40 * &r_y * j4),
        // T2.C7 (label 71)
        12 * dx(f2) - (12 * &f2_y * r - 3 * f1 * f2 + 6 * f2.powi(2) * r + 4 * j3 - 16 * j4 * r),
        // T2.C8 (label 72)
        60 * dx(f1)
            - (60 * dy(f1) * r - 36 * f0 * f2 - 15 * f1.powi(2) + 66 * f1 * f2 * r
                - 36 * f2.powi(2) * r.powi(2)
                + 40 * j2
                - 80 * j3 * r
                + 80 * j4 * r.powi(2)),
        // T2.C9 (label 73)
        60 * dx(f0)
            - (60 * dy(f0) * r - 51 * f0 * f1
                + 66 * f0 * f2 * r
                + 36 * f1.powi(2) * r
                - 72 * f1 * f2 * r.powi(2)
                + 36 * f2.powi(2) * r.powi(3)
                + 60 * j1
                - 80 * j2 * r
                + 80 * j3 * r.powi(2)
                - 80 * j4 * r.powi(3)),
        // T2.C10 (label 74)
        20 * j0
            - (9 * f0.powi(2) - 18 * f0 * f1 * r
                + 18 * f0 * f2 * r.powi(2)
                + 9 * f1.powi(2) * r.powi(2)
                - 18 * f1 * f2 * r.powi(3)
                + 9 * f2.powi(2) * r.powi(4)
                + 20 * j1 * r
                - 20 * j2 * r.powi(2)
                + 20 * j3 * r.powi(3)
                - 20 * j4 * r.powi(4)),
        // T2.C11 (label 75)
        120 * dy(&dy(j3))
            - (216 * dy(f1) * &f2_y + 54 * dy(f1) * f2.powi(2) - 48 * dy(f1) * j4
                + 360 * &f2_yy * &r_y
                + 90 * &f2_yy * f1
                - 180 * &f2_yy * f2 * r
                - 432 * f2_y.powi(2) * r
                + 324 * &f2_y * &r_y * f2
                + 189 * &f2_y * f1 * f2
                - 486 * &f2_y * f2.powi(2) * r
                - 192 * &f2_y * j3
                + 864 * &f2_y * j4 * r
                - 60 * dy(j3) * f2
                + 720 * dy(&dx(j4))
                + 180 * dx(j4) * f2
                - 240 * dy(&j4_y) * r
                - 1200 * &j4_y * &r_y
                + 60 * &j4_y * f2 * r
                + 720 * dx(k6)
                - 720 * dy(k6) * r
                - 5040 * dx(k7) * r
                + 5040 * dy(k7) * r.powi(2)
                + 36 * &r_y * f2.powi(3)
                - 432 * &r_y * f2 * j4
                - 2160 * &r_y * k6
                + 15120 * &r_y * k7 * r
                + 504 * f0 * k7
                + 36 * f1 * f2.powi(3)
                - 102 * f1 * f2 * j4
                - 504 * f1 * k7 * r
                - 72 * f2.powi(4) * r
                - 48 * f2.powi(2) * j3
                + 396 * f2.powi(2) * j4 * r
                + 504 * f2 * k7 * r.powi(2)
                + 136 * j3 * j4
                - 544 * j4.powi(2) * r),
        // T2.C12 (label 76)
        240 * dy(&dy(&dx(j4)))
            + (36 * dy(f1) * &f2_yy + 162 * dy(f1) * &f2_y * f2 - 72 * dy(f1) * &j4_y
                + 36 * dy(f1) * f2.powi(3)
                - 168 * dy(f1) * f2 * j4
                - 72 * dy(f1) * k6
                - 168 * dy(f1) * k7 * r
                - 72 * &f2_yy * &f2_y * r
                + 144 * &f2_yy * &r_y * f2
                + 54 * &f2_yy * f1 * f2
                - 108 * &f2_yy * f2.powi(2) * r
                - 72 * &f2_yy * j3
                + 288 * &f2_yy * j4 * r
                + 432 * f2_y.powi(2) * &r_y
                + 108 * f2_y.powi(2) * f1
                - 540 * f2_y.powi(2) * f2 * r
                - 144 * &f2_y * dy(j3)
                + 528 * &f2_y * dx(j4)
                + 192 * &f2_y * &j4_y * r
                + 324 * &f2_y * &r_y * f2.powi(2)
                - 1008 * &f2_y * &r_y * j4
                + 162 * &f2_y * f1 * f2.powi(2)
                - 132 * &f2_y * f1 * j4
                - 396 * &f2_y * f2.powi(3) * r
                - 180 * &f2_y * f2 * j3
                + 1320 * &f2_y * f2 * j4 * r
                + 144 * &f2_y * k6 * r
                - 336 * &f2_y * k7 * r.powi(2)
                - 36 * dy(j3) * f2.powi(2)
                + 176 * dy(j3) * j4
                + 120 * dy(&dx(j4)) * f2
                + 132 * dx(j4) * f2.powi(2)
                - 432 * dx(j4) * j4
                - 240 * dy(&dy(&j4_y)) * r
                - 960 * dy(&j4_y) * &r_y
                - 120 * dy(&j4_y) * f2 * r
                - 768 * &j4_y * &r_y * f2
                - 138 * &j4_y * f1 * f2
                + 288 * &j4_y * f2.powi(2) * r
                + 184 * &j4_y * j3
                - 1008 * &j4_y * j4 * r
                + 960 * dy(&dx(k6))
                + 240 * dx(k6) * f2
                - 960 * dy(&dy(k6)) * r
                - 3840 * dy(k6) * &r_y
                - 240 * dy(k6) * f2 * r
                - 1920 * dy(&dx(k7)) * r
                - 2400 * dx(&dx(k7))
                + 2880 * dx(k7) * &r_y
                - 600 * dx(k7) * f1
                - 480 * dx(k7) * f2 * r
                + 4320 * dy(&dy(k7)) * r.powi(2)
                + 24000 * dy(k7) * &r_y * r
                + 432 * dy(k7) * f0
                + 168 * dy(k7) * f1 * r
                + 912 * dy(k7) * f2 * r.powi(2)
                + 20160 * r_y.powi(2) * k7
                + 1728 * &r_y * f1 * k7
                + 36 * &r_y * f2.powi(4)
                - 264 * &r_y * f2.powi(2) * j4
                - 1248 * &r_y * f2 * k6
                + 5280 * &r_y * f2 * k7 * r
                + 160 * &r_y * j4.powi(2)
                + 408 * f0 * f2 * k7
                + 150 * f1.powi(2) * k7
                + 27 * f1 * f2.powi(4)
                - 120 * f1 * f2.powi(2) * j4
                - 168 * f1 * f2 * k6
                + 168 * f1 * f2 * k7 * r
                - 54 * f2.powi(5) * r
                - 36 * f2.powi(3) * j3
                + 384 * f2.powi(3) * j4 * r
                + 336 * f2.powi(2) * k6 * r
                - 1344 * f2.powi(2) * k7 * r.powi(2)
                + 160 * f2 * j3 * j4
                - 640 * f2 * j4.powi(2) * r
                - 400 * j2 * k7
                + 224 * j3 * k6
                - 368 * j3 * k7 * r
                - 896 * j4 * k6 * r
                + 3872 * j4 * k7 * r.powi(2)
                + 672 * dy(f0) * k7),
        // T2.C13 (label 77)
        4 * dx(j4)
            - (4 * &j4_y * r - f1 * j4 + 2 * f2 * j4 * r - 4 * k5 + 24 * k6 * r
                - 84 * k7 * r.powi(2)),
        // T2.C14 (label 78)
        60 * dy(&dy(f0))
            + (30 * dy(f0) * f2 + 36 * dy(f1) * f1 - 36 * dy(f1) * f2 * r
                - 60 * &f2_yy * r.powi(2)
                + 24 * &f2_y * f0
                - 36 * &f2_y * f1 * r
                - 54 * &f2_y * f2 * r.powi(2)
                - 40 * dy(j2)
                + 40 * dy(j3) * r
                + 80 * &j4_y * r.powi(2)
                - 36 * &r_y * f1 * f2
                + 36 * &r_y * f2.powi(2) * r
                + 40 * &r_y * j3
                - 80 * &r_y * j4 * r
                + 6 * f0 * f2.powi(2)
                - 6 * f0 * j4
                + 9 * f1.powi(2) * f2
                - 18 * f1 * f2.powi(2) * r
                - 12 * f1 * j3
                + 24 * f1 * j4 * r
                - 6 * f2.powi(3) * r.powi(2)
                - 10 * f2 * j2
                + 22 * f2 * j3 * r
                + 26 * f2 * j4 * r.powi(2)
                - 60 * k4
                + 180 * k5 * r
                - 180 * k6 * r.powi(2)
                - 420 * k7 * r.powi(3)),
        // T2.C15 (label 79)
        20 * dx(j2)
            - (20 * dy(j2) * r + 20 * dx(j3) * r - 20 * dy(j3) * r.powi(2) - 14 * f0 * j3
                + 28 * f0 * j4 * r
                - 5 * f1 * j2
                + 19 * f1 * j3 * r
                - 28 * f1 * j4 * r.powi(2)
                + 10 * f2 * j2 * r
                - 24 * f2 * j3 * r.powi(2)
                + 28 * f2 * j4 * r.powi(3)
                - 120 * k3
                + 360 * k4 * r
                - 640 * k5 * r.powi(2)
                + 840 * k6 * r.powi(3)
                - 840 * k7 * r.powi(4)),
        // T2.C16 (label 80)
        60 * dx(j1)
            - (60 * dy(j1) * r - 40 * dx(j3) * r.powi(2) + 40 * dy(j3) * r.powi(3)
                - 42 * f0 * j2
                + 42 * f0 * j3 * r
                - 70 * f0 * j4 * r.powi(2)
                - 15 * f1 * j1
                + 42 * f1 * j2 * r
                - 52 * f1 * j3 * r.powi(2)
                + 70 * f1 * j4 * r.powi(3)
                + 30 * f2 * j1 * r
                - 42 * f2 * j2 * r.powi(2)
                + 62 * f2 * j3 * r.powi(3)
                - 70 * f2 * j4 * r.powi(4)
                - 600 * k2
                + 1080 * k3 * r
                - 1380 * k4 * r.powi(2)
                + 1700 * k5 * r.powi(3)
                - 2100 * k6 * r.powi(4)
                + 2100 * k7 * r.powi(5)),
        // T2.C17 (label 81)
        80 * k1
            - (3 * f0.powi(2) * f1 - 6 * f0.powi(2) * f2 * r - 6 * f0 * f1.powi(2) * r
                + 18 * f0 * f1 * f2 * r.powi(2)
                - 12 * f0 * f2.powi(2) * r.powi(3)
                - 8 * f0 * j1
                + 16 * f0 * j2 * r
                - 24 * f0 * j3 * r.powi(2)
                + 32 * f0 * j4 * r.powi(3)
                + 3 * f1.powi(3) * r.powi(2)
                - 12 * f1.powi(2) * f2 * r.powi(3)
                + 15 * f1 * f2.powi(2) * r.powi(4)
                + 8 * f1 * j1 * r
                - 16 * f1 * j2 * r.powi(2)
                + 24 * f1 * j3 * r.powi(3)
                - 32 * f1 * j4 * r.powi(4)
                - 6 * f2.powi(3) * r.powi(5)
                - 8 * f2 * j1 * r.powi(2)
                + 16 * f2 * j2 * r.powi(3)
                - 24 * f2 * j3 * r.powi(4)
                + 32 * f2 * j4 * r.powi(5)
                + 160 * k2 * r
                - 240 * k3 * r.powi(2)
                + 320 * k4 * r.powi(3)
                - 400 * k5 * r.powi(4)
                + 480 * k6 * r.powi(5)
                - 560 * k7 * r.powi(6)),
        // T2.C18 (label 82)
        400 * k0
            + (6 * f0.powi(3) - 33 * f0.powi(2) * f1 * r
                + 48 * f0.powi(2) * f2 * r.powi(2)
                + 48 * f0 * f1.powi(2) * r.powi(2)
                - 126 * f0 * f1 * f2 * r.powi(3)
                + 78 * f0 * f2.powi(2) * r.powi(4)
                + 40 * f0 * j1 * r
                - 80 * f0 * j2 * r.powi(2)
                + 120 * f0 * j3 * r.powi(3)
                - 160 * f0 * j4 * r.powi(4)
                - 21 * f1.powi(3) * r.powi(3)
                + 78 * f1.powi(2) * f2 * r.powi(4)
                - 93 * f1 * f2.powi(2) * r.powi(5)
                - 40 * f1 * j1 * r.powi(2)
                + 80 * f1 * j2 * r.powi(3)
                - 120 * f1 * j3 * r.powi(4)
                + 160 * f1 * j4 * r.powi(5)
                + 36 * f2.powi(3) * r.powi(6)
                + 40 * f2 * j1 * r.powi(3)
                - 80 * f2 * j2 * r.powi(4)
                + 120 * f2 * j3 * r.powi(5)
                - 160 * f2 * j4 * r.powi(6)
                - 400 * k2 * r.powi(2)
                + 800 * k3 * r.powi(3)
                - 1200 * k4 * r.powi(4)
                + 1600 * k5 * r.powi(5)
                - 2000 * k6 * r.powi(6)
                + 2400 * k7 * r.powi(7)),
    ]
}

/// Condition ids and their report labels for Candidate II. The label
/// sequence runs 64, 65, 67..82 (66 is unused), kept in bijection with the
/// condition order.
pub fn condition_ids_ii() -> Vec<(String, String)> {
    let labels: Vec<u32> = [64u32, 65].iter().copied().chain(67..=82).collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, eq)| (format!("T2.C{}", i + 1), format!("{}", eq)))
        .collect()
}

/// Decide identical vanishing of a list of expressions by sampling.
///
/// A point is accepted only if every expression evaluates without tripping
/// the singularity guard there; otherwise it is redrawn (up to `10 * M`
/// draws in total). Per point and expression the residual is the evaluated
/// sum; the relative residual normalizes by `1 +` the largest additive term.
/// Exact rational residuals must be literally zero to pass; float residuals
/// pass below `tau`.
pub fn probabilistic_zero_test(
    exprs: &[Ex],
    ids: &[(String, String)],
    candidate: CandidateKind,
    plan: &SamplePlan,
    tau: f64,
) -> Result<ConditionReport, LintestError> {
    plan.validate().map_err(LintestError::BadPlan)?;
    assert_eq!(exprs.len(), ids.len());
    let mut rng = plan.rng();
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut redrawn = 0usize;
    let max_attempts = 10 * plan.points;
    let mut culprits: Vec<String> = Vec::new();

    let mut max_abs = vec![0.0f64; exprs.len()];
    let mut max_rel = vec![0.0f64; exprs.len()];
    let mut pass = vec![true; exprs.len()];

    'points: while accepted < plan.points {
        if attempts >= max_attempts {
            culprits.dedup();
            return Err(LintestError::SamplingExhausted {
                attempts,
                needed: plan.points,
                culprits,
            });
        }
        attempts += 1;
        let (x, y) = plan.draw(&mut rng);
        // evaluate all expressions; reject the point on any singularity
        let mut point_vals = Vec::with_capacity(exprs.len());
        for e in exprs {
            match eval_sum_terms(e, &x, &y, plan.eps_sing) {
                Ok((total, max_term)) => point_vals.push((total, max_term)),
                Err(EvalError::Singular { culprit, .. }) => {
                    redrawn += 1;
                    if culprits.len() < 8 && !culprits.contains(&culprit) {
                        culprits.push(culprit);
                    }
                    continue 'points;
                }
                Err(other) => return Err(other.into()),
            }
        }
        accepted += 1;
        for (k, (total, max_term)) in point_vals.into_iter().enumerate() {
            let abs = total.abs_f64();
            let rel = abs / (1.0 + max_term);
            max_abs[k] = max_abs[k].max(abs);
            max_rel[k] = max_rel[k].max(rel);
            let ok = if total.is_exact() {
                total.is_zero()
            } else {
                rel <= tau
            };
            if !ok {
                pass[k] = false;
            }
        }
    }

    let conditions: Vec<ConditionRecord> = ids
        .iter()
        .enumerate()
        .map(|(k, (id, paper_eq))| ConditionRecord {
            id: id.clone(),
            paper_eq: paper_eq.clone(),
            max_abs: max_abs[k],
            max_rel: max_rel[k],
            pass: pass[k],
        })
        .collect();
    let verdict = if conditions.iter().all(|c| c.pass) {
        Verdict::Linearizable
    } else {
        Verdict::NotLinearizable
    };
    Ok(ConditionReport {
        candidate,
        verdict,
        conditions,
        plan: plan.clone(),
        redrawn,
    })
}

/// Full Candidate I test: build the ten conditions and sample them.
pub fn test_candidate_i(
    c: &CoefficientsI,
    plan: &SamplePlan,
    tau: f64,
) -> Result<ConditionReport, LintestError> {
    probabilistic_zero_test(
        &build_conditions_i(c),
        &condition_ids_i(),
        CandidateKind::I,
        plan,
        tau,
    )
}

/// Full Candidate II test: build the eighteen conditions and sample them.
pub fn test_candidate_ii(
    c: &CoefficientsII,
    plan: &SamplePlan,
    tau: f64,
) -> Result<ConditionReport, LintestError> {
    probabilistic_zero_test(
        &build_conditions_ii(c),
        &condition_ids_ii(),
        CandidateKind::II,
        plan,
        tau,
    )
}
