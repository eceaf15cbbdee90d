//! Request/report plumbing: the JSON schema the CLI and the Python bindings
//! both speak, and the drivers that run classify → test → construct → verify.

use crate::candidates::{
    classify, forward_coefficients_i, forward_coefficients_ii,
    CandidateKind, Classified, CoefficientsI, CoefficientsII, GridMap, PointMap,
};
use crate::construct::{
    construct_candidate_i, construct_candidate_ii, ConstructError, ConstructOpts, ConstructionI,
    PsiSolutionI, SeedsII,
};
use crate::expr::{parse_expr, parse_rhs, Ex};
use crate::lintest::{
    test_candidate_i, test_candidate_ii, ConditionReport, LintestError, Verdict, TAU_PASS,
};
use crate::number::Number;
use crate::sample::SamplePlan;
use crate::construct::{riccati_rhs, MapJetsI};
use crate::verify::{roundtrip_check, ClosedMap, Equation, VerifyError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, Deserialize)]
pub struct AnalysisRequest {
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub rhs: Option<String>,
    #[serde(rename = "candidateI")]
    pub candidate_i: Option<BTreeMap<String, String>>,
    #[serde(rename = "candidateII")]
    pub candidate_ii: Option<BTreeMap<String, String>>,
    #[serde(rename = "samplePlan")]
    pub sample_plan: Option<SamplePlanSpec>,
    pub construct: Option<ConstructSpec>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct SamplePlanSpec {
    #[serde(rename = "box")]
    pub bounds: Option<[f64; 4]>,
    pub points: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "epsSing")]
    pub eps_sing: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct ConstructSpec {
    pub chi0: Option<f64>,
    pub grid: Option<usize>,
    pub seeds: Option<SeedsII>,
}

impl AnalysisRequest {
    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::BadRequest(e.to_string()))
    }

    pub fn plan(&self) -> SamplePlan {
        let mut plan = SamplePlan::default();
        if let Some(spec) = &self.sample_plan {
            if let Some(b) = spec.bounds {
                plan.bounds = b;
            }
            if let Some(p) = spec.points {
                plan.points = p;
            }
            if let Some(s) = spec.seed {
                plan.seed = s;
            }
            if let Some(e) = spec.eps_sing {
                plan.eps_sing = e;
            }
        }
        plan
    }

    fn construct_opts(&self) -> (ConstructOpts, Option<SeedsII>) {
        let mut opts = ConstructOpts::default();
        let mut seeds = None;
        if let Some(spec) = &self.construct {
            if let Some(chi0) = spec.chi0 {
                opts.chi0 = chi0;
            }
            if let Some(g) = spec.grid {
                opts.grid = g.max(3);
            }
            seeds = spec.seeds.clone();
        }
        (opts, seeds)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("request must carry exactly one equation source (rhs, candidateI or candidateII)")]
    SourceCount,
    #[error("parse error in `{field}`: {err}")]
    Parse { field: String, err: String },
    #[error("unknown coefficient key `{0}`")]
    UnknownKey(String),
    #[error("unbound parameters: {0:?}")]
    UnboundParams(Vec<String>),
    #[error("equation is outside the testable forms: {0}")]
    NotAForm(String),
    #[error(transparent)]
    Lintest(#[from] LintestError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Coefficient bundle after source resolution and parameter binding.
pub enum ResolvedEquation {
    I(CoefficientsI),
    II(CoefficientsII),
}

const KEYS_I: [&str; 11] = [
    "A1", "A0", "B0", "C2", "C1", "C0", "D4", "D3", "D2", "D1", "D0",
];
const KEYS_II: [&str; 20] = [
    "r", "F2", "F1", "F0", "H2", "H1", "H0", "J4", "J3", "J2", "J1", "J0", "K7", "K6", "K5",
    "K4", "K3", "K2", "K1", "K0",
];

/// Resolve the request's equation source into a coefficient bundle with all
/// parameters bound.
pub fn resolve_equation(req: &AnalysisRequest) -> Result<ResolvedEquation, PipelineError> {
    let sources =
        req.rhs.is_some() as u8 + req.candidate_i.is_some() as u8 + req.candidate_ii.is_some() as u8;
    if sources != 1 {
        return Err(PipelineError::SourceCount);
    }
    let params: std::collections::BTreeSet<String> = req.parameters.keys().cloned().collect();
    let bindings: Vec<(String, Number)> = req
        .parameters
        .iter()
        .map(|(k, v)| (k.clone(), Number::rat_from_f64(*v)))
        .collect();

    let parse_bound = |field: &str, src: &str, rhs_mode: bool| -> Result<Ex, PipelineError> {
        let e = if rhs_mode {
            parse_rhs(src, &params)
        } else {
            parse_expr(src, &params)
        }
        .map_err(|err| PipelineError::Parse {
            field: field.to_string(),
            err: err.to_string(),
        })?;
        let e = e.bind_params(&bindings);
        let left = e.params();
        if !left.is_empty() {
            return Err(PipelineError::UnboundParams(left.into_iter().collect()));
        }
        Ok(e)
    };

    if let Some(rhs_src) = &req.rhs {
        let rhs = parse_bound("rhs", rhs_src, true)?;
        return match classify(&rhs) {
            Classified::CandidateI(c) => Ok(ResolvedEquation::I(*c)),
            Classified::NeitherForm(report) => Err(PipelineError::NotAForm(report.to_string())),
        };
    }

    if let Some(table) = &req.candidate_i {
        for k in table.keys() {
            if !KEYS_I.contains(&k.as_str()) {
                return Err(PipelineError::UnknownKey(k.clone()));
            }
        }
        let get = |k: &str| -> Result<Ex, PipelineError> {
            match table.get(k) {
                Some(src) => parse_bound(k, src, false),
                None => Ok(Ex::zero()),
            }
        };
        return Ok(ResolvedEquation::I(CoefficientsI {
            a1: get("A1")?,
            a0: get("A0")?,
            b0: get("B0")?,
            c2: get("C2")?,
            c1: get("C1")?,
            c0: get("C0")?,
            d4: get("D4")?,
            d3: get("D3")?,
            d2: get("D2")?,
            d1: get("D1")?,
            d0: get("D0")?,
        }));
    }

    let table = req.candidate_ii.as_ref().unwrap();
    for k in table.keys() {
        if !KEYS_II.contains(&k.as_str()) {
            return Err(PipelineError::UnknownKey(k.clone()));
        }
    }
    let get = |k: &str| -> Result<Ex, PipelineError> {
        match table.get(k) {
            Some(src) => parse_bound(k, src, false),
            None => Ok(Ex::zero()),
        }
    };
    Ok(ResolvedEquation::II(CoefficientsII {
        r: get("r")?,
        f2: get("F2")?,
        f1: get("F1")?,
        f0: get("F0")?,
        h2: get("H2")?,
        h1: get("H1")?,
        h0: get("H0")?,
        j4: get("J4")?,
        j3: get("J3")?,
        j2: get("J2")?,
        j1: get("J1")?,
        j0: get("J0")?,
        k7: get("K7")?,
        k6: get("K6")?,
        k5: get("K5")?,
        k4: get("K4")?,
        k3: get("K3")?,
        k2: get("K2")?,
        k1: get("K1")?,
        k0: get("K0")?,
    }))
}

// ----- reports ----------------------------------------------------------------

#[derive(Serialize, Debug)]
pub struct TransformReport {
    pub kind: CandidateKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMap>,
}

#[derive(Serialize, Debug)]
pub struct AlphaBetaReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    /// `(t, alpha, beta)` rows.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<(f64, f64, f64)>,
    /// Values at the middle of the t-range, for quick reading.
    #[serde(rename = "alphaMid")]
    pub alpha_mid: f64,
    #[serde(rename = "betaMid")]
    pub beta_mid: f64,
}

#[derive(Serialize, Debug)]
pub struct Report {
    pub verdict: Verdict,
    pub conditions: Vec<crate::lintest::ConditionRecord>,
    pub redrawn: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformReport>,
    #[serde(rename = "alphaBeta", skip_serializing_if = "Option::is_none")]
    pub alpha_beta: Option<AlphaBetaReport>,
    #[serde(rename = "roundtripResidual", skip_serializing_if = "Option::is_none")]
    pub roundtrip_residual: Option<f64>,
}

impl Report {
    pub fn from_conditions(r: &ConditionReport) -> Report {
        Report {
            verdict: r.verdict,
            conditions: r.conditions.clone(),
            redrawn: r.redrawn,
            transform: None,
            alpha_beta: None,
            roundtrip_residual: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Run the linearizability test for a request.
pub fn run_test(req: &AnalysisRequest, tau: Option<f64>) -> Result<Report, PipelineError> {
    let plan = req.plan();
    let tau = tau.unwrap_or(TAU_PASS);
    let report = match resolve_equation(req)? {
        ResolvedEquation::I(c) => test_candidate_i(&c, &plan, tau)?,
        ResolvedEquation::II(c) => test_candidate_ii(&c, &plan, tau)?,
    };
    Ok(Report::from_conditions(&report))
}

/// Run test + construction + round-trip verification for a request.
pub fn run_construct(req: &AnalysisRequest, tau: Option<f64>) -> Result<Report, PipelineError> {
    let plan = req.plan();
    let tau = tau.unwrap_or(TAU_PASS);
    let (opts, seeds) = req.construct_opts();
    let mut opts = opts;
    opts.eps = plan.eps_sing;
    match resolve_equation(req)? {
        ResolvedEquation::I(c) => {
            let cond = test_candidate_i(&c, &plan, tau)?;
            let mut report = Report::from_conditions(&cond);
            if cond.verdict != Verdict::Linearizable {
                return Ok(report);
            }
            let built = construct_candidate_i(&c, plan.bounds, &opts)?;
            let residual = roundtrip_residual_i(&c, &built, plan.bounds, plan.seed, plan.eps_sing)?;
            report.transform = Some(TransformReport {
                kind: CandidateKind::I,
                phi: built.phi.closed().map(|e| e.to_string()),
                psi: match &built.psi {
                    PsiSolutionI::Closed(e) => Some(e.to_string()),
                    PsiSolutionI::ClosedPlusH { base, .. } => {
                        Some(format!("{} + h(x) [sampled]", base))
                    }
                },
                chi0: Some(built.chi0_used),
                grid: None,
            });
            report.alpha_beta = Some(alpha_beta_report(&built.target, plan.bounds)?);
            report.roundtrip_residual = residual;
            Ok(report)
        }
        ResolvedEquation::II(c) => {
            let cond = test_candidate_ii(&c, &plan, tau)?;
            let mut report = Report::from_conditions(&cond);
            if cond.verdict != Verdict::Linearizable {
                return Ok(report);
            }
            let built = construct_candidate_ii(&c, plan.bounds, seeds, &opts)?;
            let rt = roundtrip_check(
                &Equation::II(c.clone()),
                &built.map,
                &built.target,
                5,
                plan.bounds,
                plan.seed,
                plan.eps_sing,
            )?;
            report.transform = Some(TransformReport {
                kind: CandidateKind::II,
                phi: None,
                psi: None,
                chi0: None,
                grid: Some(built.grid.clone()),
            });
            report.alpha_beta = Some(alpha_beta_report(&built.target, plan.bounds)?);
            report.roundtrip_residual = Some(rt.max_residual);
            Ok(report)
        }
    }
}

fn alpha_beta_report(
    target: &crate::candidates::LinearTarget,
    bounds: [f64; 4],
) -> Result<AlphaBetaReport, PipelineError> {
    let t_mid = 0.5 * (bounds[0] + bounds[1]);
    let t_probe = if target.samples.is_empty() {
        t_mid
    } else {
        let n = target.samples.len();
        target.samples[n / 2].0
    };
    let (a, b) = target
        .eval(t_probe)
        .map_err(|e| PipelineError::BadRequest(e))?;
    Ok(AlphaBetaReport {
        alpha: target.closed.as_ref().map(|(a, _)| a.to_string()),
        beta: target.closed.as_ref().map(|(_, b)| b.to_string()),
        samples: target.samples.clone(),
        alpha_mid: a,
        beta_mid: b,
    })
}

fn roundtrip_residual_i(
    c: &CoefficientsI,
    built: &ConstructionI,
    bounds: [f64; 4],
    seed: u64,
    eps: f64,
) -> Result<Option<f64>, PipelineError> {
    // closed maps verify through jet evaluation; sampled phi/psi go through
    // the relation-based jets
    let eq = Equation::I(c.clone());
    let report = match built.closed_map() {
        Some(PointMap::Closed { phi, psi, .. }) => roundtrip_check(
            &eq,
            &ClosedMap { phi, psi, eps },
            &built.target,
            5,
            bounds,
            seed,
            eps,
        )?,
        _ => {
            let wrap = MapJetsI {
                construction: built,
                rhs: riccati_rhs(c),
                eps,
            };
            roundtrip_check(&eq, &wrap, &built.target, 5, bounds, seed, eps)?
        }
    };
    Ok(Some(report.max_residual))
}

// ----- oracle -------------------------------------------------------------------

#[derive(Clone, Debug, Deserialize)]
pub struct OracleRequest {
    pub phi: String,
    pub psi: String,
    #[serde(default = "zero_string")]
    pub alpha: String,
    #[serde(default = "zero_string")]
    pub beta: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

fn zero_string() -> String {
    "0".into()
}

/// Generate a structured coefficient request from a known transformation:
/// the forward oracle as a test-data generator. Returns the JSON text of an
/// [`AnalysisRequest`] carrying the candidateI or candidateII table.
pub fn run_oracle(req: &OracleRequest) -> Result<String, PipelineError> {
    let params: std::collections::BTreeSet<String> = req.parameters.keys().cloned().collect();
    let bindings: Vec<(String, Number)> = req
        .parameters
        .iter()
        .map(|(k, v)| (k.clone(), Number::rat_from_f64(*v)))
        .collect();
    let parse = |field: &str, src: &str| -> Result<Ex, PipelineError> {
        parse_expr(src, &params)
            .map(|e| e.bind_params(&bindings))
            .map_err(|err| PipelineError::Parse {
                field: field.into(),
                err: err.to_string(),
            })
    };
    let phi = parse("phi", &req.phi)?;
    let psi = parse("psi", &req.psi)?;
    let alpha = parse("alpha", &req.alpha)?;
    let beta = parse("beta", &req.beta)?;

    let mut table = serde_json::Map::new();
    let key = if phi.contains(&crate::expr::Var::Y) {
        let c = forward_coefficients_ii(&phi, &psi, &alpha, &beta)
            .map_err(|e| PipelineError::BadRequest(e.to_string()))?;
        for (name, e) in c.named() {
            table.insert(name.to_string(), serde_json::Value::String(e.to_string()));
        }
        "candidateII"
    } else {
        let c = forward_coefficients_i(&phi, &psi, &alpha, &beta)
            .map_err(|e| PipelineError::BadRequest(e.to_string()))?;
        for (name, e) in c.named() {
            table.insert(name.to_string(), serde_json::Value::String(e.to_string()));
        }
        "candidateI"
    };
    let mut root = serde_json::Map::new();
    root.insert(key.to_string(), serde_json::Value::Object(table));
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(root)).unwrap())
}

// ----- verify ---------------------------------------------------------------------

#[derive(Clone, Debug, Deserialize)]
pub struct VerifyRequest {
    #[serde(flatten)]
    pub equation: AnalysisRequest,
    pub phi: String,
    pub psi: String,
    #[serde(default = "zero_string")]
    pub alpha: String,
    #[serde(default = "zero_string")]
    pub beta: String,
    #[serde(default = "default_traces")]
    pub traces: usize,
}

fn default_traces() -> usize {
    5
}

/// Round-trip verification of a user-supplied closed transformation against a
/// user-supplied equation.
pub fn run_verify(req: &VerifyRequest) -> Result<Report, PipelineError> {
    let plan = req.equation.plan();
    let params: std::collections::BTreeSet<String> =
        req.equation.parameters.keys().cloned().collect();
    let bindings: Vec<(String, Number)> = req
        .equation
        .parameters
        .iter()
        .map(|(k, v)| (k.clone(), Number::rat_from_f64(*v)))
        .collect();
    let parse = |field: &str, src: &str| -> Result<Ex, PipelineError> {
        parse_expr(src, &params)
            .map(|e| e.bind_params(&bindings))
            .map_err(|err| PipelineError::Parse {
                field: field.into(),
                err: err.to_string(),
            })
    };
    let map = ClosedMap {
        phi: parse("phi", &req.phi)?,
        psi: parse("psi", &req.psi)?,
        eps: plan.eps_sing,
    };
    let alpha = parse("alpha", &req.alpha)?;
    let beta = parse("beta", &req.beta)?;
    let target = crate::candidates::LinearTarget::closed(alpha, beta);
    let eq = match resolve_equation(&req.equation)? {
        ResolvedEquation::I(c) => Equation::I(c),
        ResolvedEquation::II(c) => Equation::II(c),
    };
    let rt = roundtrip_check(
        &eq,
        &map,
        &target,
        req.traces,
        plan.bounds,
        plan.seed,
        plan.eps_sing,
    )?;
    Ok(Report {
        verdict: Verdict::Linearizable,
        conditions: vec![],
        redrawn: 0,
        transform: None,
        alpha_beta: None,
        roundtrip_residual: Some(rt.max_residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_or_two_sources() {
        let req = AnalysisRequest::default();
        assert!(matches!(
            resolve_equation(&req),
            Err(PipelineError::SourceCount)
        ));
        let mut req = AnalysisRequest::default();
        req.rhs = Some("0".into());
        req.candidate_i = Some(BTreeMap::new());
        assert!(matches!(
            resolve_equation(&req),
            Err(PipelineError::SourceCount)
        ));
    }

    #[test]
    fn empty_candidate_i_table_is_all_zero() {
        let mut req = AnalysisRequest::default();
        req.candidate_i = Some(BTreeMap::new());
        let report = run_test(&req, None).unwrap();
        assert_eq!(report.verdict, Verdict::Linearizable);
        assert_eq!(report.conditions.len(), 10);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut req = AnalysisRequest::default();
        let mut table = BTreeMap::new();
        table.insert("A9".to_string(), "0".to_string());
        req.candidate_i = Some(table);
        assert!(matches!(
            resolve_equation(&req),
            Err(PipelineError::UnknownKey(_))
        ));
    }

    #[test]
    fn oracle_roundtrip_through_json() {
        let oreq = OracleRequest {
            phi: "x".into(),
            psi: "x^2*y^2".into(),
            alpha: "0".into(),
            beta: "1".into(),
            parameters: BTreeMap::new(),
        };
        let json = run_oracle(&oreq).unwrap();
        let req = AnalysisRequest::from_json(&json).unwrap();
        let report = run_test(&req, None).unwrap();
        assert_eq!(report.verdict, Verdict::Linearizable);
    }
}
