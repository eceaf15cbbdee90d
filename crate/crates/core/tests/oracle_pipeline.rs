//! Round-trip invariants across the forward oracles, extraction and the
//! JSON pipeline.

use linearize4::candidates::{
    extract_candidate_i, forward_coefficients_i, rhs_from_coefficients_i, CandidateKind,
};
use linearize4::expr::eval_f64;
use linearize4::lintest::Verdict;
use linearize4::pipeline::{run_oracle, run_test, AnalysisRequest, OracleRequest};
use linearize4::sample::SamplePlan;
use linearize4::verify::{chainrule_coefficient_oracle, families};

const BOUNDS: [f64; 4] = [0.5, 2.0, 0.5, 2.0];

#[test]
fn extract_recovers_forward_coefficients() {
    // forward-built rhs -> extraction -> numerically equal coefficients
    let mut rng = SamplePlan::default().rng();
    for _ in 0..25 {
        let (phi, psi, alpha, beta) = families::candidate_i(&mut rng, BOUNDS);
        let fw = forward_coefficients_i(&phi, &psi, &alpha, &beta).unwrap();
        let rhs = rhs_from_coefficients_i(&fw);
        let back = extract_candidate_i(&rhs).unwrap();
        let mut check_rng = SamplePlan::default().rng();
        let plan = SamplePlan::default();
        let mut accepted = 0;
        let mut draws = 0;
        while accepted < 20 && draws < 200 {
            draws += 1;
            let (x, y) = plan.draw(&mut check_rng);
            let (xf, yf) = (x.to_f64(), y.to_f64());
            // points where the map degenerates get redrawn, as in the tester
            let mut ok_point = true;
            for ((name, a), (_, b)) in fw.named().iter().zip(back.named().iter()) {
                let (va, vb) = match (eval_f64(a, xf, yf, 1e-9), eval_f64(b, xf, yf, 1e-9)) {
                    (Ok(va), Ok(vb)) => (va, vb),
                    _ => {
                        ok_point = false;
                        break;
                    }
                };
                assert!(
                    (va - vb).abs() <= 1e-9 * (1.0 + va.abs()),
                    "{} at ({}, {}): {} vs {}",
                    name,
                    xf,
                    yf,
                    va,
                    vb
                );
            }
            if ok_point {
                accepted += 1;
            }
        }
        assert!(accepted >= 20, "only {} usable points", accepted);
    }
}

#[test]
fn oracle_test_pipeline_100_seeds() {
    // generated coefficient file -> test verdict linearizable, through the
    // printed/parsed JSON representation
    let mut rng = SamplePlan::default().rng();
    for seed in 0..100u64 {
        let (phi, psi, alpha, beta) = families::candidate_i(&mut rng, BOUNDS);
        let json = run_oracle(&OracleRequest {
            phi: phi.to_string(),
            psi: psi.to_string(),
            alpha: alpha.to_string(),
            beta: beta.to_string(),
            parameters: Default::default(),
        })
        .unwrap();
        let mut req = AnalysisRequest::from_json(&json).unwrap();
        req.sample_plan = Some(linearize4::pipeline::SamplePlanSpec {
            bounds: None,
            points: Some(15),
            seed: Some(seed),
            eps_sing: None,
        });
        let report = run_test(&req, None).unwrap();
        assert_eq!(
            report.verdict,
            Verdict::Linearizable,
            "seed {}: map ({}, {})",
            seed,
            phi,
            psi
        );
    }
}

#[test]
fn all_zero_candidate_ii_is_pullback_of_trivial_equation() {
    // the swap map (t, u) = (y, x) with alpha = beta = 0 produces exactly the
    // all-zero coefficient table, checked through the chain-rule oracle
    let samples = chainrule_coefficient_oracle(
        &linearize4::expr::Ex::y(),
        &linearize4::expr::Ex::x(),
        &linearize4::expr::Ex::zero(),
        &linearize4::expr::Ex::zero(),
        CandidateKind::II,
        &[(0.8, 1.4), (1.7, 0.6), (1.1, 1.1)],
        1e-9,
    )
    .unwrap();
    for point in samples {
        for (k, v) in point.iter().enumerate() {
            assert!(v.abs() < 1e-12, "sample {} = {}", k, v);
        }
    }
}
