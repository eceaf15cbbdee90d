//! Pushforward consistency: transported derivatives against numerical
//! differentiation of u(t) along a trace.

use linearize4::candidates::CoefficientsI;
use linearize4::expr::{parse_expr, Ex};
use linearize4::verify::{pushforward, trace_solution, ClosedMap, Equation, TransformJets};
use std::collections::BTreeSet;

#[test]
fn pushforward_agrees_with_numeric_differentiation_along_trace() {
    // Example 1 equation, map (t, u) = (x, x^2 y^2): t equals x, so u(t) can
    // be differenced directly on a fine x-grid of the trace.
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
    let eq = Equation::I(c);
    let bounds = [0.5, 2.0, 0.5, 2.0];
    let trace = trace_solution(&eq, 0.7, [1.0, 0.6, 0.1, -0.2], bounds, 1e-9);
    assert!(trace.states.len() > 8, "short trace: {}", trace.states.len());

    let map = ClosedMap {
        phi: Ex::x(),
        psi: p("x^2*y^2"),
        eps: 1e-9,
    };

    // u(t) sampled by pushing forward nearby states via dense re-simulation:
    // differentiate the pushed u-values with a 5-point stencil in t = x.
    let h = 5e-3;
    let mut checked = 0;
    for st in trace.states.iter().skip(2).step_by(3) {
        // build u(x) on the stencil by re-tracing from this state
        let stencil: Vec<f64> = (-2..=2).map(|k| st.x + k as f64 * h).collect();
        let mut u_vals = Vec::new();
        for &xs in &stencil {
            // integrate from the state to xs (short hop)
            let hop = trace_solution(
                &eq,
                st.x,
                [st.y, st.y1, st.y2, st.y3],
                [st.x.min(xs) - 0.1, xs.max(st.x) + 1e-9, 0.0, 10.0],
                1e-9,
            );
            // evaluate y(xs) by taking the last state when xs > st.x, or
            // integrate backwards via small negative span
            let ylast = if (xs - st.x).abs() < 1e-14 {
                st.y
            } else {
                // fine fixed-step integration for the short hop
                let mut y = [st.y, st.y1, st.y2, st.y3];
                let n = 40;
                let dx = (xs - st.x) / n as f64;
                for i in 0..n {
                    let x0 = st.x + i as f64 * dx;
                    let f = |x: f64, s: [f64; 4]| -> [f64; 4] {
                        let y4 = eq.y4(x, s[0], [s[1], s[2], s[3]], 1e-9).unwrap();
                        [s[1], s[2], s[3], y4]
                    };
                    // classical RK4 step
                    let k1 = f(x0, y);
                    let mid1 = std::array::from_fn(|d| y[d] + 0.5 * dx * k1[d]);
                    let k2 = f(x0 + 0.5 * dx, mid1);
                    let mid2 = std::array::from_fn(|d| y[d] + 0.5 * dx * k2[d]);
                    let k3 = f(x0 + 0.5 * dx, mid2);
                    let end = std::array::from_fn(|d| y[d] + dx * k3[d]);
                    let k4 = f(x0 + dx, end);
                    for d in 0..4 {
                        y[d] += dx / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                    }
                }
                let _ = hop;
                y[0]
            };
            u_vals.push(xs * xs * ylast * ylast);
        }
        let (pj, sj) = map.jets_at(st.x, st.y).unwrap();
        let pushed = pushforward(&pj, &sj, st).unwrap();
        let u1_fd = (u_vals[0] - 8.0 * u_vals[1] + 8.0 * u_vals[3] - u_vals[4]) / (12.0 * h);
        let u2_fd = (-u_vals[0] + 16.0 * u_vals[1] - 30.0 * u_vals[2] + 16.0 * u_vals[3]
            - u_vals[4])
            / (12.0 * h * h);
        let rel1 = (pushed.u1 - u1_fd).abs() / (1.0 + pushed.u1.abs());
        let rel2 = (pushed.u2 - u2_fd).abs() / (1.0 + pushed.u2.abs());
        assert!(rel1 < 1e-4, "u' mismatch at x = {}: {} vs {}", st.x, pushed.u1, u1_fd);
        assert!(rel2 < 1e-4, "u'' mismatch at x = {}: {} vs {}", st.x, pushed.u2, u2_fd);
        checked += 1;
    }
    assert!(checked >= 3, "too few interior checks: {}", checked);
}
