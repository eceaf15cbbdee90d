//! Runge-Kutta integrators: an adaptive Dormand-Prince 5(4) pair with dense
//! output for the Riccati / quadrature / trace work, and a fixed-step
//! classical RK4 for grid marching.

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OdeError {
    #[error("solution blew up near x = {x:.6} (|state| > {limit:.1e})")]
    BlowUp { x: f64, limit: f64 },
    #[error("step size underflow near x = {x:.6}")]
    StepUnderflow { x: f64 },
    #[error("right-hand side not evaluable at x = {x:.6}: {why}")]
    RhsFailed { x: f64, why: String },
}

#[derive(Clone, Debug)]
pub struct AdaptiveOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Hard ceiling on the step so the Hermite dense output stays sharp.
    pub h_max: f64,
    pub max_state: f64,
}

impl AdaptiveOpts {
    pub fn tight(span: f64) -> Self {
        AdaptiveOpts {
            rtol: 1e-11,
            atol: 1e-12,
            h_max: span.abs() / 128.0,
            max_state: 1e8,
        }
    }
}

/// Accepted-step skeleton of a solution, interpolated by cubic Hermite
/// segments (states and slopes at both ends of every step).
#[derive(Clone, Debug)]
pub struct DenseOutput {
    pub xs: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
}

impl DenseOutput {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn x_start(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_end(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        if n < 2 {
            return 0;
        }
        let fwd = self.xs[n - 1] > self.xs[0];
        let i = if fwd {
            self.xs.partition_point(|&v| v < x)
        } else {
            self.xs.partition_point(|&v| v > x)
        };
        i.clamp(1, n - 1) - 1
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        if self.xs.len() == 1 {
            return self.states[0].clone();
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let s = if h != 0.0 { (x - x0) / h } else { 0.0 };
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (0..self.dim())
            .map(|k| {
                h00 * self.states[i][k]
                    + h10 * h * self.slopes[i][k]
                    + h01 * self.states[i + 1][k]
                    + h11 * h * self.slopes[i + 1][k]
            })
            .collect()
    }

    pub fn eval_component(&self, x: f64, k: usize) -> f64 {
        self.eval(x)[k]
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4). `f(x, state, out)` returns false when the
/// right side is not evaluable there (singular coefficient, left domain).
/// `x1 < x0` integrates backwards.
pub fn dp45<F>(
    f: F,
    x0: f64,
    x1: f64,
    y0: &[f64],
    opts: &AdaptiveOpts,
) -> Result<DenseOutput, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let (dense, status) = dp45_partial(f, x0, x1, y0, opts);
    status.map(|_| dense)
}

/// Like [`dp45`] but always returns the portion integrated so far, alongside
/// the reason integration stopped early (if it did).
pub fn dp45_partial<F>(
    mut f: F,
    x0: f64,
    x1: f64,
    y0: &[f64],
    opts: &AdaptiveOpts,
) -> (DenseOutput, Result<(), OdeError>)
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let dim = y0.len();
    let span = x1 - x0;
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut h = (opts.h_max * 0.5).min(span.abs()).max(1e-12) * dir;
    let h_min = span.abs() * 1e-14 + 1e-300;

    let mut k = vec![vec![0.0; dim]; 7];
    let mut out = DenseOutput {
        xs: vec![x0],
        states: vec![y.clone()],
        slopes: Vec::new(),
    };
    let mut s0 = vec![0.0; dim];
    if !f(x, &y, &mut s0) {
        out.slopes.push(vec![0.0; dim]);
        return (
            out,
            Err(OdeError::RhsFailed {
                x,
                why: "singular right-hand side at the initial point".into(),
            }),
        );
    }
    out.slopes.push(s0);

    let done = |x: f64| -> bool { (x - x1) * dir >= -1e-15 * span.abs() };

    while !done(x) {
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        if h.abs() < h_min {
            return (out, Err(OdeError::StepUnderflow { x }));
        }
        k[0] = out.slopes.last().unwrap().clone();
        let mut failed_stage = false;
        for s in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                let a = A[s][j];
                if a != 0.0 {
                    for d in 0..dim {
                        ys[d] += h * a * kj[d];
                    }
                }
            }
            let mut ks = vec![0.0; dim];
            if !f(x + C[s] * h, &ys, &mut ks) {
                failed_stage = true;
                break;
            }
            k[s + 1] = ks;
        }
        if failed_stage {
            h *= 0.5;
            if h.abs() < h_min {
                return (out, Err(OdeError::StepUnderflow { x }));
            }
            continue;
        }
        let mut y5 = y.clone();
        let mut err = 0.0f64;
        for d in 0..dim {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for s in 0..7 {
                acc5 += B5[s] * k[s][d];
                acc4 += B4[s] * k[s][d];
            }
            y5[d] += h * acc5;
            let e = h * (acc5 - acc4);
            let sc = opts.atol + opts.rtol * y[d].abs().max(y5[d].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 && y5.iter().all(|v| v.is_finite()) {
            x += h;
            y = y5;
            if y.iter().any(|v| v.abs() > opts.max_state) {
                return (
                    out,
                    Err(OdeError::BlowUp {
                        x,
                        limit: opts.max_state,
                    }),
                );
            }
            let mut slope = vec![0.0; dim];
            if !f(x, &y, &mut slope) {
                return (
                    out,
                    Err(OdeError::RhsFailed {
                        x,
                        why: "singular right-hand side".into(),
                    }),
                );
            }
            out.xs.push(x);
            out.states.push(y.clone());
            out.slopes.push(slope);
        }
        let fac = if err == 0.0 || !err.is_finite() {
            if err == 0.0 {
                5.0
            } else {
                0.2
            }
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
        if h.abs() > opts.h_max {
            h = opts.h_max * dir;
        }
        if h == 0.0 || h.signum() != dir {
            h = h_min * dir;
        }
    }
    (out, Ok(()))
}

/// Fixed-step classical RK4 from `x0` to `x1` in `n` steps, returning the
/// final state. The right side must be evaluable everywhere on the way.
pub fn rk4_final<F>(mut f: F, x0: f64, x1: f64, y0: &[f64], n: usize) -> Result<Vec<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let dim = y0.len();
    let h = (x1 - x0) / n as f64;
    let mut y = y0.to_vec();
    let mut x = x0;
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let fail = |x: f64| OdeError::RhsFailed {
        x,
        why: "singular right-hand side".into(),
    };
    for step in 0..n {
        if !f(x, &y, &mut k1) {
            return Err(fail(x));
        }
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k1[d];
        }
        if !f(x + 0.5 * h, &tmp, &mut k2) {
            return Err(fail(x + 0.5 * h));
        }
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k2[d];
        }
        if !f(x + 0.5 * h, &tmp, &mut k3) {
            return Err(fail(x + 0.5 * h));
        }
        for d in 0..dim {
            tmp[d] = y[d] + h * k3[d];
        }
        if !f(x + h, &tmp, &mut k4) {
            return Err(fail(x + h));
        }
        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        x = x0 + (step + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::BlowUp { x, limit: f64::MAX });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let sol = dp45(
            |_, y, out| {
                out[0] = y[0];
                true
            },
            0.0,
            1.0,
            &[1.0],
            &AdaptiveOpts::tight(1.0),
        )
        .unwrap();
        let got = sol.states.last().unwrap()[0];
        assert!((got - std::f64::consts::E).abs() < 1e-9);
        let mid = sol.eval_component(0.5, 0);
        assert!((mid - 0.5f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn backwards_integration() {
        // y' = -y from x=1 back to 0: y(x) = e^{-x}, so y(0) = 1
        let sol = dp45(
            |_, y, out| {
                out[0] = -y[0];
                true
            },
            1.0,
            0.0,
            &[(-1.0f64).exp()],
            &AdaptiveOpts::tight(1.0),
        )
        .unwrap();
        let got = sol.states.last().unwrap()[0];
        assert!((got - 1.0).abs() < 1e-9);
    }

    #[test]
    fn riccati_blowup_detected() {
        // chi' = chi^2 + 1 escapes at pi/2
        let err = dp45(
            |_, y, out| {
                out[0] = y[0] * y[0] + 1.0;
                true
            },
            0.0,
            3.0,
            &[0.0],
            &AdaptiveOpts {
                rtol: 1e-10,
                atol: 1e-12,
                h_max: 0.05,
                max_state: 1e8,
            },
        )
        .unwrap_err();
        let near_pole = |x: f64| (x - std::f64::consts::FRAC_PI_2).abs() < 0.1;
        match err {
            OdeError::BlowUp { x, .. } | OdeError::StepUnderflow { x } => {
                assert!(near_pole(x), "stopped at x = {}", x)
            }
            other => panic!("expected blow-up, got {:?}", other),
        }
    }

    #[test]
    fn rk4_quartic_exact() {
        let y = rk4_final(
            |x, _, out| {
                out[0] = 4.0 * x * x * x;
                true
            },
            0.0,
            2.0,
            &[0.0],
            8,
        )
        .unwrap();
        assert!((y[0] - 16.0).abs() < 1e-12);
    }
}
