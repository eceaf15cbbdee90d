//! Exact symbolic partial differentiation with respect to `x` or `y`.

use super::{Ex, Expr, Func, Var};

/// Partial derivative of `e` with respect to `v` (one of `x`, `y`).
///
/// Builds a fresh tree through the smart constructors, so vanishing branches
/// fold away; the input is never mutated.
pub fn diff(e: &Ex, v: &Var) -> Ex {
    assert!(
        matches!(v, Var::X | Var::Y),
        "can only differentiate with respect to x or y"
    );
    match &*e.0 {
        Expr::Const(_) => Ex::zero(),
        Expr::Var(w) => {
            if w == v {
                Ex::one()
            } else {
                Ex::zero()
            }
        }
        Expr::Neg(a) => -diff(&Ex(a.clone()), v),
        Expr::Add(a, b) => diff(&Ex(a.clone()), v) + diff(&Ex(b.clone()), v),
        Expr::Sub(a, b) => diff(&Ex(a.clone()), v) - diff(&Ex(b.clone()), v),
        Expr::Mul(a, b) => {
            let (a, b) = (Ex(a.clone()), Ex(b.clone()));
            diff(&a, v) * &b + &a * diff(&b, v)
        }
        Expr::Div(a, b) => {
            let (a, b) = (Ex(a.clone()), Ex(b.clone()));
            (diff(&a, v) * &b - &a * diff(&b, v)) / b.powi(2)
        }
        Expr::PowI(a, n) => {
            let a = Ex(a.clone());
            Ex::num(*n) * a.powi(n - 1) * diff(&a, v)
        }
        Expr::Pow(a, b) => {
            // d(a^b) = a^b * (b' log a + b a'/a)
            let (a, b) = (Ex(a.clone()), Ex(b.clone()));
            let e = a.pow(&b);
            e * (diff(&b, v) * a.log() + &b * diff(&a, v) / &a)
        }
        Expr::Func(f, a) => {
            let a = Ex(a.clone());
            let outer = match f {
                Func::Sin => Ex::func(Func::Cos, &a),
                Func::Cos => -Ex::func(Func::Sin, &a),
                Func::Exp => Ex::func(Func::Exp, &a),
                Func::Log => Ex::one() / &a,
                Func::Sqrt => Ex::one() / (Ex::num(2) * a.sqrt()),
            };
            outer * diff(&a, v)
        }
    }
}

/// Iterated partials: `diff_n(e, i, j)` is d^(i+j) e / dx^i dy^j.
pub fn diff_n(e: &Ex, i: u32, j: u32) -> Ex {
    let mut out = e.clone();
    for _ in 0..i {
        out = diff(&out, &Var::X);
    }
    for _ in 0..j {
        out = diff(&out, &Var::Y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_rule() {
        // d/dx (x^2 y) = 2xy
        let e = Ex::x().powi(2) * Ex::y();
        let d = diff(&e, &Var::X);
        assert_eq!(d, Ex::num(2) * Ex::x() * Ex::y());
    }

    #[test]
    fn quotient_rule() {
        // d/dy (4/y) = -4/y^2
        let e = Ex::num(4) / Ex::y();
        let d = diff(&e, &Var::Y);
        assert_eq!(d, (-Ex::num(4)) / Ex::y().powi(2));
    }

    #[test]
    fn constants_vanish() {
        let e = Ex::param("a") * Ex::num(3);
        assert!(diff(&e, &Var::X).is_zero());
    }
}
