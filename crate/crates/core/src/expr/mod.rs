//! Expression trees over the two independent symbols `x` and `y`.
//!
//! `Expr` is immutable; subtrees are shared through `Arc`, so cloning and the
//! derivative rules are cheap. Structural equality (`==`) is decidable and is
//! what tests and local simplification use; it never claims mathematical
//! equality — deciding that an expression vanishes identically is the zero
//! tester's job.
//!
//! Simplification happens only in the smart constructors on [`Ex`] and is
//! deliberately local: constant folding, 0/1 identities, collapsing of nested
//! integer powers. Nothing canonicalizing.

mod diff;
mod eval;
mod parse;

pub use diff::{diff, diff_n};
pub use eval::{eval_f64, eval_number, eval_sum_terms, jet_eval, jet_eval_f64, EvalError};
pub use parse::{parse_expr, parse_rhs, ParseError};

use crate::number::Number;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    /// First, second, third derivative slots (`y1`, `y2`, `y3`) for raw
    /// right-hand sides. Only meaningful before coefficient extraction.
    D1,
    D2,
    D3,
    Param(Arc<str>),
}

impl Var {
    pub fn name(&self) -> &str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::D1 => "y1",
            Var::D2 => "y2",
            Var::D3 => "y3",
            Var::Param(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Number),
    Var(Var),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// Integer power with the exponent stored exactly.
    PowI(Arc<Expr>, i64),
    Pow(Arc<Expr>, Arc<Expr>),
    Func(Func, Arc<Expr>),
}

/// Cheap handle on a shared expression node, with operator overloading so
/// formula transcriptions read like the source they came from.
#[derive(Clone, Debug)]
pub struct Ex(pub Arc<Expr>);

impl PartialEq for Ex {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Ex {
    pub fn num(n: i64) -> Ex {
        Ex(Arc::new(Expr::Const(Number::from_i64(n))))
    }

    pub fn ratio(n: i64, d: i64) -> Ex {
        Ex(Arc::new(Expr::Const(Number::ratio(n, d))))
    }

    pub fn float(v: f64) -> Ex {
        assert!(v.is_finite(), "non-finite constant in expression");
        Ex(Arc::new(Expr::Const(Number::F64(v))))
    }

    pub fn constant(n: Number) -> Ex {
        Ex(Arc::new(Expr::Const(n)))
    }

    pub fn var(v: Var) -> Ex {
        Ex(Arc::new(Expr::Var(v)))
    }

    pub fn x() -> Ex {
        Ex::var(Var::X)
    }

    pub fn y() -> Ex {
        Ex::var(Var::Y)
    }

    pub fn param(name: &str) -> Ex {
        Ex::var(Var::Param(Arc::from(name)))
    }

    pub fn zero() -> Ex {
        Ex::num(0)
    }

    pub fn one() -> Ex {
        Ex::num(1)
    }

    pub fn is_zero(&self) -> bool {
        matches!(&*self.0, Expr::Const(c) if c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(&*self.0, Expr::Const(c) if c.is_one())
    }

    pub fn as_const(&self) -> Option<&Number> {
        match &*self.0 {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn neg(&self) -> Ex {
        match &*self.0 {
            Expr::Const(c) => Ex::constant(-c.clone()),
            Expr::Neg(e) => Ex(e.clone()),
            _ => Ex(Arc::new(Expr::Neg(self.0.clone()))),
        }
    }

    pub fn add(&self, rhs: &Ex) -> Ex {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Ex::constant(a.clone() + b.clone());
        }
        Ex(Arc::new(Expr::Add(self.0.clone(), rhs.0.clone())))
    }

    pub fn sub(&self, rhs: &Ex) -> Ex {
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.neg();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Ex::constant(a.clone() - b.clone());
        }
        Ex(Arc::new(Expr::Sub(self.0.clone(), rhs.0.clone())))
    }

    pub fn mul(&self, rhs: &Ex) -> Ex {
        if self.is_zero() || rhs.is_zero() {
            return Ex::zero();
        }
        if self.is_one() {
            return rhs.clone();
        }
        if rhs.is_one() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Ex::constant(a.clone() * b.clone());
        }
        Ex(Arc::new(Expr::Mul(self.0.clone(), rhs.0.clone())))
    }

    pub fn div(&self, rhs: &Ex) -> Ex {
        if rhs.is_one() {
            return self.clone();
        }
        if self.is_zero() && !rhs.is_zero() {
            return Ex::zero();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            if !b.is_zero() {
                return Ex::constant(a.div(b));
            }
        }
        Ex(Arc::new(Expr::Div(self.0.clone(), rhs.0.clone())))
    }

    pub fn powi(&self, n: i64) -> Ex {
        if n == 0 {
            return Ex::one();
        }
        if n == 1 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            if n > 0 || !c.is_zero() {
                return Ex::constant(c.powi(n));
            }
        }
        if let Expr::PowI(base, m) = &*self.0 {
            if let Some(mn) = m.checked_mul(n) {
                return Ex(base.clone()).powi(mn);
            }
        }
        Ex(Arc::new(Expr::PowI(self.0.clone(), n)))
    }

    pub fn pow(&self, rhs: &Ex) -> Ex {
        if let Some(c) = rhs.as_const() {
            if let Some(n) = c.as_integer() {
                return self.powi(n);
            }
        }
        Ex(Arc::new(Expr::Pow(self.0.clone(), rhs.0.clone())))
    }

    pub fn func(f: Func, arg: &Ex) -> Ex {
        if let Some(c) = arg.as_const() {
            // fold only the exactly representable cases
            match (f, c) {
                (Func::Sin, c) if c.is_zero() => return Ex::zero(),
                (Func::Cos, c) if c.is_zero() => return Ex::one(),
                (Func::Exp, c) if c.is_zero() => return Ex::one(),
                (Func::Log, c) if c.is_one() => return Ex::zero(),
                (Func::Sqrt, c) if c.is_zero() => return Ex::zero(),
                (Func::Sqrt, c) if c.is_one() => return Ex::one(),
                _ => {}
            }
        }
        Ex(Arc::new(Expr::Func(f, arg.0.clone())))
    }

    pub fn sqrt(&self) -> Ex {
        Ex::func(Func::Sqrt, self)
    }

    pub fn exp(&self) -> Ex {
        Ex::func(Func::Exp, self)
    }

    pub fn log(&self) -> Ex {
        Ex::func(Func::Log, self)
    }

    pub fn contains(&self, v: &Var) -> bool {
        fn walk(e: &Expr, v: &Var) -> bool {
            match e {
                Expr::Const(_) => false,
                Expr::Var(w) => w == v,
                Expr::Neg(a) | Expr::PowI(a, _) | Expr::Func(_, a) => walk(a, v),
                Expr::Add(a, b)
                | Expr::Sub(a, b)
                | Expr::Mul(a, b)
                | Expr::Div(a, b)
                | Expr::Pow(a, b) => walk(a, v) || walk(b, v),
            }
        }
        walk(&self.0, v)
    }

    pub fn contains_derivative_slot(&self) -> bool {
        self.contains(&Var::D1) || self.contains(&Var::D2) || self.contains(&Var::D3)
    }

    /// Names of all parameters referenced in the expression.
    pub fn params(&self) -> BTreeSet<String> {
        fn walk(e: &Expr, out: &mut BTreeSet<String>) {
            match e {
                Expr::Var(Var::Param(p)) => {
                    out.insert(p.to_string());
                }
                Expr::Const(_) | Expr::Var(_) => {}
                Expr::Neg(a) | Expr::PowI(a, _) | Expr::Func(_, a) => walk(a, out),
                Expr::Add(a, b)
                | Expr::Sub(a, b)
                | Expr::Mul(a, b)
                | Expr::Div(a, b)
                | Expr::Pow(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.0, &mut out);
        out
    }

    /// Substitute a variable by an expression, rebuilding through the smart
    /// constructors (so bound constants fold).
    pub fn subst(&self, v: &Var, value: &Ex) -> Ex {
        match &*self.0 {
            Expr::Const(_) => self.clone(),
            Expr::Var(w) => {
                if w == v {
                    value.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Neg(a) => Ex(a.clone()).subst(v, value).neg(),
            Expr::Add(a, b) => Ex(a.clone()).subst(v, value).add(&Ex(b.clone()).subst(v, value)),
            Expr::Sub(a, b) => Ex(a.clone()).subst(v, value).sub(&Ex(b.clone()).subst(v, value)),
            Expr::Mul(a, b) => Ex(a.clone()).subst(v, value).mul(&Ex(b.clone()).subst(v, value)),
            Expr::Div(a, b) => Ex(a.clone()).subst(v, value).div(&Ex(b.clone()).subst(v, value)),
            Expr::PowI(a, n) => Ex(a.clone()).subst(v, value).powi(*n),
            Expr::Pow(a, b) => Ex(a.clone()).subst(v, value).pow(&Ex(b.clone()).subst(v, value)),
            Expr::Func(f, a) => Ex::func(*f, &Ex(a.clone()).subst(v, value)),
        }
    }

    /// Bind every named parameter to a number.
    pub fn bind_params(&self, bindings: &[(String, Number)]) -> Ex {
        let mut e = self.clone();
        for (name, n) in bindings {
            e = e.subst(&Var::Param(Arc::from(name.as_str())), &Ex::constant(n.clone()));
        }
        e
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $smart:ident) => {
        impl std::ops::$trait for Ex {
            type Output = Ex;
            fn $method(self, rhs: Ex) -> Ex {
                Ex::$smart(&self, &rhs)
            }
        }
        impl std::ops::$trait<&Ex> for Ex {
            type Output = Ex;
            fn $method(self, rhs: &Ex) -> Ex {
                Ex::$smart(&self, rhs)
            }
        }
        impl std::ops::$trait<Ex> for &Ex {
            type Output = Ex;
            fn $method(self, rhs: Ex) -> Ex {
                Ex::$smart(self, &rhs)
            }
        }
        impl std::ops::$trait<&Ex> for &Ex {
            type Output = Ex;
            fn $method(self, rhs: &Ex) -> Ex {
                Ex::$smart(self, rhs)
            }
        }
        impl std::ops::$trait<i64> for Ex {
            type Output = Ex;
            fn $method(self, rhs: i64) -> Ex {
                Ex::$smart(&self, &Ex::num(rhs))
            }
        }
        impl std::ops::$trait<Ex> for i64 {
            type Output = Ex;
            fn $method(self, rhs: Ex) -> Ex {
                Ex::$smart(&Ex::num(self), &rhs)
            }
        }
        impl std::ops::$trait<&Ex> for i64 {
            type Output = Ex;
            fn $method(self, rhs: &Ex) -> Ex {
                Ex::$smart(&Ex::num(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl std::ops::Neg for Ex {
    type Output = Ex;
    fn neg(self) -> Ex {
        Ex::neg(&self)
    }
}

impl std::ops::Neg for &Ex {
    type Output = Ex;
    fn neg(self) -> Ex {
        Ex::neg(self)
    }
}

// ----- printing -------------------------------------------------------------

/// Effective precedence as the parser sees the printed form.
/// 1 add/sub, 2 mul/div, 3 unary minus, 4 power, 5 atom.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::PowI(..) | Expr::Pow(..) => 4,
        Expr::Const(c) => const_prec(c),
        Expr::Var(_) | Expr::Func(..) => 5,
    }
}

fn const_prec(c: &Number) -> u8 {
    // "-4" reparses as a unary minus, "4/3" as a quotient; account for that
    match c {
        Number::Rat(r) => {
            use num_traits::Signed;
            if r.is_integer() {
                if r.is_negative() {
                    3
                } else {
                    5
                }
            } else {
                2
            }
        }
        Number::F64(v) => {
            if *v < 0.0 {
                3
            } else {
                5
            }
        }
    }
}

fn write_prec(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{}", c),
        Expr::Var(v) => write!(f, "{}", v.name()),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_prec(f, a, 4)
        }
        Expr::Add(a, b) => {
            write_prec(f, a, 1)?;
            write!(f, " + ")?;
            write_prec(f, b, 2)
        }
        Expr::Sub(a, b) => {
            write_prec(f, a, 1)?;
            write!(f, " - ")?;
            write_prec(f, b, 2)
        }
        Expr::Mul(a, b) => {
            write_prec(f, a, 2)?;
            write!(f, " * ")?;
            write_prec(f, b, 3)
        }
        Expr::Div(a, b) => {
            write_prec(f, a, 2)?;
            write!(f, " / ")?;
            write_prec(f, b, 3)
        }
        Expr::PowI(a, n) => {
            write_prec(f, a, 5)?;
            write!(f, "^{}", n)
        }
        Expr::Pow(a, b) => {
            write_prec(f, a, 5)?;
            write!(f, "^")?;
            // exponent sits at the grammar's factor level
            match prec(&**b) {
                p if p >= 3 => write_prec(f, b, 3),
                _ => {
                    write!(f, "(")?;
                    write_expr(f, b)?;
                    write!(f, ")")
                }
            }
        }
        Expr::Func(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Ex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, &self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smart_zero_one() {
        let x = Ex::x();
        assert!((Ex::zero() * &x).is_zero());
        assert_eq!(&x * Ex::one(), x);
        assert_eq!(Ex::num(2) + Ex::num(3), Ex::num(5));
        assert_eq!(Ex::num(4) / Ex::num(2), Ex::num(2));
        assert_eq!(Ex::ratio(1, 3) + Ex::ratio(2, 3), Ex::one());
    }

    #[test]
    fn power_collapse() {
        let x = Ex::x();
        let e = x.powi(2).powi(3);
        assert_eq!(e, x.powi(6));
    }

    #[test]
    fn display_forms() {
        let x = Ex::x();
        let y = Ex::y();
        assert_eq!((&x + &y).to_string(), "x + y");
        assert_eq!((&x * (y.clone() + 1)).to_string(), "x * (y + 1)");
        assert_eq!((Ex::num(4) / &y).to_string(), "4 / y");
        assert_eq!(x.powi(-2).to_string(), "x^-2");
        assert_eq!((-(&x * &y)).to_string(), "-(x * y)");
    }
}
