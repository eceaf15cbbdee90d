//! Truncated Taylor expansions ("jets"), the numeric derivative engine.
//!
//! [`Jet`] is a bivariate expansion at a base point: entry `(i, j)` holds the
//! Taylor coefficient, i.e. the (i, j) partial divided by `i! j!`. Arithmetic
//! is exact to the truncation order, and exact in the rational sense when the
//! coefficients are [`Number`] rationals.
//!
//! [`Jet1`] is the univariate `f64` sibling used for pushing derivatives
//! along solution curves.

use crate::expr::Func;
use crate::number::Number;

/// Default truncation order: deep enough for fourth-order derivative
/// chains inside third-order condition expressions, with headroom.
pub const DEFAULT_ORDER: usize = 6;

/// Scalars a jet can carry.
pub trait Coeff: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(n: i64) -> Self;
    fn from_f64(v: f64) -> Self;
    fn from_number(n: &Number) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Caller guards the divisor.
    fn div(&self, o: &Self) -> Self;
    fn abs_f64(&self) -> f64;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
}

impl Coeff for Number {
    fn zero() -> Self {
        Number::zero()
    }
    fn one() -> Self {
        Number::one()
    }
    fn from_i64(n: i64) -> Self {
        Number::from_i64(n)
    }
    fn from_f64(v: f64) -> Self {
        Number::F64(v)
    }
    fn from_number(n: &Number) -> Self {
        n.clone()
    }
    fn add(&self, o: &Self) -> Self {
        self.clone() + o.clone()
    }
    fn sub(&self, o: &Self) -> Self {
        self.clone() - o.clone()
    }
    fn mul(&self, o: &Self) -> Self {
        self.clone() * o.clone()
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn div(&self, o: &Self) -> Self {
        Number::div(self, o)
    }
    fn abs_f64(&self) -> f64 {
        Number::abs_f64(self)
    }
    fn to_f64(&self) -> f64 {
        Number::to_f64(self)
    }
    fn is_zero(&self) -> bool {
        Number::is_zero(self)
    }
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_number(n: &Number) -> Self {
        n.to_f64()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn abs_f64(&self) -> f64 {
        self.abs()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// A quotient, logarithm, square root or general power hit a constant term
/// inside the singularity guard.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularJet {
    pub magnitude: f64,
}

fn tri(d: usize) -> usize {
    d * (d + 1) / 2
}

fn idx(i: usize, j: usize) -> usize {
    tri(i + j) + j
}

fn len_for(order: usize) -> usize {
    tri(order + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet<C: Coeff> {
    order: usize,
    base: (C, C),
    c: Vec<C>,
}

impl<C: Coeff> Jet<C> {
    pub fn constant(v: C, base: (C, C), order: usize) -> Self {
        let mut c = vec![C::zero(); len_for(order)];
        c[0] = v;
        Jet { order, base, c }
    }

    pub fn var_x(base: (C, C), order: usize) -> Self {
        let mut j = Jet::constant(base.0.clone(), base, order);
        if order >= 1 {
            j.c[idx(1, 0)] = C::one();
        }
        j
    }

    pub fn var_y(base: (C, C), order: usize) -> Self {
        let mut j = Jet::constant(base.1.clone(), base, order);
        if order >= 1 {
            j.c[idx(0, 1)] = C::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base(&self) -> &(C, C) {
        &self.base
    }

    pub fn coeff(&self, i: usize, j: usize) -> &C {
        &self.c[idx(i, j)]
    }

    pub fn coeff_mut(&mut self, i: usize, j: usize) -> &mut C {
        &mut self.c[idx(i, j)]
    }

    pub fn constant_term(&self) -> &C {
        &self.c[0]
    }

    /// The (i, j) partial derivative value: coefficient times `i! j!`.
    pub fn deriv(&self, i: usize, j: usize) -> C {
        let mut f = 1i64;
        for k in 2..=i as i64 {
            f *= k;
        }
        for k in 2..=j as i64 {
            f *= k;
        }
        self.coeff(i, j).mul(&C::from_i64(f))
    }

    pub fn truncate(&self, order: usize) -> Jet<C> {
        assert!(order <= self.order);
        Jet {
            order,
            base: self.base.clone(),
            c: self.c[..len_for(order)].to_vec(),
        }
    }

    fn zip(&self, o: &Jet<C>, f: impl Fn(&C, &C) -> C) -> Jet<C> {
        let order = self.order.min(o.order);
        let mut c = Vec::with_capacity(len_for(order));
        for k in 0..len_for(order) {
            c.push(f(&self.c[k], &o.c[k]));
        }
        Jet {
            order,
            base: self.base.clone(),
            c,
        }
    }

    pub fn add(&self, o: &Jet<C>) -> Jet<C> {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &Jet<C>) -> Jet<C> {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn neg(&self) -> Jet<C> {
        let mut out = self.clone();
        for v in &mut out.c {
            *v = v.neg();
        }
        out
    }

    pub fn scale(&self, s: &C) -> Jet<C> {
        let mut out = self.clone();
        for v in &mut out.c {
            *v = v.mul(s);
        }
        out
    }

    pub fn mul(&self, o: &Jet<C>) -> Jet<C> {
        let order = self.order.min(o.order);
        let mut c = vec![C::zero(); len_for(order)];
        for d1 in 0..=order {
            for j1 in 0..=d1 {
                let i1 = d1 - j1;
                let a = &self.c[idx(i1, j1)];
                if a.is_zero() {
                    continue;
                }
                for d2 in 0..=(order - d1) {
                    for j2 in 0..=d2 {
                        let i2 = d2 - j2;
                        let b = &o.c[idx(i2, j2)];
                        if b.is_zero() {
                            continue;
                        }
                        let t = idx(i1 + i2, j1 + j2);
                        c[t] = c[t].add(&a.mul(b));
                    }
                }
            }
        }
        Jet {
            order,
            base: self.base.clone(),
            c,
        }
    }

    /// Multiplicative inverse; the constant term must clear the guard.
    pub fn recip(&self, eps: f64) -> Result<Jet<C>, SingularJet> {
        let a0 = &self.c[0];
        if a0.abs_f64() < eps {
            return Err(SingularJet {
                magnitude: a0.abs_f64(),
            });
        }
        let order = self.order;
        let mut b = vec![C::zero(); len_for(order)];
        b[0] = C::one().div(a0);
        for d in 1..=order {
            for j in 0..=d {
                let i = d - j;
                // sum over (p,q) != (0,0), p<=i, q<=j
                let mut s = C::zero();
                for p in 0..=i {
                    for q in 0..=j {
                        if p == 0 && q == 0 {
                            continue;
                        }
                        let a = &self.c[idx(p, q)];
                        if a.is_zero() {
                            continue;
                        }
                        s = s.add(&a.mul(&b[idx(i - p, j - q)]));
                    }
                }
                b[idx(i, j)] = s.neg().div(a0);
            }
        }
        Ok(Jet {
            order,
            base: self.base.clone(),
            c: b,
        })
    }

    pub fn div(&self, o: &Jet<C>, eps: f64) -> Result<Jet<C>, SingularJet> {
        Ok(self.mul(&o.recip(eps)?))
    }

    pub fn powi(&self, n: i64, eps: f64) -> Result<Jet<C>, SingularJet> {
        if n == 0 {
            return Ok(Jet::constant(C::one(), self.base.clone(), self.order));
        }
        let (mut base, m) = if n < 0 {
            (self.recip(eps)?, (-n) as u64)
        } else {
            (self.clone(), n as u64)
        };
        let mut acc: Option<Jet<C>> = None;
        let mut m = m;
        while m > 0 {
            if m & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.mul(&base),
                });
            }
            m >>= 1;
            if m > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc.unwrap())
    }

    /// Compose with a univariate function given its derivative values at the
    /// constant term: result = sum_k derivs[k]/k! * (self - a0)^k.
    pub fn compose_series(&self, derivs: &[C]) -> Jet<C> {
        assert!(derivs.len() >= self.order + 1);
        let mut nil = self.clone();
        nil.c[0] = C::zero(); // nilpotent part
        let mut out = Jet::constant(derivs[0].clone(), self.base.clone(), self.order);
        let mut pw = Jet::constant(C::one(), self.base.clone(), self.order);
        let mut fact = 1i64;
        for k in 1..=self.order {
            pw = pw.mul(&nil);
            fact *= k as i64;
            out = out.add(&pw.scale(&derivs[k].div(&C::from_i64(fact))));
        }
        out
    }

    /// Elementary function applied to a jet. Derivative tables are computed
    /// in floating point, so this is where exact pipelines fall back to f64.
    pub fn apply_func(&self, f: Func, eps: f64) -> Result<Jet<C>, SingularJet> {
        let a0 = self.c[0].to_f64();
        let n = self.order;
        let mut d = Vec::with_capacity(n + 1);
        match f {
            Func::Exp => {
                let e = a0.exp();
                for _ in 0..=n {
                    d.push(C::from_f64(e));
                }
            }
            Func::Log => {
                if a0 < eps {
                    return Err(SingularJet { magnitude: a0 });
                }
                d.push(C::from_f64(a0.ln()));
                // d^k log = (-1)^(k-1) (k-1)! / a0^k
                let mut pow = 1.0 / a0;
                let mut sign = 1.0;
                let mut fct = 1.0;
                for k in 1..=n {
                    if k > 1 {
                        fct *= (k - 1) as f64;
                    }
                    d.push(C::from_f64(sign * fct * pow));
                    pow /= a0;
                    sign = -sign;
                }
            }
            Func::Sqrt => {
                if a0 < eps {
                    return Err(SingularJet { magnitude: a0 });
                }
                let s = a0.sqrt();
                d.push(C::from_f64(s));
                // d^k sqrt = s * prod_{i=0..k-1} (1/2 - i) / a0^k
                let mut coef = s;
                for k in 1..=n {
                    coef *= 0.5 - (k as f64 - 1.0);
                    coef /= a0;
                    d.push(C::from_f64(coef));
                }
            }
            Func::Sin | Func::Cos => {
                let (s, c) = a0.sin_cos();
                let cycle = match f {
                    Func::Sin => [s, c, -s, -c],
                    _ => [c, -s, -c, s],
                };
                for k in 0..=n {
                    d.push(C::from_f64(cycle[k % 4]));
                }
            }
        }
        Ok(self.compose_series(&d))
    }

    /// General power `self^expnt` via exp(expnt * log(self)).
    pub fn pow_jet(&self, expnt: &Jet<C>, eps: f64) -> Result<Jet<C>, SingularJet> {
        let l = self.apply_func(Func::Log, eps)?;
        expnt.mul(&l).apply_func(Func::Exp, eps)
    }

    /// Partial derivative in x: drops the order by one.
    pub fn partial_x(&self) -> Jet<C> {
        assert!(self.order >= 1);
        let order = self.order - 1;
        let mut c = vec![C::zero(); len_for(order)];
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                c[idx(i, j)] = self.c[idx(i + 1, j)].mul(&C::from_i64(i as i64 + 1));
            }
        }
        Jet {
            order,
            base: self.base.clone(),
            c,
        }
    }

    pub fn partial_y(&self) -> Jet<C> {
        assert!(self.order >= 1);
        let order = self.order - 1;
        let mut c = vec![C::zero(); len_for(order)];
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                c[idx(i, j)] = self.c[idx(i, j + 1)].mul(&C::from_i64(j as i64 + 1));
            }
        }
        Jet {
            order,
            base: self.base.clone(),
            c,
        }
    }

    pub fn to_f64(&self) -> Jet<f64> {
        Jet {
            order: self.order,
            base: (self.base.0.to_f64(), self.base.1.to_f64()),
            c: self.c.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

impl Jet<f64> {
    /// Restrict along a parametrized curve (X(s), Y(s)); the curve must pass
    /// through the jet's base point at s = 0.
    pub fn along_curve(&self, xc: &Jet1, yc: &Jet1) -> Jet1 {
        let order = self.order.min(xc.order()).min(yc.order());
        let mut dx = xc.truncate(order);
        dx.c[0] = 0.0;
        let mut dy = yc.truncate(order);
        dy.c[0] = 0.0;
        // powers of the offsets
        let mut xp = vec![Jet1::constant(1.0, order)];
        let mut yp = vec![Jet1::constant(1.0, order)];
        for k in 1..=order {
            xp.push(xp[k - 1].mul(&dx));
            yp.push(yp[k - 1].mul(&dy));
        }
        let mut out = Jet1::constant(0.0, order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                let c = self.c[idx(i, j)];
                if c != 0.0 {
                    out = out.add(&xp[i].mul(&yp[j]).scale(c));
                }
            }
        }
        out
    }
}

// ----- univariate f64 jets ---------------------------------------------------

/// Univariate truncated Taylor series in one parameter, `f64` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1 {
    c: Vec<f64>,
}

impl Jet1 {
    pub fn new(c: Vec<f64>) -> Self {
        assert!(!c.is_empty());
        Jet1 { c }
    }

    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet1 { c }
    }

    /// The identity curve s -> x0 + s.
    pub fn identity(x0: f64, order: usize) -> Self {
        let mut j = Jet1::constant(x0, order);
        if order >= 1 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c[k]
    }

    /// k-th derivative value at the expansion point.
    pub fn deriv(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.c[k] * f
    }

    pub fn truncate(&self, order: usize) -> Jet1 {
        Jet1 {
            c: self.c[..=order.min(self.order())].to_vec(),
        }
    }

    pub fn add(&self, o: &Jet1) -> Jet1 {
        let n = self.order().min(o.order());
        Jet1 {
            c: (0..=n).map(|k| self.c[k] + o.c[k]).collect(),
        }
    }

    pub fn sub(&self, o: &Jet1) -> Jet1 {
        let n = self.order().min(o.order());
        Jet1 {
            c: (0..=n).map(|k| self.c[k] - o.c[k]).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet1 {
        Jet1 {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul(&self, o: &Jet1) -> Jet1 {
        let n = self.order().min(o.order());
        let mut c = vec![0.0; n + 1];
        for i in 0..=n {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..=(n - i) {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet1 { c }
    }

    pub fn recip(&self) -> Option<Jet1> {
        if self.c[0] == 0.0 {
            return None;
        }
        let n = self.order();
        let mut b = vec![0.0; n + 1];
        b[0] = 1.0 / self.c[0];
        for k in 1..=n {
            let mut s = 0.0;
            for i in 1..=k {
                s += self.c[i] * b[k - i];
            }
            b[k] = -s / self.c[0];
        }
        Some(Jet1 { c: b })
    }

    pub fn div(&self, o: &Jet1) -> Option<Jet1> {
        Some(self.mul(&o.recip()?).truncate(self.order().min(o.order())))
    }

    /// Derivative with respect to the parameter: order drops by one.
    pub fn differentiate(&self) -> Jet1 {
        let n = self.order();
        assert!(n >= 1);
        Jet1 {
            c: (1..=n).map(|k| self.c[k] * k as f64).collect(),
        }
    }

    /// Antiderivative with value 0 at the expansion point: order rises by one.
    pub fn integrate(&self) -> Jet1 {
        let mut c = vec![0.0];
        for (k, v) in self.c.iter().enumerate() {
            c.push(v / (k as f64 + 1.0));
        }
        Jet1 { c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn npoint(x: f64, y: f64) -> (Number, Number) {
        (Number::rat_from_f64(x), Number::rat_from_f64(y))
    }

    #[test]
    fn product_matches_leibniz() {
        // f = x^2, g = y at (1,2): (fg) coeffs
        let base = npoint(1.0, 2.0);
        let x = Jet::var_x(base.clone(), 3);
        let y = Jet::var_y(base, 3);
        let f = x.mul(&x);
        let fg = f.mul(&y);
        // d/dx (x^2 y) = 2xy = 4 at (1,2)
        assert_eq!(fg.deriv(1, 0).to_f64(), 4.0);
        assert_eq!(fg.deriv(1, 1).to_f64(), 2.0);
        assert_eq!(fg.deriv(2, 0).to_f64(), 4.0);
    }

    #[test]
    fn recip_exact_rational() {
        let base = (Number::from_i64(2), Number::from_i64(1));
        let x = Jet::var_x(base, 4);
        let r = x.recip(1e-12).unwrap();
        // 1/x at 2: value 1/2, d/dx = -1/4, d2/dx2 = 1/4
        assert_eq!(r.constant_term(), &Number::ratio(1, 2));
        assert_eq!(r.deriv(1, 0), Number::ratio(-1, 4));
        assert_eq!(r.deriv(2, 0), Number::ratio(1, 4));
        assert!(r.deriv(2, 0).is_exact());
    }

    #[test]
    fn guard_trips() {
        let base = (Number::zero(), Number::zero());
        let x = Jet::var_x(base, 2);
        assert!(x.recip(1e-8).is_err());
    }

    #[test]
    fn univariate_quotient_chain() {
        // u(s) = (1+s)^2 / (1+2s); u(0)=1, u'(0) = 2-2 = 0
        let one_s = Jet1::new(vec![1.0, 1.0, 0.0, 0.0]);
        let den = Jet1::new(vec![1.0, 2.0, 0.0, 0.0]);
        let u = one_s.mul(&one_s).div(&den).unwrap();
        assert!((u.value() - 1.0).abs() < 1e-15);
        assert!(u.deriv(1).abs() < 1e-15);
    }
}
