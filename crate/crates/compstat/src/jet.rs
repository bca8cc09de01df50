//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value, its gradient and its (dense, row-major) Hessian
//! with respect to a fixed set of seed variables. Constants carry empty
//! derivative storage so that mixing them with seeded jets stays cheap.
//! Model code is written once against [`Scalar`] and evaluated either on
//! plain `f64` or on jets.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by model evaluators.
pub trait Scalar:
    Clone
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn powi(self, n: i32) -> Self;
    fn recip(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
}

/// Sum of a slice of scalars; zero for an empty slice.
pub fn sum<S: Scalar>(items: impl IntoIterator<Item = S>) -> S {
    items.into_iter().fold(S::cst(0.0), |acc, v| acc + v)
}

/// Inner product of a scalar slice with constant coefficients.
pub fn dot_c<S: Scalar>(x: &[S], c: &[f64]) -> S {
    sum(x.iter().zip(c).map(|(xi, ci)| xi.clone() * *ci))
}

/// Inner product of two scalar slices.
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    sum(x.iter().zip(y).map(|(a, b)| a.clone() * b.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: f64,
    /// Gradient, empty for constants.
    pub g: Vec<f64>,
    /// Row-major Hessian, empty for constants.
    pub h: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: Vec::new(),
            h: Vec::new(),
        }
    }

    /// Seed variable `i` of `n`.
    pub fn var(v: f64, i: usize, n: usize) -> Self {
        let mut g = vec![0.0; n];
        g[i] = 1.0;
        Jet {
            v,
            g,
            h: vec![0.0; n * n],
        }
    }

    /// Seeds `x` as variables `0..M` and `a` as `M..M+N`.
    pub fn seed(x: &[f64], a: &[f64]) -> (Vec<Jet>, Vec<Jet>) {
        let n = x.len() + a.len();
        let xs = x.iter().enumerate().map(|(i, &v)| Jet::var(v, i, n)).collect();
        let as_ = a
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::var(v, x.len() + i, n))
            .collect();
        (xs, as_)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn is_constant(&self) -> bool {
        self.g.is_empty()
    }

    /// Gradient entry, zero for constants.
    pub fn grad(&self, i: usize) -> f64 {
        self.g.get(i).copied().unwrap_or(0.0)
    }

    /// Hessian entry, zero for constants.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        if n == 0 {
            0.0
        } else {
            self.h[i * n + j]
        }
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet {
        if self.is_constant() {
            return Jet::constant(f0);
        }
        let n = self.dim();
        let mut h = self.h;
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = f1 * h[i * n + j] + f2 * self.g[i] * self.g[j];
            }
        }
        let g = self.g.iter().map(|gi| f1 * gi).collect();
        Jet { v: f0, g, h }
    }

    fn combine(a: Jet, b: Jet, sign: f64) -> Jet {
        match (a.is_constant(), b.is_constant()) {
            (true, true) => Jet::constant(a.v + sign * b.v),
            (false, true) => Jet {
                v: a.v + sign * b.v,
                ..a
            },
            (true, false) => {
                let mut r = if sign < 0.0 { -b } else { b };
                r.v += a.v;
                r
            }
            (false, false) => {
                let mut r = a;
                r.v += sign * b.v;
                for (x, y) in r.g.iter_mut().zip(&b.g) {
                    *x += sign * y;
                }
                for (x, y) in r.h.iter_mut().zip(&b.h) {
                    *x += sign * y;
                }
                r
            }
        }
    }

    fn scale(mut self, c: f64) -> Jet {
        self.v *= c;
        self.g.iter_mut().for_each(|x| *x *= c);
        self.h.iter_mut().for_each(|x| *x *= c);
        self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        Jet::combine(self, rhs, 1.0)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        Jet::combine(self, rhs, -1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if self.is_constant() {
            return rhs.scale(self.v);
        }
        if rhs.is_constant() {
            return self.scale(rhs.v);
        }
        let n = self.dim();
        let (a, b) = (self.v, rhs.v);
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                h[k] = a * rhs.h[k]
                    + b * self.h[k]
                    + self.g[i] * rhs.g[j]
                    + rhs.g[i] * self.g[j];
            }
        }
        let g = (0..n).map(|i| a * rhs.g[i] + b * self.g[i]).collect();
        Jet { v: a * b, g, h }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.v += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.v -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn ln(self) -> Self {
        let v = self.v;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn sqrt(self) -> Self {
        let v = self.v;
        let r = v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * v))
    }
    fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }
    fn powi(self, n: i32) -> Self {
        let v = self.v;
        let nf = n as f64;
        let d1 = if n == 0 { 0.0 } else { nf * v.powi(n - 1) };
        let d2 = if n == 0 || n == 1 {
            0.0
        } else {
            nf * (nf - 1.0) * v.powi(n - 2)
        };
        self.chain(v.powi(n), d1, d2)
    }
    fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        // f(x, y) = x^2 y at (3, 2)
        let (xs, _) = Jet::seed(&[3.0, 2.0], &[]);
        let f = xs[0].clone() * xs[0].clone() * xs[1].clone();
        assert_eq!(f.v, 18.0);
        assert_eq!(f.g, vec![12.0, 9.0]);
        assert_eq!(f.h, vec![4.0, 6.0, 6.0, 0.0]);
    }

    #[test]
    fn log_of_quotient() {
        // ln(x / y) has Hessian diag(-1/x^2, 1/y^2)
        let (xs, _) = Jet::seed(&[2.0, 4.0], &[]);
        let f = (xs[0].clone() / xs[1].clone()).ln();
        assert!((f.v - 0.5f64.ln()).abs() < 1e-15);
        assert!((f.g[0] - 0.5).abs() < 1e-15 && (f.g[1] + 0.25).abs() < 1e-15);
        assert!((f.hess(0, 0) + 0.25).abs() < 1e-15);
        assert!(f.hess(0, 1).abs() < 1e-15);
        assert!((f.hess(1, 1) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn constants_stay_compact() {
        let c = Jet::constant(2.0) * Jet::constant(3.0) + 1.0;
        assert!(c.is_constant());
        assert_eq!(c.v, 7.0);
    }
}
