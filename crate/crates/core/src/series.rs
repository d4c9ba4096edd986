//! Truncated Taylor series arithmetic.
//!
//! A `PowerSeries` holds the first `len` coefficients of an analytic function
//! expanded at some point. All operations are exact up to that order, which is
//! what the L'Hospital limits and the Maclaurin conditions need.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    c: Vec<f64>,
}

impl PowerSeries {
    pub fn zero(len: usize) -> Self {
        Self { c: vec![0.0; len] }
    }

    pub fn constant(v: f64, len: usize) -> Self {
        let mut s = Self::zero(len);
        if len > 0 {
            s.c[0] = v;
        }
        s
    }

    /// The series of `a + b t`.
    pub fn linear(a: f64, b: f64, len: usize) -> Self {
        let mut s = Self::constant(a, len);
        if len > 1 {
            s.c[1] = b;
        }
        s
    }

    /// Builds a series from explicit coefficients.
    pub fn from_coeffs(c: Vec<f64>) -> Self {
        Self { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { c: self.c.iter().map(|v| v * a).collect() }
    }

    pub fn add_scalar(&self, a: f64) -> Self {
        let mut s = self.clone();
        if !s.c.is_empty() {
            s.c[0] += a;
        }
        s
    }

    /// Multiplies by t^k, dropping coefficients past the truncation order.
    pub fn shift_up(&self, k: usize) -> Self {
        let n = self.len();
        let mut c = vec![0.0; n];
        c[k..n].copy_from_slice(&self.c[..n - k]);
        Self { c }
    }

    /// Divides by t^k, discarding the first k coefficients (assumed zero).
    /// The result is k terms shorter.
    pub fn shift_down(&self, k: usize) -> Self {
        Self { c: self.c.iter().skip(k).copied().collect() }
    }

    pub fn truncate(&self, len: usize) -> Self {
        Self { c: self.c.iter().take(len).copied().collect() }
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut acc = Self::constant(1.0, self.len());
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Quotient by a series with nonzero constant term.
    pub fn div(&self, den: &PowerSeries) -> Self {
        let n = self.len().min(den.len());
        let d0 = den.c[0];
        assert!(d0 != 0.0, "series division by a series with zero constant term");
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut v = self.c[k];
            for j in 1..=k {
                v -= den.c[j] * out[k - j];
            }
            out[k] = v / d0;
        }
        Self { c: out }
    }

    /// Quotient of two series sharing a zero of order `k` at the expansion
    /// point: both are divided by t^k before dividing. This is L'Hospital's
    /// rule applied k times.
    pub fn div_common_zero(&self, den: &PowerSeries, k: usize) -> Self {
        self.shift_down(k).div(&den.shift_down(k))
    }

    /// Square root of a series with positive constant term.
    pub fn sqrt(&self) -> Self {
        let n = self.len();
        let a0 = self.c[0];
        assert!(a0 > 0.0, "series square root needs a positive constant term");
        let mut r = vec![0.0; n];
        r[0] = a0.sqrt();
        for k in 1..n {
            let mut v = self.c[k];
            for j in 1..k {
                v -= r[j] * r[k - j];
            }
            r[k] = v / (2.0 * r[0]);
        }
        Self { c: r }
    }

    /// Value of the truncated polynomial at offset `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
    }

    /// k-th derivative at the expansion point (k! times the coefficient).
    pub fn derivative(&self, k: usize) -> f64 {
        let f: f64 = (1..=k).map(|v| v as f64).product();
        self.coeff(k) * f
    }
}

impl Add for &PowerSeries {
    type Output = PowerSeries;
    fn add(self, o: &PowerSeries) -> PowerSeries {
        let n = self.len().min(o.len());
        PowerSeries { c: (0..n).map(|k| self.c[k] + o.c[k]).collect() }
    }
}

impl Sub for &PowerSeries {
    type Output = PowerSeries;
    fn sub(self, o: &PowerSeries) -> PowerSeries {
        let n = self.len().min(o.len());
        PowerSeries { c: (0..n).map(|k| self.c[k] - o.c[k]).collect() }
    }
}

impl Mul for &PowerSeries {
    type Output = PowerSeries;
    fn mul(self, o: &PowerSeries) -> PowerSeries {
        let n = self.len().min(o.len());
        let mut c = vec![0.0; n];
        for i in 0..n {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..n - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        PowerSeries { c }
    }
}

impl Neg for &PowerSeries {
    type Output = PowerSeries;
    fn neg(self) -> PowerSeries {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for PowerSeries {
            type Output = PowerSeries;
            fn $f(self, o: PowerSeries) -> PowerSeries {
                (&self).$f(&o)
            }
        }
        impl $tr<&PowerSeries> for PowerSeries {
            type Output = PowerSeries;
            fn $f(self, o: &PowerSeries) -> PowerSeries {
                (&self).$f(o)
            }
        }
        impl $tr<PowerSeries> for &PowerSeries {
            type Output = PowerSeries;
            fn $f(self, o: PowerSeries) -> PowerSeries {
                self.$f(&o)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-13 * (1.0 + b.abs())
    }

    #[test]
    fn exp_times_exp_is_exp_of_sum() {
        let n = 8;
        let e = |a: f64| {
            let mut c = vec![1.0; n];
            for k in 1..n {
                c[k] = c[k - 1] * a / k as f64;
            }
            PowerSeries::from_coeffs(c)
        };
        let p = &e(0.3) * &e(1.1);
        let want = e(1.4);
        for k in 0..n {
            assert!(close(p.coeff(k), want.coeff(k)));
        }
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = PowerSeries::from_coeffs(vec![2.0, -1.0, 0.5, 3.0, 0.25]);
        let b = PowerSeries::from_coeffs(vec![1.5, 0.2, -0.7, 0.1, 0.0]);
        let q = (&a * &b).div(&b);
        for k in 0..5 {
            assert!(close(q.coeff(k), a.coeff(k)));
        }
    }

    #[test]
    fn common_zero_is_lhopital() {
        // sin(t)/t at t=0 -> 1, slope 0, second coefficient -1/6
        let sin = PowerSeries::from_coeffs(vec![0.0, 1.0, 0.0, -1.0 / 6.0, 0.0, 1.0 / 120.0]);
        let t = PowerSeries::linear(0.0, 1.0, 6);
        let r = sin.div_common_zero(&t, 1);
        assert!(close(r.coeff(0), 1.0));
        assert!(close(r.coeff(1), 0.0));
        assert!(close(r.coeff(2), -1.0 / 6.0));
    }

    #[test]
    fn sqrt_squares_back() {
        let a = PowerSeries::from_coeffs(vec![4.0, 1.0, -2.0, 0.5, 0.3]);
        let r = a.sqrt();
        let back = &r * &r;
        for k in 0..5 {
            assert!(close(back.coeff(k), a.coeff(k)));
        }
    }

    #[test]
    fn eval_and_derivative() {
        let a = PowerSeries::from_coeffs(vec![1.0, 2.0, 3.0]);
        assert!(close(a.eval(0.5), 1.0 + 1.0 + 0.75));
        assert!(close(a.derivative(2), 6.0));
        assert!(close(a.powi(2).coeff(2), 4.0 + 6.0));
        assert!(close(a.shift_up(1).coeff(2), 2.0));
    }
}
