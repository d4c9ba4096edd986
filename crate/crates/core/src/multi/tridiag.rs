//! The tridiagonal system A(z) g(z) = b(z) linking the generating functions
//! g_0 .. g_{m-1}, evaluated either at a real z or as a power series in
//! t = z - 1.

use std::ops::{Add, Mul, Sub};

use crate::model::MultiServerModel;
use crate::series::PowerSeries;

/// Values that A(z), b(z) and their minors can be built from.
pub(crate) trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {}

impl Scalar for f64 {}
impl Scalar for PowerSeries {}

/// Diagonal a_i, superdiagonal magnitudes alpha_i (index 0 unused) and the
/// subdiagonal magnitude lambda z.
pub(crate) struct Entries<T> {
    pub a: Vec<T>,
    pub alpha: Vec<T>,
    pub lz: T,
}

impl<T: Scalar> Entries<T> {
    /// `c` lifts a constant into T; `y1` is the kernel root at the same z.
    pub fn new(model: &MultiServerModel, z: &T, y1: &T, c: &impl Fn(f64) -> T) -> Self {
        let m = model.m;
        let (lam, mu1, mu2, q) = (model.lambda, model.mu1, model.mu2, model.q);
        let lz = c(lam) * z.clone();
        let zm1 = z.clone() - c(1.0);
        let mut a = Vec::with_capacity(m);
        for i in 0..m.saturating_sub(1) {
            a.push(lz.clone() + c(i as f64 * mu1) * z.clone() + c((m - i) as f64 * mu2) * zm1.clone());
        }
        a.push(
            lz.clone() * (c(1.0) - y1.clone()) + c((m - 1) as f64 * mu1) * z.clone() + c(mu2) * zm1.clone(),
        );
        let phase = c(1.0 - q) + c(q) * z.clone();
        let alpha = (0..m).map(|i| c(i as f64 * mu1) * z.clone() * phase.clone()).collect();
        Self { a, alpha, lz }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    /// Leading principal minors Q_0 .. Q_m; Q_m is the determinant D.
    pub fn leading(&self, one: T) -> Vec<T> {
        let m = self.m();
        let mut q = Vec::with_capacity(m + 1);
        q.push(one);
        if m == 0 {
            return q;
        }
        q.push(self.a[0].clone());
        for i in 2..=m {
            let v = self.a[i - 1].clone() * q[i - 1].clone()
                - self.alpha[i - 1].clone() * self.lz.clone() * q[i - 2].clone();
            q.push(v);
        }
        q
    }

    /// Trailing principal minors R_0 .. R_m (R_k covers rows k..m-1, R_m = 1).
    pub fn trailing(&self, one: T) -> Vec<T> {
        let m = self.m();
        let mut r = vec![one.clone(); m + 1];
        if m == 0 {
            return r;
        }
        r[m - 1] = self.a[m - 1].clone();
        for k in (0..m.saturating_sub(1)).rev() {
            r[k] = self.a[k].clone() * r[k + 1].clone() - self.alpha[k + 1].clone() * self.lz.clone() * r[k + 2].clone();
        }
        r
    }

    /// Cofactors C_{k,i}, k = 0..m-1, so that the Cramer numerator of g_i is
    /// D_i = sum_k b_k C_{k,i}.
    pub fn cofactor_column(&self, i: usize, leading: &[T], trailing: &[T], one: T) -> Vec<T> {
        let m = self.m();
        let mut out = Vec::with_capacity(m);
        for k in 0..m {
            let v = if k < i {
                let mut p = one.clone();
                for _ in k..i {
                    p = p * self.lz.clone();
                }
                p * leading[k].clone() * trailing[i + 1].clone()
            } else if k == i {
                leading[i].clone() * trailing[i + 1].clone()
            } else {
                let mut p = one.clone();
                for r in i + 1..=k {
                    p = p * self.alpha[r].clone();
                }
                leading[i].clone() * p * trailing[k + 1].clone()
            };
            out.push(v);
        }
        out
    }
}

/// Layout of the unknown probabilities pi(i,j) with K <= i+j <= m-1,
/// stored by total n, then by i.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub m: usize,
    pub k: usize,
}

impl Layout {
    pub fn count(&self) -> usize {
        (self.m + self.k + 1) * (self.m - self.k) / 2
    }

    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        let n = i + j;
        if n < self.k || n >= self.m {
            return None;
        }
        Some(n * (n + 1) / 2 - self.k * (self.k + 1) / 2 + i)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.k..self.m).flat_map(|n| (0..=n).map(move |i| (i, n - i)))
    }
}

/// b_i(z) as a list of (unknown index, coefficient) pairs.
///
/// Rows above the threshold carry mu2 (z-1) sum_j (m-i-j) pi(i,j) z^j. Rows
/// i <= K start at j0 = K-i, where all servers are stopped, and pick up the
/// inflow into the stopped states instead.
pub(crate) fn b_terms<T: Scalar>(
    model: &MultiServerModel,
    layout: &Layout,
    i: usize,
    z: &T,
    c: &impl Fn(f64) -> T,
) -> Vec<(usize, T)> {
    let (m, k) = (model.m, model.threshold);
    let (mu1, mu2, q) = (model.mu1, model.mu2, model.q);
    let zm1 = z.clone() - c(1.0);
    let zpow = |p: usize| {
        let mut v = c(1.0);
        for _ in 0..p {
            v = v * z.clone();
        }
        v
    };
    let mut out = Vec::new();
    let j_first = if i <= k {
        let j0 = k - i;
        let own = c(i as f64 * mu1) * z.clone() + c((m - i) as f64 * mu2) * zm1.clone();
        if let Some(u) = layout.index(i, j0) {
            out.push((u, own * zpow(j0)));
        }
        if j0 >= 1 {
            if let Some(u) = layout.index(i + 1, j0 - 1) {
                let phase = c(1.0 - q) + c(q) * z.clone();
                out.push((u, c(-((i + 1) as f64) * mu1) * phase * zpow(j0)));
            }
        }
        j0 + 1
    } else {
        0
    };
    for j in j_first..m.saturating_sub(i) {
        if let Some(u) = layout.index(i, j) {
            out.push((u, c(mu2 * (m - i - j) as f64) * zm1.clone() * zpow(j)));
        }
    }
    out
}
