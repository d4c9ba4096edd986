//! Zeros of D(z) = det A(z) inside (0,1), isolated through the interlacing
//! zeros of the leading minors Q_1 .. Q_{m-1}.

use super::tridiag::Entries;
use crate::error::{Error, Result};
use crate::kernel;
use crate::model::MultiServerModel;

/// Leading minors Q_0 .. Q_{m-1} and the determinant D at real z.
#[derive(Debug, Clone, Copy)]
pub struct QSequence<'a> {
    model: &'a MultiServerModel,
}

impl<'a> QSequence<'a> {
    pub fn new(model: &'a MultiServerModel) -> Self {
        Self { model }
    }

    /// Q_0(z) .. Q_m(z); the last entry is D(z). Needs z where the kernel
    /// discriminant is positive (any z <= 1 for a stable model).
    pub fn values(&self, z: f64) -> Result<Vec<f64>> {
        let y = kernel::y1(self.model.r(), self.model.q, z)?;
        Ok(Entries::new(self.model, &z, &y, &|v| v).leading(1.0))
    }

    /// Q_i(z) for i < m. These are polynomials and need no kernel root.
    pub fn q(&self, i: usize, z: f64) -> f64 {
        assert!(i < self.model.m, "Q_{i} is only a polynomial for i < m");
        // a_{m-1} is never touched for i < m, so any y works
        let e = Entries::new(self.model, &z, &0.0, &|v| v);
        e.leading(1.0)[i]
    }

    pub fn d(&self, z: f64) -> Result<f64> {
        Ok(self.values(z)?[self.model.m])
    }

    /// Largest |D| on a 1001-point grid of [0,1], the yardstick for residuals at roots.
    pub fn d_scale(&self) -> Result<f64> {
        (0..=1000).try_fold(0.0f64, |acc, k| Ok(acc.max(self.d(k as f64 / 1000.0)?.abs())))
    }

    /// Zeros of Q_i inside (0,1), ascending; Q_i has exactly i of them.
    pub fn roots_of(&self, i: usize) -> Result<Vec<f64>> {
        let mut roots: Vec<f64> = Vec::new();
        for level in 1..=i {
            let mut grid = Vec::with_capacity(level + 1);
            grid.push(0.0);
            grid.extend_from_slice(&roots);
            grid.push(1.0);
            let f = |z: f64| Ok(self.q(level, z));
            roots = bracketed_roots(&f, &grid, &format!("Q_{level}"))?;
        }
        Ok(roots)
    }
}

/// One root of `f` inside each consecutive interval of `grid`.
fn bracketed_roots(f: &dyn Fn(f64) -> Result<f64>, grid: &[f64], what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        let root = bisect(f, w[0], w[1])?.ok_or_else(|| {
            Error::RootIsolation(format!("{what} has no sign change on ({:.6e}, {:.6e})", w[0], w[1]))
        })?;
        out.push(root);
    }
    Ok(out)
}

/// Bisection to relative width 1e-13. None when the endpoints share a sign.
fn bisect(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<Option<f64>> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(Some(lo));
    }
    if fhi == 0.0 {
        return Ok(Some(hi));
    }
    if flo.signum() == fhi.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(Some(mid));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// The m-1 zeros of D(z) in (0,1), ascending.
pub fn d_roots(model: &MultiServerModel) -> Result<Vec<f64>> {
    model.ensure_stable()?;
    let m = model.m;
    if m == 1 {
        return Ok(Vec::new());
    }
    let seq = QSequence::new(model);
    let inner = seq.roots_of(m - 1)?;
    let mut grid = Vec::with_capacity(m);
    grid.push(0.0);
    grid.extend_from_slice(&inner);
    let f = |z: f64| seq.d(z);
    bracketed_roots(&f, &grid, "D").map_err(|e| match e {
        Error::RootIsolation(msg) => Error::RootIsolation(format!(
            "{msg}; D'(1) = {:.6e}",
            dprime_at_1(model).unwrap_or(f64::NAN)
        )),
        other => other,
    })
}

/// Closed-form D'(1).
pub fn dprime_at_1(model: &MultiServerModel) -> Result<f64> {
    let m = model.m;
    let mf = m as f64;
    let (rho1, rho2) = (model.rho1(), model.rho2());
    if (mf - rho1).abs() < 1e-300 {
        return Err(Error::Unstable(format!("rho1 = m = {m}: D'(1) bracket is undefined")));
    }
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut fact = 1.0;
    for j in 0..m {
        if j > 0 {
            term *= rho1 / j as f64;
            fact *= j as f64;
        }
        sum += term;
    }
    // term is now rho1^{m-1}/(m-1)!, fact is (m-1)!
    let last = term * rho1 / mf;
    sum += mf * last / (mf - rho1);
    Ok(model.mu1.powi(m as i32 - 1) * fact * model.mu2 * (mf - rho1 - rho2) * sum)
}
