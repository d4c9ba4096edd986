//! Double-double helpers for the boundary system.
//!
//! The root conditions are evaluated at zeros of D(z) that crowd towards 0 as
//! m grows, so their rows are close to collinear; at m = 10 plain f64 loses
//! every digit. Roots, rows and elimination are carried in ~32 digits.

use twofloat::TwoFloat;

use super::tridiag::{Entries, Scalar};
use crate::error::{Error, Result};
use crate::model::MultiServerModel;

impl Scalar for TwoFloat {}

pub(crate) fn dd(v: f64) -> TwoFloat {
    TwoFloat::from(v)
}

/// a / b to full double-double accuracy. twofloat's own quotient of two
/// TwoFloat values forms its reciprocal residual without an fma and only
/// keeps f64 accuracy, so this corrects the f64 quotient with two
/// residual steps instead.
pub(crate) fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    dd(q1) + dd(q2) + dd(q3)
}

/// y1(z) in the cancellation-free form used by the f64 kernel.
pub(crate) fn y1(r: f64, q: f64, z: TwoFloat) -> Result<TwoFloat> {
    let one = dd(1.0);
    let disc = (one - dd(r)) * (one - dd(r)) - dd(4.0 * r * q) * (z - one);
    if !(disc.hi() > 0.0) {
        return Err(Error::Discriminant { z: z.hi() });
    }
    Ok(div(dd(2.0) * (one - dd(q) + dd(q) * z), one + dd(r) + disc.sqrt()))
}

pub(crate) fn d(model: &MultiServerModel, z: TwoFloat) -> Result<TwoFloat> {
    let y = y1(model.r(), model.q, z)?;
    Ok(Entries::new(model, &z, &y, &dd).leading(dd(1.0))[model.m])
}

/// Polishes an f64 zero of D by bisection in double-double.
pub(crate) fn refine_root(model: &MultiServerModel, z: f64) -> Result<TwoFloat> {
    let sign = |v: TwoFloat| v.hi().signum();
    let mut delta = 4.0 * f64::EPSILON * z.abs();
    let (mut lo, mut hi);
    loop {
        lo = dd(z - delta);
        hi = dd(z + delta);
        if sign(d(model, lo)?) != sign(d(model, hi)?) {
            break;
        }
        delta *= 4.0;
        if delta > 1e-6 * z.abs() {
            // no bracket near z: D is flat beyond f64 resolution here, keep z
            return Ok(dd(z));
        }
    }
    let mut flo = sign(d(model, lo)?);
    for _ in 0..70 {
        let mid = (lo + hi) * dd(0.5);
        let fm = d(model, mid)?;
        if fm.hi() == 0.0 {
            return Ok(mid);
        }
        if sign(fm) == flo {
            lo = mid;
            flo = sign(fm);
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * dd(0.5))
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve(mut a: Vec<Vec<TwoFloat>>, mut b: Vec<TwoFloat>) -> Result<Vec<TwoFloat>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.hi().abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].hi().abs().total_cmp(&a[y][col].hi().abs()))
            .expect("non-empty pivot range");
        let best = a[piv][col].hi().abs();
        if best <= 1e-28 * scale {
            return Err(Error::Singular { pivot: best, scale });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = div(a[row][col], a[col][col]);
            if f.hi() == 0.0 {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![dd(0.0); n];
    for row in (0..n).rev() {
        let mut v = b[row];
        for k in row + 1..n {
            v -= a[row][k] * x[k];
        }
        x[row] = div(v, a[row][row]);
    }
    Ok(x)
}
