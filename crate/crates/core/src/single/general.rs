//! General-K solution via the two-dimensional generating function.
//!
//! Unknowns are pi(i,j) for i+j <= K. They satisfy the balance equations of
//! the states below K, the K Maclaurin conditions that make g0(z) start at
//! z^K, and normalization. Every auxiliary quantity (g0(1), G(1,1), ...) is
//! linear in the unknowns, so matrix rows are read off by evaluating it on
//! unit vectors.

use log::debug;

use super::{BoundaryProbabilities, SingleServerSolution};
use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::{Lu, Matrix};
use crate::model::SingleServerModel;
use crate::series::PowerSeries;

/// Solved probabilities below this are treated as formulation errors.
const NEGATIVE_TOL: f64 = 1e-9;

/// Series length used at z = 1: one common zero is stripped, leaving value,
/// slope and one spare coefficient.
const LEN_AT_ONE: usize = 4;

pub fn solve_general(model: &SingleServerModel) -> Result<SingleServerSolution> {
    model.ensure_stable()?;
    let k = model.k();
    if let Some(n) = (1..=k).find(|&n| model.speeds.at(n) == 0.0) {
        return Err(Error::Unsupported(format!(
            "speed s{n} is zero; use the zero-low-speed solution"
        )));
    }
    if model.lambda == 0.0 {
        let mut b = BoundaryProbabilities::zeros(k);
        b.set(0, 0, 1.0);
        return Ok(SingleServerSolution::assemble(model, b, 0.0, 0.0, 0.0, 0.0));
    }

    let unknowns = BoundaryProbabilities::count(k);
    let ctx = Context::new(model)?;
    let mut a = Matrix::zeros(unknowns, unknowns);
    let mut rhs = vec![0.0; unknowns];
    let mut row = 0;

    balance_rows(model, &mut a, &mut row);

    for r in ctx.maclaurin_rows(model) {
        a.row_mut(row).copy_from_slice(&r);
        row += 1;
    }

    let mut unit = vec![0.0; unknowns];
    for u in 0..unknowns {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[u] = 1.0;
        let below = if tri_total(u) < k { 1.0 } else { 0.0 };
        let t = ctx.tail(model, &unit);
        a[(row, u)] = below + t.g11;
    }
    rhs[row] = 1.0;
    debug_assert_eq!(row + 1, unknowns);

    for r in 0..unknowns {
        let s = a.row(r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s > 0.0 {
            a.row_mut(r).iter_mut().for_each(|v| *v /= s);
            rhs[r] /= s;
        }
    }
    let mut pi = Lu::new(&a)?.solve(&rhs);

    for u in 0..unknowns {
        if pi[u] < 0.0 {
            let (i, j) = tri_cell(u);
            if pi[u] < -NEGATIVE_TOL {
                return Err(Error::NegativeProbability { i, j, value: pi[u] });
            }
            debug!("clamping pi({i},{j}) = {:.3e} to zero", pi[u]);
            pi[u] = 0.0;
        }
    }

    let t = ctx.tail(model, &pi);
    let boundary = BoundaryProbabilities::from_vec(k, pi);
    Ok(SingleServerSolution::assemble(model, boundary, t.g0_at_1, t.g11, t.gy, t.gz))
}

/// Total job count of the unknown with storage index `u`.
fn tri_total(u: usize) -> usize {
    let mut n = 0;
    while (n + 1) * (n + 2) / 2 <= u {
        n += 1;
    }
    n
}

fn tri_cell(u: usize) -> (usize, usize) {
    let n = tri_total(u);
    let i = u - n * (n + 1) / 2;
    (i, n - i)
}

/// Balance equations of every state with fewer than K jobs, written as
/// (outflow) - (inflow) = 0 from the transition structure of the chain.
fn balance_rows(model: &SingleServerModel, a: &mut Matrix, row: &mut usize) {
    let k = model.k();
    let (lam, q) = (model.lambda, model.q());
    let idx = BoundaryProbabilities::index;
    for n in 0..k {
        for i in 0..=n {
            let j = n - i;
            let r = *row;
            let out = lam
                + if i > 0 {
                    model.mu1_at(n)
                } else if j > 0 {
                    model.mu2_at(n)
                } else {
                    0.0
                };
            a[(r, idx(i, j))] += out;
            if i > 0 {
                a[(r, idx(i - 1, j))] -= lam;
            }
            if j > 0 {
                a[(r, idx(i + 1, j - 1))] -= q * model.mu1_at(n);
            }
            a[(r, idx(i + 1, j))] -= (1.0 - q) * model.mu1_at(n + 1);
            if i == 0 {
                a[(r, idx(0, j + 1))] -= model.mu2_at(n + 1);
            }
            *row += 1;
        }
    }
}

/// Values of the part of the transform covering states with K or more jobs.
#[derive(Debug, Clone, Copy)]
struct Tail {
    g0_at_1: f64,
    /// G(1,1): probability of K or more jobs.
    g11: f64,
    /// dG/dy at (1,1): foreground jobs in those states.
    gy: f64,
    /// dG/dz at (1,1): background jobs in those states.
    gz: f64,
}

struct Context {
    k: usize,
    y_at_zero: PowerSeries,
    y_at_one: PowerSeries,
}

impl Context {
    fn new(model: &SingleServerModel) -> Result<Self> {
        let (rho, q, k) = (model.rho1(), model.q(), model.k());
        Ok(Self {
            k,
            y_at_zero: kernel::y1_series(rho, q, 0.0, k)?,
            y_at_one: kernel::y1_series(rho, q, 1.0, LEN_AT_ONE)?,
        })
    }

    /// Coefficients of z^0 .. z^{K-1} of
    /// N(z) = sum_j z^{K-j} y1^{j-1} [lambda y1 pi(j-1,K-j) - mu1 (1-q) pi(j,K-j)],
    /// each as a row over the unknowns.
    fn maclaurin_rows(&self, model: &SingleServerModel) -> Vec<Vec<f64>> {
        let k = self.k;
        let unknowns = BoundaryProbabilities::count(k);
        let (lam, mu1, q) = (model.lambda, model.mu1(), model.q());
        let ypow: Vec<PowerSeries> = (0..=k).map(|p| self.y_at_zero.powi(p)).collect();
        let mut rows = vec![vec![0.0; unknowns]; k];
        for j in 1..=k {
            let up = ypow[j].shift_up(k - j).scale(lam);
            let down = ypow[j - 1].shift_up(k - j).scale(-mu1 * (1.0 - q));
            let (u_up, u_down) = (BoundaryProbabilities::index(j - 1, k - j), BoundaryProbabilities::index(j, k - j));
            for (c, r) in rows.iter_mut().enumerate() {
                r[u_up] += up.coeff(c);
                r[u_down] += down.coeff(c);
            }
        }
        rows
    }

    /// g0 expanded in t = z - 1, after removing the common zero of its
    /// numerator and denominator at z = 1.
    fn g0_at_one(&self, model: &SingleServerModel, pi: &[f64]) -> PowerSeries {
        let k = self.k;
        let len = LEN_AT_ONE;
        let (lam, mu1, mu2, q) = (model.lambda, model.mu1(), model.mu2(), model.q());
        let p = |i: usize, j: usize| pi[BoundaryProbabilities::index(i, j)];
        let y = &self.y_at_one;
        let z = PowerSeries::linear(1.0, 1.0, len);
        let one = PowerSeries::constant(1.0, len);
        let mut n_sum = PowerSeries::zero(len);
        for j in 1..=k {
            let inner = y.scale(lam * p(j - 1, k - j)).add_scalar(-mu1 * (1.0 - q) * p(j, k - j));
            n_sum = &n_sum + &(&z.powi(k - j) * &(&y.powi(j - 1) * &inner));
        }
        let num = &z.powi(k).scale(mu2 * p(0, k)) - &(&z * &n_sum);
        let den = &(&one - &z).scale(mu2) - &(&z * &(&one - y)).scale(lam);
        num.div_common_zero(&den, 1)
    }

    /// G along the line y = 1 + alpha t, z = 1 + beta t: value and
    /// directional derivative at t = 0.
    fn along(&self, model: &SingleServerModel, pi: &[f64], g0: &PowerSeries, alpha: f64, beta: f64) -> (f64, f64) {
        let k = self.k;
        let len = 3;
        let (lam, mu1, mu2, q) = (model.lambda, model.mu1(), model.mu2(), model.q());
        let p = |i: usize, j: usize| pi[BoundaryProbabilities::index(i, j)];
        let y = PowerSeries::linear(1.0, alpha, len);
        let z = PowerSeries::linear(1.0, beta, len);
        let one = PowerSeries::constant(1.0, len);
        let g0_path = PowerSeries::from_coeffs((0..len).map(|n| g0.coeff(n) * beta.powi(n as i32)).collect());

        // a(y,z) = mu1 z (y - 1 + q - q z) + mu2 y (1 - z)
        let a = &(&z * &(&y - &z.scale(q)).add_scalar(q - 1.0)).scale(mu1) + &(&y * &(&one - &z)).scale(mu2);
        // b(y,z) = -mu2 y z^K pi(0,K) + sum_j z^{K+1-j} y^j [lambda y pi(j-1,K-j) - mu1 (1-q) pi(j,K-j)]
        let mut b = (&y * &z.powi(k)).scale(-mu2 * p(0, k));
        for j in 1..=k {
            let inner = y.scale(lam * p(j - 1, k - j)).add_scalar(-mu1 * (1.0 - q) * p(j, k - j));
            b = &b + &(&(&z.powi(k + 1 - j) * &y.powi(j)) * &inner);
        }
        // d(y,z) = z [lambda y (1 - y) - mu1 (q z + 1 - q - y)]
        let d = &z * &(&(&y * &(&one - &y)).scale(lam) - &(&z.scale(q) - &y).add_scalar(1.0 - q).scale(mu1));
        let g = (&(&a * &g0_path) + &b).div_common_zero(&d, 1);
        (g.coeff(0), g.coeff(1))
    }

    fn tail(&self, model: &SingleServerModel, pi: &[f64]) -> Tail {
        let g0 = self.g0_at_one(model, pi);
        let (g11, gy) = self.along(model, pi, &g0, 1.0, 0.0);
        let (_, anti) = self.along(model, pi, &g0, -1.0, 1.0);
        Tail { g0_at_1: g0.coeff(0), g11, gy, gz: anti + gy }
    }
}

/// G(1,1) and the derivative of G(z,z) at z = 1 from the diagonal closed form
/// G(z,z) = ([mu1(1-q) - mu2] g0(z) + lambda z^K p_{K-1}) / (mu1(1-q) - lambda z).
///
/// Returns `None` when the denominator at z = 1 is too small for the form to
/// be trusted (lambda close to mu1 (1-q)).
pub fn diagonal_transform(model: &SingleServerModel, boundary: &BoundaryProbabilities) -> Result<Option<(f64, f64)>> {
    let ctx = Context::new(model)?;
    let (lam, mu1, mu2, q) = (model.lambda, model.mu1(), model.mu2(), model.q());
    let h1 = mu1 * (1.0 - q) - lam;
    if h1.abs() < 1e-4 * mu1 {
        return Ok(None);
    }
    let k = model.k();
    let g0 = ctx.g0_at_one(model, boundary.as_slice()).truncate(2);
    let z = PowerSeries::linear(1.0, 1.0, 2);
    let num = &g0.scale(mu1 * (1.0 - q) - mu2) + &z.powi(k).scale(lam * boundary.total(k - 1));
    let den = z.scale(-lam).add_scalar(mu1 * (1.0 - q));
    let g = num.div(&den);
    Ok(Some((g.coeff(0), g.coeff(1))))
}

/// Series of g0 at z = 0 up to z^K; its z^K coefficient must equal pi(0,K)
/// and the lower ones must vanish.
pub fn g0_series_at_zero(model: &SingleServerModel, boundary: &BoundaryProbabilities) -> Result<PowerSeries> {
    let k = model.k();
    let len = k + 1;
    let (lam, mu1, mu2, q) = (model.lambda, model.mu1(), model.mu2(), model.q());
    let y = kernel::y1_series(model.rho1(), q, 0.0, len)?;
    let z = PowerSeries::linear(0.0, 1.0, len);
    let one = PowerSeries::constant(1.0, len);
    let p = |i: usize, j: usize| boundary.get(i, j);
    let mut n_sum = PowerSeries::zero(len);
    for j in 1..=k {
        let inner = y.scale(lam * p(j - 1, k - j)).add_scalar(-mu1 * (1.0 - q) * p(j, k - j));
        n_sum = &n_sum + &(&z.powi(k - j) * &(&y.powi(j - 1) * &inner));
    }
    let num = &z.powi(k).scale(mu2 * p(0, k)) - &(&z * &n_sum);
    let den = &(&one - &z).scale(mu2) - &(&z * &(&one - &y)).scale(lam);
    Ok(num.div(&den))
}

/// Value of N(z) / z^{K-1} at a small z (should be O(z) on a solution).
pub fn maclaurin_residual(model: &SingleServerModel, boundary: &BoundaryProbabilities, z: f64) -> Result<f64> {
    let k = model.k();
    let (lam, mu1, q) = (model.lambda, model.mu1(), model.q());
    let y = kernel::y1(model.rho1(), q, z)?;
    let n: f64 = (1..=k)
        .map(|j| {
            z.powi((k - j) as i32)
                * y.powi(j as i32 - 1)
                * (lam * y * boundary.get(j - 1, k - j) - mu1 * (1.0 - q) * boundary.get(j, k - j))
        })
        .sum();
    Ok(n / z.powi(k as i32 - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single::flow_balance_residual;

    fn model(lambda: f64, q: f64, speeds: Vec<f64>) -> SingleServerModel {
        SingleServerModel::from_parts(lambda, 5.0, 1.0, q, speeds, 2.0).unwrap()
    }

    #[test]
    fn k1_textbook_values() {
        let s = solve_general(&model(2.0, 0.1, vec![0.0, 1.0])).unwrap();
        assert!((s.boundary.get(0, 0) - 0.4).abs() < 1e-12);
        assert!((s.l1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.l2 - 0.6).abs() < 1e-12);
        assert!((s.g0_at_1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn no_background_gives_mm1() {
        for k in 1..=4 {
            let s = solve_general(&model(3.0, 0.0, vec![1.0; k + 1])).unwrap();
            assert!(s.l2.abs() < 1e-12);
            assert!((s.l1 - 1.5).abs() < 1e-10, "k={k} l1={}", s.l1);
        }
    }

    #[test]
    fn internal_identities_hold() {
        let m = model(2.5, 0.1, vec![0.0, 0.6, 1.0]);
        let s = solve_general(&m).unwrap();
        assert!(flow_balance_residual(&m, &s.boundary).abs() < 1e-12);
        let total: f64 = s.p_below_k.iter().sum::<f64>() + s.tail_mass;
        assert!((total - 1.0).abs() < 1e-12);
        let g0 = g0_series_at_zero(&m, &s.boundary).unwrap();
        assert!(g0.coeff(0).abs() < 1e-12 && g0.coeff(1).abs() < 1e-12);
        assert!((g0.coeff(2) - s.boundary.get(0, 2)).abs() < 1e-12);
        let r1 = maclaurin_residual(&m, &s.boundary, 1e-3).unwrap();
        let r2 = maclaurin_residual(&m, &s.boundary, 1e-4).unwrap();
        assert!(r2.abs() < 0.2 * r1.abs() + 1e-12);
    }

    #[test]
    fn diagonal_form_agrees_with_paths() {
        let m = model(1.5, 0.3, vec![0.2, 0.5, 0.8, 1.0]);
        let s = solve_general(&m).unwrap();
        let (g11, gd) = diagonal_transform(&m, &s.boundary).unwrap().unwrap();
        assert!((g11 - s.tail_mass).abs() < 1e-11);
        let below: f64 = s.boundary.iter().filter(|c| c.0 + c.1 < 3).map(|(i, j, p)| (i + j) as f64 * p).sum();
        assert!((below + gd - s.l).abs() < 1e-10);
    }

    #[test]
    fn singular_diagonal_point_is_still_solved() {
        // lambda = mu1 (1 - q) makes the diagonal form 0/0 at z = 1
        let m = SingleServerModel::from_parts(2.5, 5.0, 5.0, 0.5, vec![0.0, 0.5, 1.0], 2.0).unwrap();
        let s = solve_general(&m).unwrap();
        assert!(diagonal_transform(&m, &s.boundary).unwrap().is_none());
        assert!(s.l.is_finite() && s.l > 0.0);
    }

    #[test]
    fn zero_speed_and_unstable_are_rejected() {
        assert!(matches!(solve_general(&model(1.0, 0.1, vec![0.0, 0.0, 1.0])), Err(Error::Unsupported(_))));
        assert!(matches!(solve_general(&model(4.0, 0.5, vec![0.0, 1.0])), Err(Error::Unstable(_))));
    }

    #[test]
    fn empty_system() {
        let s = solve_general(&model(0.0, 0.2, vec![0.0, 0.5, 1.0])).unwrap();
        assert_eq!(s.l, 0.0);
        assert_eq!(s.boundary.get(0, 0), 1.0);
    }

    #[test]
    fn cell_mapping() {
        for u in 0..21 {
            let (i, j) = tri_cell(u);
            assert_eq!(BoundaryProbabilities::index(i, j), u);
        }
    }
}
