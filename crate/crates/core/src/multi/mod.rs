//! Exact steady state of the m-server FB system, with an optional switch-off
//! threshold K: while fewer than K jobs are present every server is stopped.
//!
//! Unknowns are pi(i,j) for K <= i+j <= m-1. They satisfy the balance
//! equations of the states with i+j <= m-2, one condition D_0(z_k) = 0 per
//! zero z_k of D(z) = det A(z) in (0,1), and the idle-server identity. The
//! generating functions g_i(z) = sum_j pi(i,j) z^j then follow from Cramer's
//! rule, expanded as power series around z = 1 where A(z) is singular.

mod precise;
mod roots;
mod tridiag;

use log::debug;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::Matrix;
use crate::model::{CostCoefficients, MultiServerModel};
use crate::series::PowerSeries;
use precise::dd;
use tridiag::{b_terms, Entries, Layout};
use twofloat::TwoFloat;

pub use roots::{d_roots, dprime_at_1, QSequence};

const NEGATIVE_TOL: f64 = 1e-9;

/// Series length at z = 1: after the common zero is stripped this leaves
/// value and slope.
const LEN_AT_ONE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiServerSolution {
    pub m: usize,
    pub threshold: usize,
    /// pi(i,j) for K <= i+j <= m-1, ordered by total then by i.
    pub boundary: Vec<(usize, usize, f64)>,
    /// g_0(1) .. g_m(1): probability of i foreground jobs.
    pub g_at_1: Vec<f64>,
    /// g_0'(1) .. g_{m-1}'(1).
    pub g_prime_at_1: Vec<f64>,
    /// Probability of m or more foreground jobs.
    pub tail_at_1: f64,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    /// Mean number of operative (not stopped) servers.
    pub u: f64,
    /// p_0 .. p_{m-1}.
    pub p: Vec<f64>,
    /// Zeros of D(z) in (0,1).
    pub roots: Vec<f64>,
}

impl MultiServerSolution {
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        Layout { m: self.m, k: self.threshold }
            .index(i, j)
            .map_or(0.0, |u| self.boundary[u].2)
    }

    /// Left side minus right side of the idle-server identity
    /// m sum_i pi(i,K-i) + sum_{n=K+1}^{m-1} (m-n) p_n = m - rho1 - rho2.
    pub fn idle_server_residual(&self, model: &MultiServerModel) -> f64 {
        let m = self.m as f64;
        let k = self.threshold;
        let lhs: f64 = self
            .p
            .iter()
            .enumerate()
            .skip(k)
            .map(|(n, p)| if n == k { m * p } else { (m - n as f64) * p })
            .sum();
        lhs - (m - model.rho1() - model.rho2())
    }

    /// sum_i g_i(1) + g(1,1) - 1.
    pub fn normalization_residual(&self) -> f64 {
        self.g_at_1[..self.m].iter().sum::<f64>() + self.tail_at_1 - 1.0
    }
}

/// Holding plus energy cost c1 L + c2 U.
pub fn evaluate_cost_multi(solution: &MultiServerSolution, costs: &CostCoefficients) -> f64 {
    costs.c1 * solution.l + costs.c2 * solution.u
}

/// Solves any threshold 0 <= K <= m-1.
pub fn solve(model: &MultiServerModel) -> Result<MultiServerSolution> {
    if model.threshold == 0 {
        solve_fixed_m(model)
    } else {
        solve_threshold(model)
    }
}

/// The uncontrolled system (K = 0).
pub fn solve_fixed_m(model: &MultiServerModel) -> Result<MultiServerSolution> {
    if model.threshold != 0 {
        return Err(Error::InvalidModel(format!("solve_fixed_m needs threshold 0, got {}", model.threshold)));
    }
    solve_any(model)
}

/// Servers switched off below K >= 1 jobs.
pub fn solve_threshold(model: &MultiServerModel) -> Result<MultiServerSolution> {
    if model.threshold == 0 {
        return solve_fixed_m(model);
    }
    if model.threshold >= model.m {
        return Err(Error::InvalidModel(format!(
            "threshold {} must be below m = {}",
            model.threshold, model.m
        )));
    }
    solve_any(model)
}

fn solve_any(model: &MultiServerModel) -> Result<MultiServerSolution> {
    model.ensure_stable()?;
    let (m, k) = (model.m, model.threshold);
    let layout = Layout { m, k };
    if model.lambda == 0.0 {
        return Ok(empty_system(model, layout));
    }
    let roots = d_roots(model)?;
    let sharp = roots.iter().map(|&z| precise::refine_root(model, z)).collect::<Result<Vec<_>>>()?;
    let (a, rhs) = build_system(model, &layout, &sharp)?;
    let mut pi: Vec<f64> = precise::solve(a, rhs)?.iter().map(|v| v.hi() + v.lo()).collect();
    for (u, (i, j)) in layout.cells().enumerate() {
        if pi[u] < 0.0 {
            if pi[u] < -NEGATIVE_TOL {
                return Err(Error::NegativeProbability { i, j, value: pi[u] });
            }
            debug!("clamping pi({i},{j}) = {:.3e} to zero", pi[u]);
            pi[u] = 0.0;
        }
    }
    assemble(model, layout, pi, roots)
}

/// Row-scaled linear system for the unknowns of `layout`, in double-double.
fn build_system(
    model: &MultiServerModel,
    layout: &Layout,
    roots: &[TwoFloat],
) -> Result<(Vec<Vec<TwoFloat>>, Vec<TwoFloat>)> {
    let (m, k) = (model.m, model.threshold);
    let unknowns = layout.count();
    let mut plain = Matrix::zeros(unknowns, unknowns);
    let mut row = 0;
    balance_rows(model, layout, &mut plain, &mut row);
    let mut a: Vec<Vec<TwoFloat>> = (0..unknowns).map(|r| plain.row(r).iter().map(|&v| dd(v)).collect()).collect();
    let mut rhs = vec![dd(0.0); unknowns];

    let r = model.r();
    for &z in roots {
        let y = precise::y1(r, model.q, z)?;
        let e = Entries::new(model, &z, &y, &dd);
        let lead = e.leading(dd(1.0));
        let trail = e.trailing(dd(1.0));
        let col0 = e.cofactor_column(0, &lead, &trail, dd(1.0));
        for (i, ci) in col0.iter().enumerate() {
            for (u, coef) in b_terms(model, layout, i, &z, &dd) {
                a[row][u] += *ci * coef;
            }
        }
        row += 1;
    }

    for (u, (i, j)) in layout.cells().enumerate() {
        let n = i + j;
        a[row][u] = dd(if n == k { m as f64 } else { (m - n) as f64 });
    }
    rhs[row] = dd(m as f64 - model.rho1() - model.rho2());
    debug_assert_eq!(row + 1, unknowns);

    for (row, b) in a.iter_mut().zip(rhs.iter_mut()) {
        let s = row.iter().fold(0.0f64, |acc, v| acc.max(v.hi().abs()));
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
            *b /= s;
        }
    }
    Ok((a, rhs))
}

/// Balance of every state with K <= i+j <= m-2, written as outflow - inflow.
/// Inside this region every job is in service, and states at level K are
/// stopped: they only see arrivals.
fn balance_rows(model: &MultiServerModel, layout: &Layout, a: &mut Matrix, row: &mut usize) {
    let (m, k) = (model.m, model.threshold);
    let (lam, mu1, mu2, q) = (model.lambda, model.mu1, model.mu2, model.q);
    for n in k..m.saturating_sub(1) {
        for i in 0..=n {
            let j = n - i;
            let r = *row;
            let here = layout.index(i, j).expect("balance state is an unknown");
            let active = n > k;
            let out = lam + if active { i as f64 * mu1 + j as f64 * mu2 } else { 0.0 };
            a[(r, here)] += out;
            if i >= 1 {
                if let Some(u) = layout.index(i - 1, j) {
                    a[(r, u)] -= lam;
                }
            }
            if j >= 1 && active {
                if let Some(u) = layout.index(i + 1, j - 1) {
                    a[(r, u)] -= q * (i + 1) as f64 * mu1;
                }
            }
            if let Some(u) = layout.index(i + 1, j) {
                a[(r, u)] -= (1.0 - q) * (i + 1) as f64 * mu1;
            }
            if let Some(u) = layout.index(i, j + 1) {
                a[(r, u)] -= (j + 1) as f64 * mu2;
            }
            *row += 1;
        }
    }
}

fn empty_system(model: &MultiServerModel, layout: Layout) -> MultiServerSolution {
    let m = model.m;
    let mut g_at_1 = vec![0.0; m + 1];
    g_at_1[0] = 1.0;
    let mut p = vec![0.0; m];
    p[0] = 1.0;
    let boundary = layout
        .cells()
        .map(|(i, j)| (i, j, if i + j == 0 { 1.0 } else { 0.0 }))
        .collect();
    MultiServerSolution {
        m,
        threshold: model.threshold,
        boundary,
        g_at_1,
        g_prime_at_1: vec![0.0; m],
        tail_at_1: 0.0,
        l1: 0.0,
        l2: 0.0,
        l: 0.0,
        u: 0.0,
        p,
        roots: Vec::new(),
    }
}

/// g_i(1), g_i'(1) and the tail from the solved boundary.
fn assemble(model: &MultiServerModel, layout: Layout, pi: Vec<f64>, roots: Vec<f64>) -> Result<MultiServerSolution> {
    let (m, k) = (model.m, model.threshold);
    let r = model.r();
    let c = |v: f64| PowerSeries::constant(v, LEN_AT_ONE);
    let z = PowerSeries::linear(1.0, 1.0, LEN_AT_ONE);
    let y1 = kernel::y1_series(r, model.q, 1.0, LEN_AT_ONE)?;
    let e = Entries::new(model, &z, &y1, &c);
    let lead = e.leading(c(1.0));
    let trail = e.trailing(c(1.0));
    let det = &lead[m];

    let b: Vec<PowerSeries> = (0..m)
        .map(|i| {
            b_terms(model, &layout, i, &z, &c)
                .into_iter()
                .fold(PowerSeries::zero(LEN_AT_ONE), |acc, (u, coef)| acc + coef.scale(pi[u]))
        })
        .collect();

    let mut g_series = Vec::with_capacity(m);
    for i in 0..m {
        let col = e.cofactor_column(i, &lead, &trail, c(1.0));
        let num = col.iter().zip(&b).fold(PowerSeries::zero(LEN_AT_ONE), |acc, (ck, bk)| acc + ck * bk);
        g_series.push(num.div_common_zero(det, 1));
    }

    let mut g_at_1: Vec<f64> = g_series.iter().map(|s| s.coeff(0)).collect();
    let g_prime_at_1: Vec<f64> = g_series.iter().map(|s| s.coeff(1)).collect();
    let g_last = g_at_1[m - 1];
    g_at_1.push(r * g_last);

    // g(1,z) = g_{m-1}(z) / (y2(z) - 1)
    let y2_minus_1 = (c((1.0 + r) / r - 1.0) - y1).truncate(2);
    let tail = g_series[m - 1].div(&y2_minus_1);
    let tail_at_1 = tail.coeff(0);

    let l1 = (0..m).map(|i| i as f64 * g_at_1[i]).sum::<f64>()
        + g_at_1[m] * (m as f64 * (1.0 - r) + r) / (1.0 - r).powi(2);
    let l2 = g_prime_at_1.iter().sum::<f64>() + tail.coeff(1);

    let p: Vec<f64> = (0..m)
        .map(|n| (0..=n).filter_map(|i| layout.index(i, n - i)).map(|u| pi[u]).sum())
        .collect();
    let stopped = if k < m { p[k] } else { 0.0 };
    let u = m as f64 * (1.0 - stopped);

    let boundary = layout.cells().zip(&pi).map(|((i, j), &v)| (i, j, v)).collect();
    Ok(MultiServerSolution {
        m,
        threshold: k,
        boundary,
        g_at_1,
        g_prime_at_1,
        tail_at_1,
        l1,
        l2,
        l: l1 + l2,
        u,
        p,
        roots,
    })
}

#[derive(Serialize)]
struct SolutionWire<'a> {
    #[serde(rename = "L1")]
    l1: f64,
    #[serde(rename = "L2")]
    l2: f64,
    #[serde(rename = "L")]
    l: f64,
    p: &'a [f64],
    tail_mass: f64,
    energy_rate: f64,
    boundary: &'a [(usize, usize, f64)],
    #[serde(rename = "U")]
    u: f64,
    threshold: usize,
    roots: &'a [f64],
    g_at_1: &'a [f64],
}

impl Serialize for MultiServerSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SolutionWire {
            l1: self.l1,
            l2: self.l2,
            l: self.l,
            p: &self.p,
            tail_mass: 1.0 - self.p.iter().sum::<f64>(),
            energy_rate: self.u,
            boundary: &self.boundary,
            u: self.u,
            threshold: self.threshold,
            roots: &self.roots,
            g_at_1: &self.g_at_1,
        }
        .serialize(s)
    }
}
