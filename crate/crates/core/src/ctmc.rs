//! Truncated continuous-time Markov chain oracle.
//!
//! The chain is written down directly from its transitions (arrivals, phase
//! completions, background completions) on a box i <= Ni, j <= Nj and solved
//! by block elimination over levels of equal background count j. Phase-1
//! completions that move a job to the background raise j by one and
//! background completions lower it by one, so the generator is block
//! tridiagonal in j. The box grows until the probability on its far edges is
//! negligible.

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::model::{MultiServerModel, SingleServerModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Initial box size per dimension.
    pub start: usize,
    /// Largest box size tried before giving up.
    pub cap: usize,
    /// Probability allowed on the truncation edges.
    pub edge_mass: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { start: 64, cap: 2048, edge_mass: 1e-10 }
    }
}

/// Steady-state distribution of the truncated chain.
#[derive(Debug, Clone)]
pub struct CtmcSolution {
    pub ni: usize,
    pub nj: usize,
    /// probs[j][i], zero for states outside the recurrent class.
    probs: Vec<Vec<f64>>,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    /// Mass on the i = Ni and j = Nj edges.
    pub edge_mass: (f64, f64),
}

impl CtmcSolution {
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        if i > self.ni || j > self.nj {
            return 0.0;
        }
        self.probs[j][i]
    }

    /// P(i + j = n).
    pub fn total_marginal(&self, n: usize) -> f64 {
        (0..=n).map(|i| self.prob(i, n - i)).sum()
    }

    /// P(i = n).
    pub fn foreground_marginal(&self, n: usize) -> f64 {
        (0..=self.nj).map(|j| self.prob(n, j)).sum()
    }
}

/// One-step structure of a chain: rates out of (i, j) inside the box.
trait Dynamics {
    /// Pushes (target, rate) pairs; targets must lie inside the box.
    fn moves(&self, i: usize, j: usize, ni: usize, nj: usize, out: &mut Vec<((usize, usize), f64)>);
    /// Whether (i, j) belongs to the closed class the chain settles in.
    fn recurrent(&self, i: usize, j: usize) -> bool;
}

struct Single<'a>(&'a SingleServerModel);

impl Dynamics for Single<'_> {
    fn moves(&self, i: usize, j: usize, ni: usize, nj: usize, out: &mut Vec<((usize, usize), f64)>) {
        let m = self.0;
        let n = i + j;
        if i < ni {
            out.push(((i + 1, j), m.lambda));
        }
        if i > 0 {
            let rate = m.mu1_at(n);
            let q = m.q();
            // a background overflow at the edge is dropped
            let to_bg = if j < nj { (i - 1, j + 1) } else { (i - 1, j) };
            out.push((to_bg, rate * q));
            out.push(((i - 1, j), rate * (1.0 - q)));
        } else if j > 0 {
            out.push(((0, j - 1), m.mu2_at(n)));
        }
    }

    fn recurrent(&self, i: usize, j: usize) -> bool {
        let m = self.0;
        let k = m.k();
        let stopped_below = k > 1 && m.speeds.levels()[..k].iter().all(|&s| s == 0.0);
        if !stopped_below {
            return true;
        }
        if m.q() > 0.0 {
            j + 1 >= k
        } else {
            j == 0 && i + 1 >= k
        }
    }
}

struct Multi<'a>(&'a MultiServerModel);

impl Dynamics for Multi<'_> {
    fn moves(&self, i: usize, j: usize, ni: usize, nj: usize, out: &mut Vec<((usize, usize), f64)>) {
        let m = self.0;
        if i < ni {
            out.push(((i + 1, j), m.lambda));
        }
        if i + j <= m.threshold {
            // all servers off until the next arrival
            return;
        }
        let fg = i.min(m.m);
        let bg = j.min(m.m - fg);
        if fg > 0 {
            let rate = fg as f64 * m.mu1;
            let to_bg = if j < nj { (i - 1, j + 1) } else { (i - 1, j) };
            out.push((to_bg, rate * m.q));
            out.push(((i - 1, j), rate * (1.0 - m.q)));
        }
        if bg > 0 {
            out.push(((i, j - 1), bg as f64 * m.mu2));
        }
    }

    fn recurrent(&self, i: usize, j: usize) -> bool {
        i + j >= self.0.threshold
    }
}

pub fn ctmc_solve_single(model: &SingleServerModel, trunc: Truncation) -> Result<CtmcSolution> {
    model.ensure_stable()?;
    grow(&Single(model), trunc)
}

/// Solves the multiserver chain; `U` follows from the stopped-state mass.
pub fn ctmc_solve_multi(model: &MultiServerModel, trunc: Truncation) -> Result<CtmcSolution> {
    model.ensure_stable()?;
    grow(&Multi(model), trunc)
}

/// Mean number of operative servers for a multiserver chain solution.
pub fn operative_servers(model: &MultiServerModel, sol: &CtmcSolution) -> f64 {
    let k = model.threshold;
    model.m as f64 * (1.0 - sol.total_marginal(k))
}

fn grow(dyn_: &dyn Dynamics, trunc: Truncation) -> Result<CtmcSolution> {
    let (mut ni, mut nj) = (trunc.start, trunc.start);
    loop {
        let sol = solve_box(dyn_, ni, nj)?;
        let (ei, ej) = sol.edge_mass;
        if ei < trunc.edge_mass && ej < trunc.edge_mass {
            return Ok(sol);
        }
        let next_i = if ei >= trunc.edge_mass { ni * 2 } else { ni };
        let next_j = if ej >= trunc.edge_mass { nj * 2 } else { nj };
        if next_i > trunc.cap || next_j > trunc.cap {
            return Err(Error::Truncation { cap: trunc.cap, mass: ei.max(ej) });
        }
        log::debug!("ctmc: growing box {ni}x{nj} -> {next_i}x{next_j} (edge mass {ei:.2e}, {ej:.2e})");
        ni = next_i;
        nj = next_j;
    }
}

fn solve_box(dyn_: &dyn Dynamics, ni: usize, nj: usize) -> Result<CtmcSolution> {
    // states of each level, and local index of i within its level
    let levels: Vec<Vec<usize>> = (0..=nj).map(|j| (0..=ni).filter(|&i| dyn_.recurrent(i, j)).collect()).collect();
    let mut local = vec![vec![usize::MAX; ni + 1]; nj + 1];
    for (j, lv) in levels.iter().enumerate() {
        for (a, &i) in lv.iter().enumerate() {
            local[j][i] = a;
        }
    }
    let first = levels.iter().position(|lv| !lv.is_empty()).ok_or_else(|| {
        Error::Unsupported("truncated chain has no recurrent states".into())
    })?;

    // within-level (A), up (U: j -> j+1) and down (D: j -> j-1) blocks
    let mut a_blk = Vec::with_capacity(nj + 1);
    let mut u_blk = Vec::with_capacity(nj + 1);
    let mut d_blk = Vec::with_capacity(nj + 1);
    let mut moves = Vec::new();
    for j in 0..=nj {
        let n = levels[j].len();
        let n_up = if j < nj { levels[j + 1].len() } else { 0 };
        let n_dn = if j > 0 { levels[j - 1].len() } else { 0 };
        let mut a = Matrix::zeros(n, n);
        let mut u = Matrix::zeros(n, n_up);
        let mut d = Matrix::zeros(n, n_dn);
        for (s, &i) in levels[j].iter().enumerate() {
            moves.clear();
            dyn_.moves(i, j, ni, nj, &mut moves);
            for &((ti, tj), rate) in &moves {
                if rate == 0.0 || (ti, tj) == (i, j) {
                    continue;
                }
                let t = local[tj][ti];
                if t == usize::MAX {
                    return Err(Error::Unsupported(format!(
                        "transition ({i},{j}) -> ({ti},{tj}) leaves the recurrent class"
                    )));
                }
                a[(s, s)] -= rate;
                if tj == j {
                    a[(s, t)] += rate;
                } else if tj == j + 1 {
                    u[(s, t)] += rate;
                } else if tj + 1 == j {
                    d[(s, t)] += rate;
                } else {
                    unreachable!("background count changes by at most one");
                }
            }
        }
        a_blk.push(a);
        u_blk.push(u);
        d_blk.push(d);
    }

    // Backward sweep: pi_j = pi_{j-1} R_j with R_j = -U_{j-1} S_j^{-1},
    // S_j = A_j + R_{j+1} D_{j+1}.
    let mut r_blk: Vec<Option<Matrix>> = vec![None; nj + 1];
    let mut s = a_blk[nj].clone();
    for j in (first + 1..=nj).rev() {
        let r = right_solve(&u_blk[j - 1], &s)?;
        let mut next = a_blk[j - 1].clone();
        next.add_assign(&r.matmul(&d_blk[j]));
        r_blk[j] = Some(r);
        s = next;
    }

    // bottom level: pi S = 0 with one equation swapped for a normalization
    let n0 = levels[first].len();
    let mut m = s.transpose();
    for c in 0..n0 {
        m[(n0 - 1, c)] = 1.0;
    }
    let mut rhs = vec![0.0; n0];
    rhs[n0 - 1] = 1.0;
    let mut probs_lv: Vec<Vec<f64>> = vec![Vec::new(); nj + 1];
    probs_lv[first] = Lu::new(&m)?.solve(&rhs);
    for j in first + 1..=nj {
        let r = r_blk[j].as_ref().expect("set in sweep");
        probs_lv[j] = r.vecmul(&probs_lv[j - 1]);
    }

    let total: f64 = probs_lv.iter().flatten().sum();
    let mut probs = vec![vec![0.0; ni + 1]; nj + 1];
    let (mut l1, mut l2) = (0.0, 0.0);
    let (mut ei, mut ej) = (0.0, 0.0);
    for j in 0..=nj {
        for (a, &i) in levels[j].iter().enumerate() {
            let p = (probs_lv[j][a] / total).max(0.0);
            probs[j][i] = p;
            l1 += i as f64 * p;
            l2 += j as f64 * p;
            if i == ni {
                ei += p;
            }
            if j == nj {
                ej += p;
            }
        }
    }
    Ok(CtmcSolution { ni, nj, probs, l1, l2, l: l1 + l2, edge_mass: (ei, ej) })
}

/// X = -B S^{-1}, computed from S^T X^T = -B^T.
fn right_solve(b: &Matrix, s: &Matrix) -> Result<Matrix> {
    let lu = Lu::new(&s.transpose())?;
    let mut x = Matrix::zeros(b.rows(), b.cols());
    for r in 0..b.rows() {
        let row: Vec<f64> = b.row(r).iter().map(|v| -v).collect();
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        x.row_mut(r).copy_from_slice(&lu.solve(&row));
    }
    Ok(x)
}
