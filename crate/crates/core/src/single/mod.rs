//! Exact steady state of the speed-modulated single server.

mod general;
mod special;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel;
use crate::model::{CostCoefficients, SingleServerModel, SpeedProfile};
use crate::series::PowerSeries;

pub use general::{diagonal_transform, g0_series_at_zero, maclaurin_residual, solve_general};
pub use special::{solve_k1_closed_form, solve_zero_speed};

/// Probabilities pi(i,j) for i + j <= K, stored by total n then by i.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProbabilities {
    k: usize,
    values: Vec<f64>,
}

impl BoundaryProbabilities {
    pub fn count(k: usize) -> usize {
        (k + 1) * (k + 2) / 2
    }

    pub(crate) fn index(i: usize, j: usize) -> usize {
        let n = i + j;
        n * (n + 1) / 2 + i
    }

    pub(crate) fn from_vec(k: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), Self::count(k));
        Self { k, values }
    }

    pub(crate) fn zeros(k: usize) -> Self {
        Self { k, values: vec![0.0; Self::count(k)] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.k {
            return 0.0;
        }
        self.values[Self::index(i, j)]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[Self::index(i, j)] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// (i, j, pi) triples in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=self.k).flat_map(move |n| (0..=n).map(move |i| (i, n - i, self.get(i, n - i))))
    }

    /// Marginal probability of n jobs for n <= K.
    pub fn total(&self, n: usize) -> f64 {
        (0..=n).map(|i| self.get(i, n - i)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleServerSolution {
    pub boundary: BoundaryProbabilities,
    /// Probability that the foreground queue is empty and K or more jobs are present.
    pub g0_at_1: f64,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    /// p_0 .. p_{K-1}.
    pub p_below_k: Vec<f64>,
    /// P(N >= K).
    pub tail_mass: f64,
    /// Sum of p_n s_n^alpha over all n.
    pub energy_rate: f64,
}

impl SingleServerSolution {
    pub(crate) fn assemble(
        model: &SingleServerModel,
        boundary: BoundaryProbabilities,
        g0_at_1: f64,
        tail_mass: f64,
        tail_l1: f64,
        tail_l2: f64,
    ) -> Self {
        let k = model.k();
        let p_below_k: Vec<f64> = (0..k).map(|n| boundary.total(n)).collect();
        let (mut l1, mut l2) = (tail_l1, tail_l2);
        for (i, j, p) in boundary.iter() {
            if i + j < k {
                l1 += i as f64 * p;
                l2 += j as f64 * p;
            }
        }
        let energy_rate = energy(&model.speeds, &p_below_k, tail_mass);
        Self { boundary, g0_at_1, l1, l2, l: l1 + l2, p_below_k, tail_mass, energy_rate }
    }

    pub fn k(&self) -> usize {
        self.boundary.k()
    }
}

fn energy(speeds: &SpeedProfile, p_below_k: &[f64], tail: f64) -> f64 {
    let k = speeds.k();
    let below: f64 = p_below_k.iter().enumerate().map(|(n, p)| p * speeds.power(n)).sum();
    below + speeds.power(k) * tail
}

/// Holding plus energy cost c1 L + c2 (sum p_n s_n^alpha).
pub fn evaluate_cost_single(solution: &SingleServerSolution, speeds: &SpeedProfile, costs: &CostCoefficients) -> f64 {
    costs.c1 * solution.l + costs.c2 * energy(speeds, &solution.p_below_k, solution.tail_mass)
}

/// Taylor expansion of the kernel root y1 at `z0` for this model.
pub fn y1_series_at(z0: f64, order: usize, model: &SingleServerModel) -> Result<PowerSeries> {
    model.ensure_stable()?;
    kernel::y1_series(model.rho1(), model.q(), z0, order + 1)
}

/// Net flow between levels K-1 and K read off the boundary:
/// lambda p_{K-1} - mu2 pi(0,K) - mu1 (1-q) sum_j pi(j,K-j).
pub fn flow_balance_residual(model: &SingleServerModel, boundary: &BoundaryProbabilities) -> f64 {
    let k = model.k();
    let (lam, mu1, mu2, q) = (model.lambda, model.mu1(), model.mu2(), model.q());
    let down: f64 = (1..=k).map(|j| boundary.get(j, k - j)).sum();
    lam * boundary.total(k - 1) - mu2 * boundary.get(0, k) - mu1 * (1.0 - q) * down
}

/// Solves with whichever method fits the speed profile: the zero-low-speed
/// closed form when every level below K is zero (K > 1), otherwise the
/// general transform solution.
pub fn solve(model: &SingleServerModel) -> Result<SingleServerSolution> {
    let k = model.k();
    let levels = model.speeds.levels();
    if k > 1 && levels[..k].iter().all(|&s| s == 0.0) {
        return solve_zero_speed(model);
    }
    if let Some(n) = (1..k).find(|&n| levels[n] == 0.0) {
        return Err(Error::Unsupported(format!(
            "speed s{n} is zero but not every level below K is; only the all-zero low-speed case is supported"
        )));
    }
    solve_general(model)
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
    g0_at_1: f64,
    boundary: Vec<(usize, usize, f64)>,
}

impl Serialize for SingleServerSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SolutionWire {
            l1: self.l1,
            l2: self.l2,
            l: self.l,
            p: &self.p_below_k,
            tail_mass: self.tail_mass,
            energy_rate: self.energy_rate,
            g0_at_1: self.g0_at_1,
            boundary: self.boundary.iter().collect(),
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_indexing() {
        let mut b = BoundaryProbabilities::zeros(3);
        assert_eq!(b.as_slice().len(), 10);
        b.set(1, 2, 0.5);
        assert_eq!(b.get(1, 2), 0.5);
        assert_eq!(b.get(3, 1), 0.0);
        let cells: Vec<_> = b.iter().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(cells[..4], [(0, 0), (0, 1), (1, 0), (0, 2)]);
        assert_eq!(b.total(3), 0.5);
    }

    #[test]
    fn cost_examples() {
        let m = SingleServerModel::from_parts(2.0, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap();
        let sol = solve(&m).unwrap();
        let c = evaluate_cost_single(&sol, &m.speeds, &CostCoefficients::new(1.0, 0.0).unwrap());
        assert!((c - sol.l).abs() < 1e-15);

        let flat = SingleServerModel::from_parts(1.0, 5.0, 1.0, 0.3, vec![0.7, 0.7, 0.7], 1.0).unwrap();
        let sol = solve(&flat).unwrap();
        let c = evaluate_cost_single(&sol, &flat.speeds, &CostCoefficients::new(0.0, 2.0).unwrap());
        assert!((c - 2.0 * 0.7).abs() < 1e-10);
    }

    #[test]
    fn partial_zero_speeds_are_rejected() {
        let m = SingleServerModel::from_parts(1.0, 5.0, 1.0, 0.3, vec![0.0, 0.0, 0.5, 1.0], 1.0).unwrap();
        assert!(matches!(solve(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn solution_json_fields() {
        let m = SingleServerModel::from_parts(2.0, 5.0, 1.0, 0.1, vec![0.0, 1.0], 2.0).unwrap();
        let v = serde_json::to_value(solve(&m).unwrap()).unwrap();
        for key in ["L1", "L2", "L", "p", "tail_mass", "energy_rate", "boundary"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["boundary"].as_array().unwrap().len(), 3);
    }
}
