//! Event simulation of the FB systems.
//!
//! Every service phase is exponential, so the next event is drawn as an
//! exponential race over the rates of the current state and the race is
//! redrawn after each event. Queue lengths are time-averaged; the run after
//! warmup is split into equal batches of arrivals for a batch-means interval.

use log::warn;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{MultiServerModel, SingleServerModel};

/// Single server at full speed with three service phases: phase-1 work in
/// the foreground, phase-2 work (reached with probability q1) in a first
/// background queue, phase-3 work (reached with probability q2) in a second,
/// lower-priority background queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreePhaseModel {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub q1: f64,
    pub q2: f64,
}

impl ThreePhaseModel {
    pub fn new(lambda: f64, mu1: f64, mu2: f64, mu3: f64, q1: f64, q2: f64) -> Result<Self> {
        for (name, v) in [("mu1", mu1), ("mu2", mu2), ("mu3", mu3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("q1", q1), ("q2", q2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidModel(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidModel(format!("lambda must be nonnegative, got {lambda}")));
        }
        Ok(Self { lambda, mu1, mu2, mu3, q1, q2 })
    }

    pub fn load(&self) -> f64 {
        self.lambda * (1.0 / self.mu1 + self.q1 / self.mu2 + self.q1 * self.q2 / self.mu3)
    }

    /// Two-phase model with the same mean: the second phase has rate
    /// `match_three_phase(mu2, mu3, q2)`.
    pub fn matched_two_phase(&self) -> Result<SingleServerModel> {
        let xi = match_three_phase(self.mu2, self.mu3, self.q2);
        SingleServerModel::from_parts(self.lambda, self.mu1, xi, self.q1, vec![1.0, 1.0], 1.0)
    }
}

/// Rate xi of an exponential with the mean of phase 2 plus, with probability
/// q2, phase 3: 1/xi = 1/mu2 + q2/mu3.
pub fn match_three_phase(mu2: f64, mu3: f64, q2: f64) -> f64 {
    1.0 / (1.0 / mu2 + q2 / mu3)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimModel {
    Single(SingleServerModel),
    Multi(MultiServerModel),
    ThreePhase(ThreePhaseModel),
}

impl SimModel {
    fn is_stable(&self) -> bool {
        match self {
            SimModel::Single(m) => m.is_stable(),
            SimModel::Multi(m) => m.is_stable(),
            SimModel::ThreePhase(m) => m.load() < 1.0,
        }
    }

    fn lambda(&self) -> f64 {
        match self {
            SimModel::Single(m) => m.lambda,
            SimModel::Multi(m) => m.lambda,
            SimModel::ThreePhase(m) => m.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SimModel,
    /// Arrivals simulated in total, warmup included.
    pub jobs: u64,
    pub warmup_jobs: u64,
    pub seed: u64,
    pub batches: usize,
}

impl SimConfig {
    pub const DEFAULT_SEED: u64 = 42;

    /// `jobs` arrivals, a tenth of them warmup, 20 batches, seed 42.
    pub fn new(model: SimModel, jobs: u64) -> Self {
        Self { model, jobs, warmup_jobs: jobs / 10, seed: Self::DEFAULT_SEED, batches: 20 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.jobs < 10 * self.warmup_jobs {
            return Err(Error::InvalidModel(format!(
                "jobs ({}) must be at least 10 times warmup_jobs ({})",
                self.jobs, self.warmup_jobs
            )));
        }
        if self.batches < 10 {
            return Err(Error::InvalidModel(format!("need at least 10 batches, got {}", self.batches)));
        }
        if self.jobs - self.warmup_jobs < self.batches as u64 {
            return Err(Error::InvalidModel("fewer measured jobs than batches".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    /// 95% half-width for L.
    pub ci: f64,
    #[serde(rename = "jobs")]
    pub jobs_completed: u64,
    pub seed: u64,
}

/// Queue contents: foreground, background (first level) and second-level
/// background (three-phase model only).
#[derive(Debug, Clone, Copy, Default)]
struct State {
    i: u64,
    j: u64,
    k: u64,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival,
    /// Foreground phase done; true when the job moves on to the background.
    Foreground(bool),
    /// First background phase done; true when the job moves on to phase 3.
    Background(bool),
    Third,
}

/// Up to four competing rates.
struct Race {
    rates: [(f64, Event); 4],
    len: usize,
}

impl Race {
    fn new() -> Self {
        Self { rates: [(0.0, Event::Arrival); 4], len: 0 }
    }

    fn push(&mut self, rate: f64, e: Event) {
        if rate > 0.0 {
            self.rates[self.len] = (rate, e);
            self.len += 1;
        }
    }

    fn total(&self) -> f64 {
        self.rates[..self.len].iter().map(|r| r.0).sum()
    }

    fn pick(&self, u: f64) -> Event {
        let mut acc = 0.0;
        for &(r, e) in &self.rates[..self.len] {
            acc += r;
            if u < acc {
                return e;
            }
        }
        self.rates[self.len - 1].1
    }
}

/// Rates out of `s`. Phase-completion events carry the routing decision
/// folded into separate entries.
fn race(model: &SimModel, s: State) -> Race {
    let mut r = Race::new();
    match model {
        SimModel::Single(m) => {
            r.push(m.lambda, Event::Arrival);
            let n = (s.i + s.j) as usize;
            if s.i > 0 {
                let mu = m.mu1_at(n);
                r.push(mu * m.q(), Event::Foreground(true));
                r.push(mu * (1.0 - m.q()), Event::Foreground(false));
            } else if s.j > 0 {
                r.push(m.mu2_at(n), Event::Background(false));
            }
        }
        SimModel::Multi(m) => {
            r.push(m.lambda, Event::Arrival);
            let n = s.i + s.j;
            if n > m.threshold as u64 {
                let busy_fg = s.i.min(m.m as u64);
                let busy_bg = s.j.min(m.m as u64 - busy_fg);
                let fg = busy_fg as f64 * m.mu1;
                r.push(fg * m.q, Event::Foreground(true));
                r.push(fg * (1.0 - m.q), Event::Foreground(false));
                r.push(busy_bg as f64 * m.mu2, Event::Background(false));
            }
        }
        SimModel::ThreePhase(m) => {
            r.push(m.lambda, Event::Arrival);
            if s.i > 0 {
                r.push(m.mu1 * m.q1, Event::Foreground(true));
                r.push(m.mu1 * (1.0 - m.q1), Event::Foreground(false));
            } else if s.j > 0 {
                r.push(m.mu2 * m.q2, Event::Background(true));
                r.push(m.mu2 * (1.0 - m.q2), Event::Background(false));
            } else if s.k > 0 {
                r.push(m.mu3, Event::Third);
            }
        }
    }
    r
}

/// Time integrals of the queue lengths over one batch.
#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    time: f64,
    fg: f64,
    bg: f64,
}

pub fn simulate(config: &SimConfig) -> Result<SimEstimate> {
    config.validate()?;
    if !config.model.is_stable() {
        warn!("simulating an unstable model: queue lengths drift and the estimate has no steady state");
    }
    if config.model.lambda() == 0.0 {
        return Ok(SimEstimate { l: 0.0, l1: 0.0, l2: 0.0, ci: 0.0, jobs_completed: 0, seed: config.seed });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let measured = config.jobs - config.warmup_jobs;
    let per_batch = measured / config.batches as u64;
    let mut batches = vec![Accum::default(); config.batches];
    let mut state = State::default();
    let mut arrivals = 0u64;
    let mut departures = 0u64;

    while arrivals < config.jobs {
        let r = race(&config.model, state);
        let total = r.total();
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        if arrivals >= config.warmup_jobs {
            let b = (((arrivals - config.warmup_jobs) / per_batch) as usize).min(config.batches - 1);
            let acc = &mut batches[b];
            acc.time += dt;
            acc.fg += state.i as f64 * dt;
            acc.bg += (state.j + state.k) as f64 * dt;
        }
        match r.pick(rng.gen::<f64>() * total) {
            Event::Arrival => {
                state.i += 1;
                arrivals += 1;
            }
            Event::Foreground(onward) => {
                state.i -= 1;
                if onward {
                    state.j += 1;
                } else {
                    departures += 1;
                }
            }
            Event::Background(onward) => {
                state.j -= 1;
                if onward {
                    state.k += 1;
                } else {
                    departures += 1;
                }
            }
            Event::Third => {
                state.k -= 1;
                departures += 1;
            }
        }
    }

    let (mut t, mut f, mut g) = (0.0, 0.0, 0.0);
    for b in &batches {
        t += b.time;
        f += b.fg;
        g += b.bg;
    }
    let means: Vec<f64> = batches.iter().map(|b| (b.fg + b.bg) / b.time).collect();
    let nb = means.len() as f64;
    let avg = means.iter().sum::<f64>() / nb;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (nb - 1.0);
    let t_quant = StudentsT::new(0.0, 1.0, nb - 1.0)
        .map_err(|e| Error::InvalidModel(format!("batch count: {e}")))?
        .inverse_cdf(0.975);
    Ok(SimEstimate {
        l: (f + g) / t,
        l1: f / t,
        l2: g / t,
        ci: t_quant * (var / nb).sqrt(),
        jobs_completed: departures,
        seed: config.seed,
    })
}

/// Independent runs, one per config, spread over the rayon pool. Results
/// come back in input order.
pub fn simulate_many(configs: &[SimConfig]) -> Vec<Result<SimEstimate>> {
    configs.par_iter().map(simulate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lambda: f64) -> SimModel {
        SimModel::Single(SingleServerModel::from_parts(lambda, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap())
    }

    #[test]
    fn matched_rate_examples() {
        assert!((match_three_phase(1.0, 0.5, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(match_three_phase(1.3, 0.5, 0.0), 1.3);
        assert!((match_three_phase(3.0, 3.0, 0.8) - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_system() {
        let e = simulate(&SimConfig::new(single(0.0), 1000)).unwrap();
        assert_eq!((e.l, e.l1, e.l2, e.ci), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let c = SimConfig::new(single(2.0), 20_000).with_seed(9);
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
        let other = simulate(&c.clone().with_seed(10)).unwrap();
        assert_ne!(simulate(&c).unwrap().l, other.l);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::new(single(2.0), 1000);
        c.warmup_jobs = 200;
        assert!(simulate(&c).is_err());
        let mut c = SimConfig::new(single(2.0), 1000);
        c.batches = 5;
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn mm1_mean() {
        let m = SingleServerModel::from_parts(0.6, 1.0, 1.0, 0.0, vec![1.0, 1.0], 1.0).unwrap();
        let e = simulate(&SimConfig::new(SimModel::Single(m), 200_000)).unwrap();
        assert!((e.l - 1.5).abs() < 3.0 * e.ci, "{e:?}");
        assert_eq!(e.l2, 0.0);
    }

    #[test]
    fn three_phase_without_third_phase_is_two_phase() {
        let three = ThreePhaseModel::new(2.0, 5.0, 1.0, 0.5, 0.1, 0.0).unwrap();
        let two = three.matched_two_phase().unwrap();
        let c = |m| SimConfig::new(m, 30_000).with_seed(3);
        let a = simulate(&c(SimModel::ThreePhase(three))).unwrap();
        let b = simulate(&c(SimModel::Single(two))).unwrap();
        // same race rates in the same order, so the paths coincide
        assert_eq!(a.l, b.l);
    }
}
