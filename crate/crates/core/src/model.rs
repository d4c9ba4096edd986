//! Domain types shared by every solver: Coxian-2 service, speed profiles,
//! single- and multi-server models, and cost weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative gap below which the two Coxian phase rates are treated as equal.
const EQUAL_RATE_TOL: f64 = 1e-9;

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidModel(format!("{name} must lie in [0,1], got {v}")));
    }
    Ok(())
}

fn check_arrival(v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidModel(format!("lambda must be nonnegative, got {v}")));
    }
    Ok(())
}

/// Two-phase Coxian job length: an exponential phase of rate `nu1`, followed
/// with probability `q` by an exponential phase of rate `nu2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxianService {
    nu1: f64,
    nu2: f64,
    q: f64,
}

impl CoxianService {
    pub fn new(nu1: f64, nu2: f64, q: f64) -> Result<Self> {
        check_rate("nu1", nu1)?;
        check_rate("nu2", nu2)?;
        check_prob("q", q)?;
        Ok(Self { nu1, nu2, q })
    }

    pub fn nu1(&self) -> f64 {
        self.nu1
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.nu1 + self.q / self.nu2
    }

    pub fn second_moment(&self) -> f64 {
        let (a, b, q) = (self.nu1, self.nu2, self.q);
        2.0 / (a * a) + 2.0 * q / (a * b) + 2.0 * q / (b * b)
    }

    /// True when the phase rates are close enough that the mixture
    /// representation of the survival function is replaced by its limit.
    pub fn equal_rates(&self) -> bool {
        (self.nu1 - self.nu2).abs() < EQUAL_RATE_TOL * self.nu1
    }

    /// Weight `c` of the slow exponential in S(t) = (1-c)e^{-nu1 t} + c e^{-nu2 t}.
    /// Only meaningful when the rates differ.
    pub fn mixture_weight(&self) -> f64 {
        self.nu1 * self.q / (self.nu1 - self.nu2)
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidModel(format!("time must be nonnegative, got {t}")));
        }
        Ok(self.survival_unchecked(t))
    }

    pub(crate) fn survival_unchecked(&self, t: f64) -> f64 {
        let (a, b, q) = (self.nu1, self.nu2, self.q);
        let s = if self.equal_rates() {
            (1.0 + a * q * t) * (-a * t).exp()
        } else {
            let c = self.mixture_weight();
            (1.0 - c) * (-a * t).exp() + c * (-b * t).exp()
        };
        s.clamp(0.0, 1.0)
    }

    /// Density of the job length at `t >= 0`.
    pub fn density(&self, t: f64) -> f64 {
        let (a, b, q) = (self.nu1, self.nu2, self.q);
        if self.equal_rates() {
            a * (1.0 - q + a * q * t) * (-a * t).exp()
        } else {
            let c = self.mixture_weight();
            (1.0 - c) * a * (-a * t).exp() + c * b * (-b * t).exp()
        }
    }
}

/// Speed levels s_0..s_K used when 0..K-1 jobs (and K or more) are present,
/// together with the power exponent alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    levels: Vec<f64>,
    alpha: f64,
}

impl SpeedProfile {
    pub fn new(levels: Vec<f64>, alpha: f64) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "speed profile needs at least two levels, got {}",
                levels.len()
            )));
        }
        for (n, &s) in levels.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidModel(format!("speed s{n} must be nonnegative, got {s}")));
            }
        }
        if levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidModel("speed levels must be nondecreasing".into()));
        }
        if *levels.last().unwrap() <= 0.0 {
            return Err(Error::InvalidModel("top speed must be positive".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidModel(format!("alpha must be nonnegative, got {alpha}")));
        }
        Ok(Self { levels, alpha })
    }

    /// Number of the top level, K.
    pub fn k(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn top(&self) -> f64 {
        self.levels[self.k()]
    }

    /// Speed in force when `n` jobs are present.
    pub fn at(&self, n: usize) -> f64 {
        self.levels[n.min(self.k())]
    }

    /// Power drawn at level `n` (s_n^alpha, with 0^0 taken as 0 for an idle-off level).
    pub fn power(&self, n: usize) -> f64 {
        let s = self.at(n);
        if s == 0.0 {
            0.0
        } else {
            s.powf(self.alpha)
        }
    }
}

/// Speed-modulated single server with foreground/background queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SingleModelWire", into = "SingleModelWire")]
pub struct SingleServerModel {
    pub lambda: f64,
    pub service: CoxianService,
    pub speeds: SpeedProfile,
}

impl SingleServerModel {
    pub fn new(lambda: f64, service: CoxianService, speeds: SpeedProfile) -> Result<Self> {
        check_arrival(lambda)?;
        Ok(Self { lambda, service, speeds })
    }

    /// Convenience constructor mirroring the JSON schema.
    pub fn from_parts(lambda: f64, nu1: f64, nu2: f64, q: f64, speeds: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::new(lambda, CoxianService::new(nu1, nu2, q)?, SpeedProfile::new(speeds, alpha)?)
    }

    pub fn k(&self) -> usize {
        self.speeds.k()
    }

    pub fn q(&self) -> f64 {
        self.service.q()
    }

    /// Top-speed phase-1 rate.
    pub fn mu1(&self) -> f64 {
        self.service.nu1() * self.speeds.top()
    }

    /// Top-speed phase-2 rate.
    pub fn mu2(&self) -> f64 {
        self.service.nu2() * self.speeds.top()
    }

    /// Phase-1 rate with `n` jobs present.
    pub fn mu1_at(&self, n: usize) -> f64 {
        self.service.nu1() * self.speeds.at(n)
    }

    /// Phase-2 rate with `n` jobs present.
    pub fn mu2_at(&self, n: usize) -> f64 {
        self.service.nu2() * self.speeds.at(n)
    }

    pub fn rho1(&self) -> f64 {
        self.lambda / self.mu1()
    }

    pub fn rho2(&self) -> f64 {
        self.lambda / self.mu2()
    }

    /// Offered load at top speed, lambda (1/mu1 + q/mu2).
    pub fn load(&self) -> f64 {
        self.lambda * (1.0 / self.mu1() + self.q() / self.mu2())
    }

    pub fn is_stable(&self) -> bool {
        self.load() < 1.0
    }

    pub fn ensure_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable(format!(
                "lambda (1/mu1 + q/mu2) = {:.6} must be below 1",
                self.load()
            )))
        }
    }

    /// Same model with a different arrival rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.service, self.speeds.clone())
    }

    /// Same model with a different speed profile.
    pub fn with_speeds(&self, levels: Vec<f64>) -> Result<Self> {
        Self::new(self.lambda, self.service, SpeedProfile::new(levels, self.speeds.alpha())?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleModelWire {
    lambda: f64,
    nu1: f64,
    nu2: f64,
    q: f64,
    speeds: Vec<f64>,
    #[serde(default = "unit_alpha")]
    alpha: f64,
}

fn unit_alpha() -> f64 {
    1.0
}

impl TryFrom<SingleModelWire> for SingleServerModel {
    type Error = Error;

    fn try_from(w: SingleModelWire) -> Result<Self> {
        Self::from_parts(w.lambda, w.nu1, w.nu2, w.q, w.speeds, w.alpha)
    }
}

impl From<SingleServerModel> for SingleModelWire {
    fn from(m: SingleServerModel) -> Self {
        Self {
            lambda: m.lambda,
            nu1: m.service.nu1(),
            nu2: m.service.nu2(),
            q: m.service.q(),
            speeds: m.speeds.levels().to_vec(),
            alpha: m.speeds.alpha(),
        }
    }
}

/// Pool of `m` identical servers switched all-off when the job count drops to
/// `threshold` and all-on at the next arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MultiModelWire", into = "MultiModelWire")]
pub struct MultiServerModel {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub q: f64,
    pub m: usize,
    pub threshold: usize,
}

impl MultiServerModel {
    pub fn new(lambda: f64, mu1: f64, mu2: f64, q: f64, m: usize, threshold: usize) -> Result<Self> {
        check_arrival(lambda)?;
        check_rate("mu1", mu1)?;
        check_rate("mu2", mu2)?;
        check_prob("q", q)?;
        if m == 0 {
            return Err(Error::InvalidModel("server count m must be at least 1".into()));
        }
        if threshold >= m {
            return Err(Error::InvalidModel(format!(
                "threshold {threshold} must be at most m-1 = {}",
                m - 1
            )));
        }
        Ok(Self { lambda, mu1, mu2, q, m, threshold })
    }

    pub fn rho1(&self) -> f64 {
        self.lambda / self.mu1
    }

    pub fn rho2(&self) -> f64 {
        self.lambda * self.q / self.mu2
    }

    /// Foreground tail ratio lambda / (m mu1).
    pub fn r(&self) -> f64 {
        self.lambda / (self.m as f64 * self.mu1)
    }

    pub fn is_stable(&self) -> bool {
        self.rho1() + self.rho2() < self.m as f64
    }

    pub fn ensure_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable(format!(
                "rho1 + rho2 = {:.6} must be below m = {}",
                self.rho1() + self.rho2(),
                self.m
            )))
        }
    }

    pub fn with_threshold(&self, threshold: usize) -> Result<Self> {
        Self::new(self.lambda, self.mu1, self.mu2, self.q, self.m, threshold)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiModelWire {
    lambda: f64,
    mu1: f64,
    mu2: f64,
    q: f64,
    m: usize,
    #[serde(default)]
    threshold: usize,
}

impl TryFrom<MultiModelWire> for MultiServerModel {
    type Error = Error;

    fn try_from(w: MultiModelWire) -> Result<Self> {
        Self::new(w.lambda, w.mu1, w.mu2, w.q, w.m, w.threshold)
    }
}

impl From<MultiServerModel> for MultiModelWire {
    fn from(m: MultiServerModel) -> Self {
        Self { lambda: m.lambda, mu1: m.mu1, mu2: m.mu2, q: m.q, m: m.m, threshold: m.threshold }
    }
}

/// Weights of holding cost (c1) and energy cost (c2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub c1: f64,
    pub c2: f64,
}

impl CostCoefficients {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c1 >= 0.0 && c2.is_finite() && c2 >= 0.0) {
            return Err(Error::InvalidModel(format!("cost weights must be nonnegative, got ({c1}, {c2})")));
        }
        Ok(Self { c1, c2 })
    }
}

pub fn check_stability_single(model: &SingleServerModel) -> bool {
    model.is_stable()
}

pub fn check_stability_multi(model: &MultiServerModel) -> bool {
    model.is_stable()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_examples() {
        let m = SingleServerModel::from_parts(2.0, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap();
        assert!((m.load() - 0.6).abs() < 1e-15);
        assert!(check_stability_single(&m));

        let m = SingleServerModel::from_parts(5.0, 5.0, 1.0, 0.0, vec![1.0, 1.0], 1.0).unwrap();
        assert!(!check_stability_single(&m));

        let m = SingleServerModel::from_parts(3.4, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap();
        assert!((m.load() - 1.02).abs() < 1e-12);
        assert!(!check_stability_single(&m));

        let m = MultiServerModel::new(5.0, 1.0, 0.2, 0.1, 10, 0).unwrap();
        assert!((m.rho1() + m.rho2() - 7.5).abs() < 1e-12);
        assert!(check_stability_multi(&m));
        assert!(check_stability_multi(&MultiServerModel::new(0.0, 1.0, 1.0, 0.5, 1, 0).unwrap()));
        assert!(!check_stability_multi(&MultiServerModel::new(2.0, 1.0, 1.0, 1.0, 2, 0).unwrap()));
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(CoxianService::new(0.0, 1.0, 0.5).is_err());
        assert!(CoxianService::new(1.0, 1.0, 1.5).is_err());
        assert!(SpeedProfile::new(vec![1.0], 1.0).is_err());
        assert!(SpeedProfile::new(vec![0.5, 0.2], 1.0).is_err());
        assert!(SpeedProfile::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(MultiServerModel::new(1.0, 1.0, 1.0, 0.5, 3, 3).is_err());
        assert!(CostCoefficients::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn coxian_moments_and_survival() {
        let s = CoxianService::new(5.0, 1.0, 0.1).unwrap();
        assert!((s.mean() - 0.3).abs() < 1e-15);
        assert!((s.second_moment() - 0.32).abs() < 1e-15);
        assert_eq!(s.survival(0.0).unwrap(), 1.0);
        assert!(s.survival(-1.0).is_err());

        let e = CoxianService::new(3.0, 1.0, 0.0).unwrap();
        assert!((e.survival(0.7).unwrap() - (-2.1f64).exp()).abs() < 1e-15);

        // equal rates: Erlang-like limit
        let eq = CoxianService::new(2.0, 2.0, 1.0).unwrap();
        let t = 0.8;
        assert!((eq.survival(t).unwrap() - (1.0 + 2.0 * t) * (-2.0 * t).exp()).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let m = SingleServerModel::from_parts(2.0, 5.0, 1.0, 0.1, vec![0.0, 0.6, 1.0], 2.0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<SingleServerModel>(&s).unwrap(), m);

        let bad = r#"{"lambda":2,"nu1":5,"nu2":1,"q":1.2,"speeds":[0,1],"alpha":2}"#;
        assert!(serde_json::from_str::<SingleServerModel>(bad).is_err());

        let mm = MultiServerModel::new(5.0, 1.0, 0.2, 0.1, 10, 3).unwrap();
        let s = serde_json::to_string(&mm).unwrap();
        assert_eq!(serde_json::from_str::<MultiServerModel>(&s).unwrap(), mm);
    }
}
