//! Reference policies on one server of unit speed: FCFS via the
//! Pollaczek-Khinchin mean, LAS via Schrage's integral, and the two-class
//! preemptive priority queue that FB approaches when the two phases are
//! weakly coupled.

use crate::error::{Error, Result};
use crate::model::CoxianService;
use crate::quad;

/// Absolute tolerance on the LAS mean number of jobs.
const LAS_TOL: f64 = 1e-8;

/// Survival mass beyond which the LAS integral is cut off.
const TAIL_CUTOFF: f64 = 1e-14;

fn ensure_load(lambda: f64, service: &CoxianService) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidModel(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let rho = lambda * service.mean();
    if rho >= 1.0 {
        return Err(Error::Unstable(format!("offered load {rho:.6} is not below 1")));
    }
    Ok(rho)
}

/// P_k(u) = 1 - e^{-u} sum_{j<k} u^j / j!, the regularized lower incomplete
/// gamma function at integer order k, without cancellation at small u.
fn lower_gamma_reg(k: u32, u: f64) -> f64 {
    if u < 1.0 + k as f64 {
        // e^{-u} sum_{j>=k} u^j/j!
        let mut term = (1..=k).fold(1.0, |t, j| t * u / j as f64);
        let mut sum = 0.0;
        let mut j = k;
        while term > 1e-18 * sum || sum == 0.0 {
            sum += term;
            j += 1;
            term *= u / j as f64;
            if term == 0.0 {
                break;
            }
        }
        sum * (-u).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 0..k {
            if j > 0 {
                term *= u / j as f64;
            }
            sum += term;
        }
        1.0 - (-u).exp() * sum
    }
}

/// rho(x) = lambda E[min(X, x)] and M2(x) = E[min(X, x)^2] for a Coxian job
/// length X, from the exponential-mixture form of the survival function.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedLoadFunctions {
    lambda: f64,
    service: CoxianService,
}

impl TruncatedLoadFunctions {
    pub fn new(lambda: f64, service: CoxianService) -> Self {
        Self { lambda, service }
    }

    /// Integral of t^{k-1} S(t) over [0, x], times (k-1)!^{-1}.
    fn moment(&self, k: u32, x: f64) -> f64 {
        let s = &self.service;
        let (a, b) = (s.nu1(), s.nu2());
        let ak = a.powi(k as i32);
        if s.equal_rates() {
            // S(t) = e^{-at}(1 + q a t)
            lower_gamma_reg(k, a * x) / ak + s.q() * a * k as f64 * lower_gamma_reg(k + 1, a * x) / (ak * a)
        } else {
            let c = s.mixture_weight();
            (1.0 - c) * lower_gamma_reg(k, a * x) / ak + c * lower_gamma_reg(k, b * x) / b.powi(k as i32)
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.lambda * self.moment(1, x)
    }

    pub fn second_moment(&self, x: f64) -> f64 {
        2.0 * self.moment(2, x)
    }
}

/// FCFS mean number of jobs: rho + lambda^2 M2 / (2 (1 - rho)).
pub fn fcfs_l(lambda: f64, service: &CoxianService) -> Result<f64> {
    let rho = ensure_load(lambda, service)?;
    Ok(rho + lambda * lambda * service.second_moment() / (2.0 * (1.0 - rho)))
}

/// LAS mean number of jobs: lambda times Schrage's mean sojourn time
/// int_0^inf f(x) [x / (1 - rho(x)) + lambda M2(x) / (2 (1 - rho(x))^2)] dx.
pub fn las_l(lambda: f64, service: &CoxianService) -> Result<f64> {
    ensure_load(lambda, service)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let load = TruncatedLoadFunctions::new(lambda, *service);
    let integrand = |x: f64| {
        let free = 1.0 - load.rho(x);
        service.density(x) * (x / free + lambda * load.second_moment(x) / (2.0 * free * free))
    };
    let upper = tail_cutoff(service);
    Ok(lambda * quad::integrate(integrand, 0.0, upper, LAS_TOL / lambda)?)
}

/// Smallest power-of-two multiple of the mean with survival below the cutoff.
fn tail_cutoff(service: &CoxianService) -> f64 {
    let mut x = service.mean();
    while service.survival_unchecked(x) >= TAIL_CUTOFF {
        x *= 2.0;
    }
    x
}

/// Two-class preemptive-resume priority M/M/1: class 1 arrives at rate lambda
/// with service rate nu1, class 2 at rate lambda q with service rate nu2.
pub fn priority_two_class_l(lambda: f64, service: &CoxianService) -> Result<f64> {
    ensure_load(lambda, service)?;
    let (a, b, q) = (service.nu1(), service.nu2(), service.q());
    let rho1 = lambda / a;
    let rho2 = lambda * q / b;
    if rho1 + rho2 >= 1.0 {
        return Err(Error::Unstable(format!("two-class load {:.6} is not below 1", rho1 + rho2)));
    }
    let l1 = rho1 / (1.0 - rho1);
    let residual = (lambda * 2.0 / (a * a) + lambda * q * 2.0 / (b * b)) / 2.0;
    let t2 = (1.0 / b) / (1.0 - rho1) + residual / ((1.0 - rho1) * (1.0 - rho1 - rho2));
    Ok(l1 + lambda * q * t2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cox(a: f64, b: f64, q: f64) -> CoxianService {
        CoxianService::new(a, b, q).unwrap()
    }

    #[test]
    fn fcfs_example() {
        let s = cox(5.0, 1.0, 0.1);
        assert!((s.second_moment() - 0.32).abs() < 1e-15);
        assert!((fcfs_l(2.1, &s).unwrap() - (0.63 + 2.1 * 2.1 * 0.32 / (2.0 * 0.37))).abs() < 1e-12);
        let l = fcfs_l(2.1, &s).unwrap();
        assert!((l - 2.537).abs() < 1e-3);
    }

    #[test]
    fn exponential_service_gives_mm1() {
        let s = cox(5.0, 1.0, 0.0);
        let rho: f64 = 2.1 / 5.0;
        let mm1 = rho / (1.0 - rho);
        assert!((fcfs_l(2.1, &s).unwrap() - mm1).abs() < 1e-12);
        assert!((las_l(2.1, &s).unwrap() - mm1).abs() < 1e-8);
        assert!((priority_two_class_l(2.1, &s).unwrap() - mm1).abs() < 1e-12);
    }

    #[test]
    fn truncated_functions_limits() {
        for s in [cox(5.0, 1.0, 0.1), cox(1.0, 4.0, 0.6), cox(2.0, 2.0, 0.3)] {
            let t = TruncatedLoadFunctions::new(1.5, s);
            assert_eq!(t.rho(0.0), 0.0);
            assert!((t.rho(1e3) - 1.5 * s.mean()).abs() < 1e-12);
            assert!((t.second_moment(1e3) - s.second_moment()).abs() < 1e-12);
            let mut prev = 0.0;
            for k in 1..50 {
                let v = t.rho(k as f64 * 0.1);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn truncated_functions_match_quadrature() {
        let s = cox(5.0, 1.0, 0.1);
        let t = TruncatedLoadFunctions::new(2.0, s);
        for x in [1e-6, 0.01, 0.3, 1.0, 4.0, 17.0] {
            let rho = 2.0 * quad::integrate(|u| s.survival_unchecked(u), 0.0, x, 1e-14).unwrap();
            let m2 = 2.0 * quad::integrate(|u| u * s.survival_unchecked(u), 0.0, x, 1e-14).unwrap();
            assert!((t.rho(x) - rho).abs() < 1e-12, "x={x}");
            assert!((t.second_moment(x) - m2).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn las_example_and_ordering() {
        let s = cox(5.0, 1.0, 0.1);
        let las = las_l(2.1, &s).unwrap();
        assert!((las - 1.48).abs() < 0.05, "{las}");
        assert!(fcfs_l(2.1, &s).unwrap() > las);
    }

    #[test]
    fn density_integrates_to_one() {
        let s = cox(5.0, 1.0, 0.1);
        let v = quad::integrate(|x| s.density(x), 0.0, tail_cutoff(&s), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_and_unstable() {
        let s = cox(5.0, 1.0, 0.1);
        assert_eq!(fcfs_l(0.0, &s).unwrap(), 0.0);
        assert_eq!(las_l(0.0, &s).unwrap(), 0.0);
        assert_eq!(priority_two_class_l(0.0, &s).unwrap(), 0.0);
        assert!(matches!(fcfs_l(3.4, &s), Err(Error::Unstable(_))));
        assert!(matches!(las_l(3.4, &s), Err(Error::Unstable(_))));
    }
}
