//! Closed forms: K = 1, and K > 1 with the server stopped below K jobs.

use super::{BoundaryProbabilities, SingleServerSolution};
use crate::error::{Error, Result};
use crate::kernel;
use crate::model::SingleServerModel;

/// Boundary and means of the K = 1 chain at top-speed rates.
struct K1 {
    p00: f64,
    p10: f64,
    p01: f64,
    g0_at_1: f64,
    l1: f64,
    l2: f64,
}

fn k1_values(model: &SingleServerModel) -> Result<K1> {
    let (lam, mu1, q) = (model.lambda, model.mu1(), model.q());
    let (rho1, rho2) = (model.rho1(), model.rho2());
    let p00 = 1.0 - rho1 - rho2 * q;
    let y0 = kernel::y1(rho1, q, 0.0)?;
    // g0 starts with rho2 p00 (1 - y1(0)) z; the idle-state balance then fixes pi(1,0).
    let p01 = rho2 * p00 * (1.0 - y0);
    let p10 = if q < 1.0 { lam * p00 * y0 / (mu1 * (1.0 - q)) } else { lam * p00 / (lam + mu1) };
    let l1 = rho1 / (1.0 - rho1);
    let l2 = (rho1 + rho2 * q) / (1.0 - rho1 - rho2 * q) * (1.0 - rho1 + rho1 * q / (1.0 - rho1)) - rho1;
    Ok(K1 { p00, p10, p01, g0_at_1: rho2 * q, l1, l2 })
}

pub fn solve_k1_closed_form(model: &SingleServerModel) -> Result<SingleServerSolution> {
    if model.k() != 1 {
        return Err(Error::Unsupported(format!("closed form needs K = 1, got K = {}", model.k())));
    }
    model.ensure_stable()?;
    let v = k1_values(model)?;
    let mut b = BoundaryProbabilities::zeros(1);
    b.set(0, 0, v.p00);
    b.set(1, 0, v.p10);
    b.set(0, 1, v.p01);
    Ok(SingleServerSolution::assemble(model, b, v.g0_at_1, 1.0 - v.p00, v.l1, v.l2))
}

/// Server idle whenever fewer than K jobs are present.
///
/// With q > 0 the background queue can never drop below K-1, and the
/// recurrent part of the chain is the K = 1 chain with K-1 extra background
/// jobs. With q = 0 the background queue stays empty and it is the foreground
/// queue that keeps K-1 jobs parked.
pub fn solve_zero_speed(model: &SingleServerModel) -> Result<SingleServerSolution> {
    let k = model.k();
    let levels = model.speeds.levels();
    if levels[..k].iter().any(|&s| s != 0.0) {
        return Err(Error::Unsupported("zero-low-speed solution needs s_n = 0 for all n < K".into()));
    }
    model.ensure_stable()?;
    let v = k1_values(model)?;
    let shift = (k - 1) as f64;
    let mut b = BoundaryProbabilities::zeros(k);
    let (l1, l2, g0_at_1);
    if model.q() > 0.0 {
        b.set(0, k - 1, v.p00);
        b.set(1, k - 1, v.p10);
        b.set(0, k, v.p01);
        // tail means exclude the level K-1 state, which carries K-1 background jobs
        l1 = v.l1;
        l2 = shift + v.l2 - shift * v.p00;
        g0_at_1 = v.g0_at_1;
    } else {
        b.set(k - 1, 0, v.p00);
        b.set(k, 0, v.p10);
        l1 = shift + v.l1 - shift * v.p00;
        l2 = 0.0;
        g0_at_1 = 0.0;
    }
    Ok(SingleServerSolution::assemble(model, b, g0_at_1, 1.0 - v.p00, l1, l2))
}
