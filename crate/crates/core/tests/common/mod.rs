#![allow(dead_code)]

use fbq::{MultiServerModel, SingleServerModel};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stable single-server model with K levels, top speed 1, and load
/// drawn from [0.1, max_load].
pub fn random_single(rng: &mut ChaCha8Rng, k: usize, max_load: f64) -> SingleServerModel {
    let nu1 = rng.gen_range(1.0..10.0);
    let nu2 = rng.gen_range(0.5..5.0);
    let q = rng.gen_range(0.05..0.8);
    let load = rng.gen_range(0.1..max_load);
    let lambda = load / (1.0 / nu1 + q / nu2);
    let mut levels: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    levels.sort_by(f64::total_cmp);
    if rng.gen_bool(0.3) {
        levels[0] = 0.0;
    }
    levels.push(1.0);
    let alpha = rng.gen_range(1.0..3.0);
    SingleServerModel::from_parts(lambda, nu1, nu2, q, levels, alpha).unwrap()
}

/// Random stable multiserver model with (rho1 + rho2)/m in [0.1, max_load].
pub fn random_multi(rng: &mut ChaCha8Rng, m: usize, threshold: usize, max_load: f64) -> MultiServerModel {
    let mu1 = rng.gen_range(0.5..5.0);
    let mu2 = rng.gen_range(0.2..3.0);
    let q = rng.gen_range(0.05..0.8);
    let load = rng.gen_range(0.1..max_load);
    let lambda = load * m as f64 / (1.0 / mu1 + q / mu2);
    MultiServerModel::new(lambda, mu1, mu2, q, m, threshold).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
