mod common;

use common::{random_single, rng};
use fbq::ctmc::{ctmc_solve_single, Truncation};
use fbq::multi;
use fbq::sim::{simulate, simulate_many, SimConfig, SimModel};
use fbq::single::solve_k1_closed_form;
use fbq::{MultiServerModel, SingleServerModel};

#[test]
fn million_jobs_match_k1_closed_form() {
    let m = SingleServerModel::from_parts(2.1, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap();
    let exact = solve_k1_closed_form(&m).unwrap().l;
    let e = simulate(&SimConfig::new(SimModel::Single(m), 1_000_000)).unwrap();
    assert!((e.l - exact).abs() < 3.0 * e.ci, "{} vs {exact} (ci {})", e.l, e.ci);
}

#[test]
fn random_single_models_within_three_ci() {
    let mut r = rng(21);
    let configs: Vec<SimConfig> = (0..10)
        .map(|t| {
            let k = 1 + t % 3;
            let m = random_single(&mut r, k, 0.8);
            SimConfig::new(SimModel::Single(m), 300_000).with_seed(100 + t as u64)
        })
        .collect();
    let results = simulate_many(&configs);
    let mut hits = 0;
    for (c, e) in configs.iter().zip(results) {
        let SimModel::Single(m) = &c.model else { unreachable!() };
        let e = e.unwrap();
        let exact = ctmc_solve_single(m, Truncation::default()).unwrap().l;
        if (e.l - exact).abs() < 3.0 * e.ci {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10 within 3 ci");
}

#[test]
fn threshold_pool_matches_solver() {
    let m = MultiServerModel::new(2.0, 1.0, 0.5, 0.4, 4, 2).unwrap();
    let exact = multi::solve(&m).unwrap();
    let e = simulate(&SimConfig::new(SimModel::Multi(m), 400_000)).unwrap();
    assert!((e.l - exact.l).abs() < 3.0 * e.ci, "{} vs {}", e.l, exact.l);
}
