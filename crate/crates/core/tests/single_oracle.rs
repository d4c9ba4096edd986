mod common;

use common::{random_single, rel, rng};
use fbq::ctmc::{ctmc_solve_single, Truncation};
use fbq::single::{solve_general, solve_k1_closed_form, solve_zero_speed};
use fbq::SingleServerModel;

#[test]
fn general_matches_chain_oracle() {
    let mut r = rng(7);
    for k in 1..=4 {
        for _ in 0..6 {
            let m = random_single(&mut r, k, 0.85);
            let s = solve_general(&m).unwrap();
            let c = ctmc_solve_single(&m, Truncation::default()).unwrap();
            assert!(rel(s.l1, c.l1) < 1e-6, "K={k} L1 {} vs {} for {m:?}", s.l1, c.l1);
            assert!(rel(s.l2, c.l2) < 1e-6, "K={k} L2 {} vs {} for {m:?}", s.l2, c.l2);
            for (i, j, p) in s.boundary.iter() {
                assert!((p - c.prob(i, j)).abs() < 1e-9, "pi({i},{j})");
            }
        }
    }
}

#[test]
fn speed_scaling_example_matches_oracle() {
    let m = SingleServerModel::from_parts(2.5, 5.0, 1.0, 0.1, vec![0.0, 0.6, 1.0], 2.0).unwrap();
    let s = solve_general(&m).unwrap();
    let c = ctmc_solve_single(&m, Truncation::default()).unwrap();
    assert!(rel(s.l, c.l) < 1e-6);
}

#[test]
fn k1_closed_form_matches_oracle() {
    let m = SingleServerModel::from_parts(2.1, 5.0, 1.0, 0.1, vec![0.0, 1.0], 1.0).unwrap();
    let s = solve_k1_closed_form(&m).unwrap();
    let c = ctmc_solve_single(&m, Truncation::default()).unwrap();
    assert!(rel(s.l, c.l) < 1e-8);
    assert!((s.l - 1.4150046598).abs() < 1e-9);
}

#[test]
fn zero_speed_matches_oracle() {
    for (lambda, q, k) in [(2.0, 0.1, 3), (1.0, 0.4, 2), (2.0, 0.0, 2), (2.0, 0.0, 4)] {
        let mut levels = vec![0.0; k];
        levels.push(1.0);
        let m = SingleServerModel::from_parts(lambda, 5.0, 1.0, q, levels, 1.0).unwrap();
        let s = solve_zero_speed(&m).unwrap();
        let c = ctmc_solve_single(&m, Truncation::default()).unwrap();
        assert!(rel(s.l1, c.l1) < 1e-7, "q={q} K={k}: L1 {} vs {}", s.l1, c.l1);
        assert!((s.l2 - c.l2).abs() < 1e-7 * (1.0 + c.l2), "q={q} K={k}: L2 {} vs {}", s.l2, c.l2);
    }
}
