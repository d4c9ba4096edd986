use fbq::baselines::{fcfs_l, las_l, priority_two_class_l};
use fbq::single::solve_k1_closed_form;
use fbq::{CoxianService, SingleServerModel};

fn fb_l(lambda: f64, s: &CoxianService) -> f64 {
    let m = SingleServerModel::from_parts(lambda, s.nu1(), s.nu2(), s.q(), vec![0.0, 1.0], 1.0).unwrap();
    solve_k1_closed_form(&m).unwrap().l
}

fn grid() -> impl Iterator<Item = f64> {
    (0..12).map(|k| 2.1 + 0.1 * k as f64)
}

/// Mean LAS-minus-FB distance along the lambda grid.
fn ordered_gap(s: &CoxianService) -> f64 {
    let mut gap = 0.0;
    let mut n = 0.0;
    for lambda in grid() {
        if lambda * s.mean() >= 1.0 {
            continue;
        }
        let (f, l, b) = (fcfs_l(lambda, s).unwrap(), las_l(lambda, s).unwrap(), fb_l(lambda, s));
        assert!(f > l && l > b, "lambda={lambda}: FCFS {f} LAS {l} FB {b}");
        gap += l - b;
        n += 1.0;
    }
    gap / n
}

#[test]
fn policy_ordering_on_all_comparison_grids() {
    let base = ordered_gap(&CoxianService::new(5.0, 1.0, 0.1).unwrap());
    let weak = ordered_gap(&CoxianService::new(5.0, 0.5, 0.05).unwrap());
    let strong = ordered_gap(&CoxianService::new(5.0, 2.0, 0.2).unwrap());
    assert!(weak < base && base < strong, "gaps {weak} {base} {strong}");
}

#[test]
fn weak_coupling_is_close_to_priority_queue() {
    let s = CoxianService::new(5.0, 0.5, 0.05).unwrap();
    let p = priority_two_class_l(2.1, &s).unwrap();
    let fb = fb_l(2.1, &s);
    assert!((p - fb).abs() / fb < 0.05, "{p} vs {fb}");
}
