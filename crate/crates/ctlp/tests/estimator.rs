use ctlp::estimator::{sample_count, sum_estimator};
use proptest::prelude::*;

#[test]
fn failure_rate_below_delta() {
    let n = 5000;
    let f = |i: usize| if i % 7 < 3 { 1.0 } else { (i % 11) as f64 / 10.0 };
    let truth: f64 = (0..n).map(f).sum();
    let (eps, delta) = (0.05, 0.2);
    let runs = 2000;
    let fails = (0..runs)
        .filter(|&s| (sum_estimator(f, n, 1.0, eps, delta, s) - truth).abs() > eps * n as f64)
        .count();
    let rate = fails as f64 / runs as f64;
    assert!(rate <= delta, "failure rate {rate}");
}

#[test]
fn same_seed_same_estimate() {
    let f = |i: usize| (i % 3) as f64;
    assert_eq!(sum_estimator(f, 900, 2.0, 0.1, 0.1, 5), sum_estimator(f, 900, 2.0, 0.1, 0.1, 5));
}

proptest! {
    #[test]
    fn sample_count_monotone(w in 0.5f64..4.0, eps in 0.01f64..0.5, delta in 0.01f64..0.5) {
        let m = sample_count(w, eps, delta);
        prop_assert!(sample_count(w, eps / 2.0, delta) >= m);
        prop_assert!(sample_count(w, eps, delta / 2.0) >= m);
        prop_assert!(sample_count(2.0 * w, eps, delta) >= m);
    }

    #[test]
    fn estimate_in_range(seed in 0u64..1000, n in 1usize..500) {
        let e = sum_estimator(|i| (i % 5) as f64 / 4.0, n, 1.0, 0.2, 0.2, seed);
        prop_assert!(e >= 0.0 && e <= n as f64);
    }
}
