//! Additive sampling estimator for sums of bounded point queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample count `ceil(w² ln(2/δ) / (2ε²))` from Hoeffding's inequality.
pub fn sample_count(w: f64, eps: f64, delta: f64) -> usize {
    (w * w * (2.0 / delta).ln() / (2.0 * eps * eps)).ceil() as usize
}

/// Estimates `Σ_{i<n} f(i)` for `f: [n] → [0, w]` within `εn` with probability `1 − δ`.
///
/// ```
/// let est = ctlp::estimator::sum_estimator(|_| 0.5, 1000, 1.0, 0.1, 0.1, 7);
/// assert_eq!(est, 500.0);
/// ```
pub fn sum_estimator(f: impl FnMut(usize) -> f64, n: usize, w: f64, eps: f64, delta: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sum_estimator_with(f, n, w, eps, delta, &mut rng)
}

pub fn sum_estimator_with(
    mut f: impl FnMut(usize) -> f64,
    n: usize,
    w: f64,
    eps: f64,
    delta: f64,
    rng: &mut impl Rng,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let m = sample_count(w, eps, delta);
    let total: f64 = (0..m).map(|_| f(rng.gen_range(0..n))).sum();
    total * n as f64 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_example() {
        assert_eq!(sample_count(1.0, 0.1, 1.0 / 3.0), 90);
    }

    #[test]
    fn constant_function_is_exact() {
        assert_eq!(sum_estimator(|_| 0.25, 400, 1.0, 0.2, 0.1, 3), 100.0);
    }

    #[test]
    fn empty_domain() {
        assert_eq!(sum_estimator(|_| 1.0, 0, 1.0, 0.1, 0.1, 3), 0.0);
    }
}
