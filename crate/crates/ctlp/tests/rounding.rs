use ctlp::corpus::{planted_horn, random_corpus, rng, CorpusLimits};
use ctlp::csp::fixtures::*;
use ctlp::csp::{brute_force_opt, evaluate, ConstraintOracle, CspInstance};
use ctlp::local::LpOracle;
use ctlp::lp::{infeasibility, lp_value, solve_basic_lp, LpSolution};
use ctlp::rounding::*;
use proptest::prelude::*;
use rand::Rng;

fn small_corpus(seed: u64, count: usize) -> Vec<CspInstance> {
    let limits = CorpusLimits { n_min: 2, n_max: 6, t_max: 3, w_max: 1.0, ..CorpusLimits::brute_force() };
    random_corpus(seed, count, limits)
}

/// Every assignment of `n` variables over `[q]`.
fn all_assignments(q: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..q.pow(n as u32)).map(move |mut k| {
        let mut b = vec![0; n];
        for slot in b.iter_mut().rev() {
            *slot = k % q;
            k /= q;
        }
        b
    })
}

#[test]
fn folded_value_equals_unfolded_value() {
    let mut r = rng(21);
    for inst in small_corpus(22, 40) {
        // coarse random marginals so that several variables share a bucket
        let x: Vec<Vec<f64>> = (0..inst.n)
            .map(|_| (0..inst.q).map(|_| r.gen_range(0..3) as f64 / 2.0).collect())
            .collect();
        let f = fold(&inst, &x, 0.5).unwrap();
        assert!((f.instance.total_weight() - inst.total_weight()).abs() < 1e-12);
        assert_eq!(f.instance.num_constraints(), inst.num_constraints());
        for bp in all_assignments(inst.q, f.instance.n) {
            let beta = f.map.unfold(&bp);
            assert_eq!(evaluate(&f.instance, &bp), evaluate(&inst, &beta));
        }
    }
}

#[test]
fn identity_fold_keeps_lp() {
    let inst = triangle();
    let x = vec![vec![0.1, 0.9], vec![0.5, 0.5], vec![0.9, 0.1]];
    let f = fold(&inst, &x, 0.01).unwrap();
    assert_eq!(f.instance.n, 3);
    let a = solve_basic_lp(&inst).unwrap().value;
    let b = solve_basic_lp(&f.instance).unwrap().value;
    assert!((a - b).abs() < 1e-9);
}

proptest! {
    #[test]
    fn discretize_properties(x in 0.0f64..1.2, y in 0.0f64..1.2, k in 2u32..40) {
        let eps = 1.0 / k as f64;
        let (dx, dy) = (discretize(x, eps), discretize(y, eps));
        if x <= y {
            prop_assert!(dx <= dy);
        }
        prop_assert_eq!(discretize(dx, eps), dx);
        if x > 0.0 {
            prop_assert!(x <= dx + 1e-12 && dx < x + eps + 1e-12);
        }
    }
}

fn perturbed(inst: &CspInstance, r: &mut impl Rng, scale: f64) -> LpSolution {
    let mut s = solve_basic_lp(inst).unwrap();
    for row in s.x.iter_mut() {
        for v in row.iter_mut() {
            *v = (*v + scale * r.gen_range(-1.0..1.0)).max(0.0);
        }
    }
    s.value = lp_value(inst, &s);
    s
}

#[test]
fn discretized_marginals_stay_nearly_feasible() {
    let mut r = rng(23);
    let limits = CorpusLimits { n_max: 12, ..CorpusLimits::brute_force() };
    for inst in random_corpus(24, 40, limits) {
        for k in [4u32, 10, 50] {
            let eps = 1.0 / k as f64;
            let sol = perturbed(&inst, &mut r, eps / (2.0 * inst.q as f64));
            let e0 = infeasibility(&inst, &sol).unwrap();
            assert!(e0 <= eps);
            let mut d = sol.clone();
            for row in d.x.iter_mut() {
                for v in row.iter_mut() {
                    *v = discretize(*v, eps);
                }
            }
            let e1 = infeasibility(&inst, &d).unwrap();
            assert!(e1 <= (inst.q as f64 + 1.0) * eps + 1e-12, "{e1} vs {}", (inst.q + 1) as f64 * eps);
        }
    }
}

#[test]
fn fold_at_lp_marginals_loses_little() {
    let limits = CorpusLimits { n_max: 12, ..CorpusLimits::brute_force() };
    let mut worst = 0.0f64;
    for inst in random_corpus(25, 40, limits) {
        let sol = solve_basic_lp(&inst).unwrap();
        for k in [4u32, 10, 50] {
            let eps = 1.0 / k as f64;
            let f = fold(&inst, &sol.x, eps).unwrap();
            let folded = solve_basic_lp(&f.instance).unwrap().value;
            let kappa = (sol.value - folded) / (eps * inst.n as f64);
            worst = worst.max(kappa);
            let poly = (inst.q as f64).powi(inst.s as i32) * (inst.s * inst.t) as f64 * inst.w;
            assert!(kappa <= poly, "kappa {kappa} above {poly}");
        }
    }
    println!("largest measured kappa {worst:.4}");
}

fn run_round(inst: &CspInstance, eps: f64, seed: u64) -> RoundingResult {
    let params = RoundingParams::for_instance(inst, eps);
    let mut o = ConstraintOracle::new(inst);
    let mut lp = LpOracle::new(ConstraintOracle::new(inst), lp_epsilon(&params));
    round(&mut o, &mut lp, params, seed).unwrap()
}

#[test]
fn estimate_never_exceeds_opt_by_more_than_slack() {
    let eps = 0.3;
    for (i, inst) in small_corpus(26, 25).into_iter().enumerate() {
        let (opt, _) = brute_force_opt(&inst).unwrap();
        let res = run_round(&inst, eps, i as u64);
        assert!(res.estimate <= opt + eps * inst.n as f64 / 2.0, "estimate {} opt {opt}", res.estimate);
    }
}

#[test]
fn answers_follow_the_map() {
    let inst = horn_chain();
    let res = run_round(&inst, 0.3, 1);
    let params = res.params;
    let mut lp = LpOracle::new(ConstraintOracle::new(&inst), lp_epsilon(&params));
    for v in 0..inst.n {
        let a = assignment_query(&res, &mut lp, v).unwrap();
        assert_eq!(a, res.answer(v));
        assert_eq!(a, assignment_query(&res, &mut lp, v).unwrap());
    }
}

#[test]
fn horn_estimates_near_total_weight() {
    let eps = 0.3;
    let mut r = rng(27);
    let mut good = 0;
    let trials = 12;
    for i in 0..trials {
        let inst = planted_horn(&mut r, 30, 3, 3);
        let res = run_round(&inst, eps, 100 + i);
        if res.estimate >= (1.0 - eps) * inst.total_weight() - eps * inst.n as f64 {
            good += 1;
        }
    }
    assert!(3 * good >= 2 * trials, "{good}/{trials}");
}

#[test]
fn empty_instance_is_accepted() {
    let inst = empty(2, 5);
    let mut o = ConstraintOracle::new(&inst);
    assert!(test_satisfiability(&mut o, Family::Horn, 0.2, 0).unwrap().accept);
}
