mod common;

use common::oracle_max;
use ctlp::corpus::{random_corpus, CorpusLimits};
use ctlp::csp::fixtures::*;
use ctlp::lp::{solve_basic_lp, solve_lp};
use ctlp::pipeline::*;

#[test]
fn complemented_optimum_is_relaxed_optimum_plus_c_n() {
    for inst in random_corpus(23, 15, CorpusLimits::brute_force()) {
        let p = PipelineParams::for_instance(&inst, 0.1);
        let lp2 = oracle_max(&relax_basic_lp_bounded(&inst, p.eps));
        let lp3 = to_packing(&inst, &p);
        let out = solve_lp(&lp3).unwrap();
        let n_cols = ComplementLayout::new(&inst).primal_columns() as f64;
        let gap = out.value - lp2 - p.c_big * n_cols;
        assert!(gap.abs() <= 1e-6 * inst.total_weight(), "gap {gap:e}");
        let z = ComplementPoint::from_columns(&inst, &out.x);
        let pairs = z.x.iter().flatten().zip(z.xbar.iter().flatten());
        let pairs = pairs.chain(z.mu.iter().flatten().zip(z.mubar.iter().flatten()));
        for (a, b) in pairs {
            assert!((a + b - 1.0).abs() <= 1e-7);
        }
    }
}

#[test]
fn packing_form_is_restricted() {
    for inst in random_corpus(5, 10, CorpusLimits::brute_force()) {
        let p = PipelineParams::for_instance(&inst, 0.2);
        let pack = normalize_packing(&to_packing(&inst, &p), &p, inst.w);
        for r in &pack.rows {
            assert!(r.rhs >= 0.0);
            for &(_, a) in &r.coeffs {
                assert!(a >= 1.0 - 1e-12, "coefficient {a} below one");
            }
        }
        let z: Vec<f64> = (0..pack.num_columns()).map(|i| (i % 7) as f64 / 7.0).collect();
        let back = pack.unscale(&pack.scale_up(&z));
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        assert!(pack.stats.delta_p >= 1 && pack.stats.delta_d >= 1);
    }
}

#[test]
fn exact_relaxed_optimum_survives_repair() {
    for inst in random_corpus(8, 15, CorpusLimits::brute_force()).into_iter().chain([triangle(), single()]) {
        let eps = 0.2;
        let p = PipelineParams::for_instance(&inst, eps);
        let out = solve_lp(&relax_basic_lp_bounded(&inst, eps)).unwrap();
        let z = complement_of_relaxed(&inst, &out.x);
        let rep = restore_and_repair(&inst, &z, &p).unwrap();
        let lp = solve_basic_lp(&inst).unwrap().value;
        assert!(rep.infeasibility <= eps + 1e-6);
        assert!(rep.solution.value >= (1.0 - eps) * lp - eps * inst.n as f64);
    }
}
