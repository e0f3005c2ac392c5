//! Independent LP oracle for cross-checks: every program is re-solved with
//! microlp, never with the crate's own simplex.
#![allow(dead_code)]

use ctlp::lp::{LinearProgram, Relation};
use ctlp::pipeline::PackingProgram;
use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

fn solve(p: Problem) -> f64 {
    match p.solve().expect("oracle LP solves") {
        SolveOutcome::Solution(s) => s.objective(),
        other => panic!("oracle LP interrupted: {other:?}"),
    }
}

/// `max cᵀx` over the rows with `x ≥ 0`.
pub fn oracle_max(lp: &LinearProgram) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = lp.objective.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
    for r in &lp.rows {
        let expr: Vec<_> = r.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
        let op = match r.rel {
            Relation::Le => ComparisonOp::Le,
            Relation::Eq => ComparisonOp::Eq,
            Relation::Ge => ComparisonOp::Ge,
        };
        p.add_constraint(&expr, op, r.rhs);
    }
    solve(p)
}

/// Optimum of a restricted packing program, `max 1ᵀy`.
pub fn oracle_packing(pack: &PackingProgram) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..pack.num_columns()).map(|_| p.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for r in &pack.rows {
        let expr: Vec<_> = r.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
        p.add_constraint(&expr, ComparisonOp::Le, r.rhs);
    }
    solve(p)
}
