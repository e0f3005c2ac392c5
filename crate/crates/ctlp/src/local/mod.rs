//! The local LP oracle: per-query simulation of a round-limited packing solver
//! around the queried names, followed by the restore-and-repair rule.

mod graph;
mod solve;

pub use graph::{build_ball, CommGraphView, CspPackingSource, ExplicitSource, PackingSource};
pub use solve::{local_packing_solve, LocalSolver, LocalSolverParams, SolveMode, GUARD};

use serde::{Deserialize, Serialize};

use crate::csp::{ConstraintOracle, CspInstance};
use crate::error::{Error, Result};
use crate::lp::{lp_value, ColumnLabel, LpSolution};
use crate::pipeline::{gamma_bounds, product_table, repair_marginal, ComplementLayout, PipelineParams};

/// A BasicLP name the oracle answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LpName {
    /// `x_{v,a}`
    X { v: usize, a: usize },
    /// `μ_{P,β}` for constraint `c` and table index `b`
    Mu { c: usize, b: usize },
}

impl std::fmt::Display for LpName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpName::X { v, a } => write!(f, "x[{v}][{a}]"),
            LpName::Mu { c, b } => write!(f, "mu[{c}][{b}]"),
        }
    }
}

impl std::str::FromStr for LpName {
    type Err = Error;

    /// Parses `x[v][a]` or `mu[c][b]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse name {s:?}"));
        let (head, rest) = s.split_once('[').ok_or_else(bad)?;
        let nums: Vec<usize> = rest
            .trim_end_matches(']')
            .split("][")
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match (head.trim(), nums.as_slice()) {
            ("x", &[v, a]) => Ok(LpName::X { v, a }),
            ("mu", &[c, b]) => Ok(LpName::Mu { c, b }),
            _ => Err(bad()),
        }
    }
}

/// The oracle `O_lp`. Owns its constraint-oracle handle and query counter.
pub struct LpOracle<'a> {
    solver: LocalSolver<CspPackingSource<'a>>,
    pub params: PipelineParams,
}

impl<'a> LpOracle<'a> {
    /// Oracle with the default pipeline schedule for `eps` and the default local solver.
    pub fn new(oracle: ConstraintOracle<'a>, eps: f64) -> Self {
        let (q, s, t, w) = oracle.params();
        Self::with_params(oracle, PipelineParams::new(q, s, t, w, eps), LocalSolverParams::new(eps))
    }

    pub fn with_params(oracle: ConstraintOracle<'a>, params: PipelineParams, local: LocalSolverParams) -> Self {
        let (q, s, t, w) = oracle.params();
        let (gp, gd) = gamma_bounds(q, s, t, w, &params);
        let src = CspPackingSource::new(oracle, params);
        LpOracle {
            solver: LocalSolver::new(src, local, gp, gd),
            params,
        }
    }

    pub fn rounds(&self) -> usize {
        self.solver.rounds
    }

    pub fn query_count(&self) -> u64 {
        self.solver.src.queries()
    }

    pub fn instance(&self) -> &'a CspInstance {
        self.solver.src.oracle().instance()
    }

    /// Packing-LP values of a block of columns, with the mode used.
    pub fn packing_values(&mut self, cols: &[ColumnLabel]) -> (Vec<f64>, SolveMode) {
        let (vals, _, mode) = self.solver.solve_block(cols);
        (vals, mode)
    }

    /// The ball a block query explores.
    pub fn ball(&mut self, cols: &[ColumnLabel]) -> CommGraphView<ColumnLabel, crate::lp::RowLabel> {
        let radius = self.solver.radius();
        build_ball(&mut self.solver.src, cols, radius)
    }

    /// Complemented-LP values `(x_{v,·}, x̄_{v,·})`.
    fn pairs(&mut self, v: usize) -> (Vec<f64>, Vec<f64>) {
        let q = self.params_q();
        let mut cols: Vec<ColumnLabel> = (0..q).map(|a| ColumnLabel::X { v, a }).collect();
        cols.extend((0..q).map(|a| ColumnLabel::XBar { v, a }));
        let (y, _) = self.packing_values(&cols);
        let z: Vec<f64> = cols.iter().zip(&y).map(|(&c, y)| y / self.solver.src.scale(c)).collect();
        (z[..q].to_vec(), z[q..].to_vec())
    }

    fn params_q(&self) -> usize {
        self.solver.src.oracle().params().0
    }

    /// Repaired marginal of `v` and whether it was reset to uniform.
    pub fn marginal(&mut self, v: usize) -> (Vec<f64>, bool) {
        let (x, xbar) = self.pairs(v);
        repair_marginal(&x, &xbar, self.params.eps_dprime)
    }

    /// Repaired local distribution of constraint `c`.
    pub fn table(&mut self, c: usize) -> Vec<f64> {
        let q = self.params_q();
        let vars = self.solver.src.oracle().distinct_vars(c).to_vec();
        let margs: Vec<(Vec<f64>, bool)> = vars.iter().map(|&v| self.marginal(v)).collect();
        if margs.iter().any(|(_, r)| *r) {
            let m: Vec<Vec<f64>> = margs.into_iter().map(|(m, _)| m).collect();
            return product_table(q, &m);
        }
        let len = q.pow(vars.len() as u32);
        let cols: Vec<ColumnLabel> = (0..len).map(|b| ColumnLabel::Mu { c, b }).collect();
        let (y, _) = self.packing_values(&cols);
        cols.iter()
            .zip(&y)
            .map(|(&col, y)| (y / self.solver.src.scale(col)).max(0.0))
            .collect()
    }

    /// The value of one name.
    pub fn query(&mut self, name: LpName) -> f64 {
        match name {
            LpName::X { v, a } => self.marginal(v).0[a],
            LpName::Mu { c, b } => {
                let vars = self.solver.src.oracle().distinct_vars(c).to_vec();
                let margs: Vec<(Vec<f64>, bool)> = vars.iter().map(|&v| self.marginal(v)).collect();
                if margs.iter().any(|(_, r)| *r) {
                    let m: Vec<Vec<f64>> = margs.into_iter().map(|(m, _)| m).collect();
                    return product_table(self.params_q(), &m)[b];
                }
                let col = ColumnLabel::Mu { c, b };
                let (y, _) = self.packing_values(&[col]);
                (y[0] / self.solver.src.scale(col)).max(0.0)
            }
        }
    }
}

/// `lp_oracle_query` as a free function.
pub fn lp_oracle_query(o: &mut LpOracle<'_>, name: LpName) -> f64 {
    o.query(name)
}

/// The whole packing vector, indexed like the complemented LP.
pub fn assemble_packing(o: &mut LpOracle<'_>) -> Vec<f64> {
    let inst = o.instance();
    let lay = ComplementLayout::new(inst);
    let mut y = vec![0.0; lay.total()];
    for v in 0..inst.n {
        let mut cols: Vec<ColumnLabel> = (0..inst.q).map(|a| ColumnLabel::X { v, a }).collect();
        cols.extend((0..inst.q).map(|a| ColumnLabel::XBar { v, a }));
        let (vals, _) = o.packing_values(&cols);
        for (a, val) in vals.iter().enumerate() {
            if a < inst.q {
                y[lay.x(v, a)] = *val;
            } else {
                y[lay.xbar(v, a - inst.q)] = *val;
            }
        }
    }
    for c in 0..inst.num_constraints() {
        let len = inst.table_len(c);
        let mut cols: Vec<ColumnLabel> = (0..len).map(|b| ColumnLabel::Mu { c, b }).collect();
        cols.extend((0..len).map(|b| ColumnLabel::MuBar { c, b }));
        let (vals, _) = o.packing_values(&cols);
        for b in 0..len {
            y[lay.mu(c, b)] = vals[b];
            y[lay.mubar(c, b)] = vals[len + b];
        }
    }
    y
}

/// Materializes the oracle's answers for every name, one block per variable
/// and per constraint.
pub fn assemble_global(o: &mut LpOracle<'_>) -> LpSolution {
    let inst = o.instance();
    let x: Vec<Vec<f64>> = (0..inst.n).map(|v| o.marginal(v).0).collect();
    let mu: Vec<Vec<f64>> = (0..inst.num_constraints()).map(|c| o.table(c)).collect();
    let mut sol = LpSolution { x, mu, value: 0.0 };
    sol.value = lp_value(inst, &sol);
    sol
}

/// Analytic per-query cost bound `max(q, qs)·(Δ_p Δ_d)^{r+2}`.
pub fn query_cost_bound(q: usize, s: usize, delta_p: usize, delta_d: usize, rounds: usize) -> f64 {
    let lead = q.max(q * s) as f64;
    lead * ((delta_p * delta_d) as f64).powi(rounds as i32 + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::fixtures::*;
    use crate::pipeline::{normalize_packing, to_packing};

    #[test]
    fn name_round_trip() {
        for name in [LpName::X { v: 3, a: 1 }, LpName::Mu { c: 12, b: 0 }] {
            assert_eq!(name.to_string().parse::<LpName>().unwrap(), name);
        }
        assert!("y[1][2]".parse::<LpName>().is_err());
    }

    #[test]
    fn local_rows_match_global_program() {
        let inst = triangle();
        let params = PipelineParams::for_instance(&inst, 0.2);
        let pack = normalize_packing(&to_packing(&inst, &params), &params, inst.w);
        let mut src = CspPackingSource::new(ConstraintOracle::new(&inst), params);
        for r in &pack.rows {
            let (coeffs, rhs) = src.row_data(r.label);
            assert_eq!(rhs, r.rhs);
            let mut want: Vec<(ColumnLabel, f64)> = r.coeffs.iter().map(|&(i, a)| (pack.labels[i], a)).collect();
            want.sort_by_key(|&(c, _)| c);
            assert_eq!(coeffs, want);
        }
    }

    #[test]
    fn single_ball_radius_one() {
        let inst = single();
        let params = PipelineParams::for_instance(&inst, 0.2);
        let mut src = CspPackingSource::new(ConstraintOracle::new(&inst), params);
        let view = build_ball(&mut src, &[ColumnLabel::X { v: 0, a: 0 }], 1);
        // query(0,1) finds the constraint, query(0,2) answers ⊥
        assert_eq!(view.query_cost, 2);
        let rows: Vec<_> = view.rows.iter().map(|r| r.0).collect();
        assert_eq!(rows.len(), 3);
        assert!(view.contains(ColumnLabel::Mu { c: 0, b: 1 }));
        let view0 = build_ball(&mut src, &[ColumnLabel::X { v: 0, a: 0 }], 0);
        assert_eq!(view0.columns.len(), 1);
        assert_eq!(view0.query_cost, 0);
    }

    #[test]
    fn isolated_variable_ball_closes() {
        let inst = single();
        let params = PipelineParams::for_instance(&inst, 0.2);
        let mut src = CspPackingSource::new(ConstraintOracle::new(&inst), params);
        let view = build_ball(&mut src, &[ColumnLabel::X { v: 3, a: 0 }], 5);
        assert!(view.closed);
        assert_eq!(view.columns.len(), 4);
    }

    #[test]
    fn empty_instance_assembles_to_zero() {
        let inst = empty(2, 0);
        let mut o = LpOracle::new(ConstraintOracle::new(&inst), 0.2);
        let sol = assemble_global(&mut o);
        assert!(sol.x.is_empty() && sol.mu.is_empty());
        assert_eq!(sol.value, 0.0);
    }
}
