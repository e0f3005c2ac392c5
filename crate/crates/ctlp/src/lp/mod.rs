//! Linear programs, the exact dense simplex, and BasicLP.

mod basic;
mod simplex;

pub use basic::{
    build_basic_lp, infeasibility, lp_value, marginal_entries, solve_basic_lp, BasicLayout, LpSolution,
};
pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Semantic name of an LP column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnLabel {
    /// `x_{v,a}`
    X { v: usize, a: usize },
    /// complement `x̄_{v,a}`
    XBar { v: usize, a: usize },
    /// `μ_{P,β}` with `β` the index over distinct variables of constraint `c`
    Mu { c: usize, b: usize },
    /// complement `μ̄_{P,β}`
    MuBar { c: usize, b: usize },
    /// anything else
    Free(usize),
}

/// Semantic name of an LP row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowLabel {
    /// `Σ_a x_{v,a}`
    XSum { v: usize },
    /// `Σ_a x̄_{v,a}`
    XBarSum { v: usize },
    /// marginal row of constraint `c` at variable `v` and value `a`
    XMarg { c: usize, v: usize, a: usize },
    /// complemented marginal row
    XBarMarg { c: usize, v: usize, a: usize },
    /// `x + x̄ ≤ 1`
    XCouple { v: usize, a: usize },
    /// `μ + μ̄ ≤ 1`
    MuCouple { c: usize, b: usize },
    /// upper bound `z_col ≤ 1`
    Bound { col: usize },
    Free(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: RowLabel,
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

/// `max cᵀx` subject to the rows and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub labels: Vec<ColumnLabel>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn add_column(&mut self, label: ColumnLabel, cost: f64) -> usize {
        self.objective.push(cost);
        self.labels.push(label);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, label: RowLabel, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.objective.len()));
        self.rows.push(Row {
            label,
            coeffs,
            rel,
            rhs,
        });
    }

    pub fn num_columns(&self) -> usize {
        self.objective.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or of nonnegativity.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |m, &v| m.max(-v));
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.rel {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn column_of(&self, label: ColumnLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

/// Optimal value and point of an LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub value: f64,
    pub x: Vec<f64>,
}
