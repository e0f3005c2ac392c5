//! BasicLP: per-variable marginals and per-constraint local distributions.

use serde::{Deserialize, Serialize};

use super::{solve_lp, ColumnLabel, LinearProgram, Relation, RowLabel};
use crate::csp::{decode, CspInstance};
use crate::error::{Error, Result};

/// Column offsets of BasicLP: `x_{v,a}` first, then each constraint's table.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicLayout {
    pub q: usize,
    pub n: usize,
    pub mu_offset: Vec<usize>,
    pub total: usize,
}

impl BasicLayout {
    pub fn new(inst: &CspInstance) -> Self {
        let mut off = inst.n * inst.q;
        let mut mu_offset = Vec::with_capacity(inst.num_constraints());
        for c in 0..inst.num_constraints() {
            mu_offset.push(off);
            off += inst.table_len(c);
        }
        BasicLayout {
            q: inst.q,
            n: inst.n,
            mu_offset,
            total: off,
        }
    }

    pub fn x(&self, v: usize, a: usize) -> usize {
        v * self.q + a
    }

    pub fn mu(&self, c: usize, b: usize) -> usize {
        self.mu_offset[c] + b
    }

    pub fn split(&self, inst: &CspInstance, cols: &[f64]) -> LpSolution {
        let x = (0..self.n)
            .map(|v| (0..self.q).map(|a| cols[self.x(v, a)]).collect())
            .collect();
        let mu = (0..inst.num_constraints())
            .map(|c| (0..inst.table_len(c)).map(|b| cols[self.mu(c, b)]).collect())
            .collect();
        let mut sol = LpSolution { x, mu, value: 0.0 };
        sol.value = lp_value(inst, &sol);
        sol
    }
}

/// A (possibly infeasible) BasicLP solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
struct SolutionJson {
    value: f64,
    x: Vec<Vec<f64>>,
    mu: Vec<MuJson>,
}

#[derive(Serialize, Deserialize)]
struct MuJson {
    constraint: usize,
    table: Vec<f64>,
}

impl LpSolution {
    pub fn to_json(&self) -> String {
        let js = SolutionJson {
            value: self.value,
            x: self.x.clone(),
            mu: self
                .mu
                .iter()
                .enumerate()
                .map(|(constraint, table)| MuJson {
                    constraint,
                    table: table.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&js).expect("solution serializes")
    }

    /// Parses a solution and checks its shape against `inst`.
    pub fn from_json(inst: &CspInstance, text: &str) -> Result<Self> {
        let js: SolutionJson = serde_json::from_str(text)?;
        if js.x.len() != inst.n || js.x.iter().any(|r| r.len() != inst.q) {
            return Err(Error::InvalidInstance("x has the wrong shape".into()));
        }
        let mut mu: Vec<Vec<f64>> = (0..inst.num_constraints()).map(|_| Vec::new()).collect();
        for m in js.mu {
            if m.constraint >= mu.len() || m.table.len() != inst.table_len(m.constraint) {
                return Err(Error::InvalidInstance("mu has the wrong shape".into()));
            }
            mu[m.constraint] = m.table;
        }
        if mu.iter().enumerate().any(|(c, t)| t.len() != inst.table_len(c)) {
            return Err(Error::InvalidInstance("missing mu table".into()));
        }
        let mut sol = LpSolution {
            x: js.x,
            mu,
            value: 0.0,
        };
        sol.value = lp_value(inst, &sol);
        Ok(sol)
    }

    pub fn empty(inst: &CspInstance) -> Self {
        LpSolution {
            x: vec![vec![0.0; inst.q]; inst.n],
            mu: (0..inst.num_constraints())
                .map(|c| vec![0.0; inst.table_len(c)])
                .collect(),
            value: 0.0,
        }
    }
}

/// BasicLP exactly as displayed: normalization rows, marginal rows, nonnegativity.
pub fn build_basic_lp(inst: &CspInstance) -> LinearProgram {
    let layout = BasicLayout::new(inst);
    let q = inst.q;
    let mut lp = LinearProgram::default();
    for v in 0..inst.n {
        for a in 0..q {
            lp.add_column(ColumnLabel::X { v, a }, 0.0);
        }
    }
    for c in 0..inst.num_constraints() {
        let w = inst.constraints[c].weight;
        for (b, &sat) in inst.sat_table(c).iter().enumerate() {
            lp.add_column(ColumnLabel::Mu { c, b }, if sat { w } else { 0.0 });
        }
    }
    for v in 0..inst.n {
        let coeffs = (0..q).map(|a| (layout.x(v, a), 1.0)).collect();
        lp.add_row(RowLabel::XSum { v }, coeffs, Relation::Eq, 1.0);
    }
    for c in 0..inst.num_constraints() {
        for (j, &v) in inst.distinct_vars(c).iter().enumerate() {
            for a in 0..q {
                let mut coeffs: Vec<(usize, f64)> = marginal_entries(inst, c, j, a)
                    .map(|b| (layout.mu(c, b), 1.0))
                    .collect();
                coeffs.push((layout.x(v, a), -1.0));
                lp.add_row(RowLabel::XMarg { c, v, a }, coeffs, Relation::Eq, 0.0);
            }
        }
    }
    lp
}

/// Table indices `β` of constraint `c` with `β_j = a` (j-th distinct variable).
pub fn marginal_entries(inst: &CspInstance, c: usize, j: usize, a: usize) -> impl Iterator<Item = usize> {
    let k = inst.distinct_vars(c).len();
    let q = inst.q;
    let stride = q.pow((k - 1 - j) as u32);
    (0..inst.table_len(c)).filter(move |&b| (b / stride) % q == a)
}

/// `Σ_P w_P Σ_β P(β) μ_{P,β}`.
pub fn lp_value(inst: &CspInstance, sol: &LpSolution) -> f64 {
    (0..inst.num_constraints())
        .map(|c| {
            let w = inst.constraints[c].weight;
            inst.sat_table(c)
                .iter()
                .zip(&sol.mu[c])
                .filter(|(s, _)| **s)
                .map(|(_, m)| w * m)
                .sum::<f64>()
        })
        .sum()
}

/// Smallest `ε` such that `sol` is ε-infeasible for BasicLP.
pub fn infeasibility(inst: &CspInstance, sol: &LpSolution) -> Result<f64> {
    for (v, row) in sol.x.iter().enumerate() {
        if let Some(a) = row.iter().position(|&x| x < 0.0) {
            return Err(Error::NegativeEntry(format!("x[{v}][{a}]")));
        }
    }
    for (c, t) in sol.mu.iter().enumerate() {
        if let Some(b) = t.iter().position(|&m| m < 0.0) {
            return Err(Error::NegativeEntry(format!("mu[{c}][{b}]")));
        }
    }
    let q = inst.q;
    let mut worst = 0.0f64;
    for row in &sol.x {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    let mut vals = Vec::new();
    for c in 0..inst.num_constraints() {
        let d = inst.distinct_vars(c);
        let k = d.len();
        let mut marg = vec![0.0; k * q];
        vals.resize(k, 0);
        for (b, &m) in sol.mu[c].iter().enumerate() {
            decode(b, q, &mut vals);
            for (j, &a) in vals.iter().enumerate() {
                marg[j * q + a] += m;
            }
        }
        for (j, &v) in d.iter().enumerate() {
            for a in 0..q {
                worst = worst.max((marg[j * q + a] - sol.x[v][a]).abs());
            }
        }
    }
    Ok(worst)
}

/// `lp(I)` with an optimal solution from the dense simplex.
pub fn solve_basic_lp(inst: &CspInstance) -> Result<LpSolution> {
    let lp = build_basic_lp(inst);
    let out = solve_lp(&lp)?;
    Ok(BasicLayout::new(inst).split(inst, &out.x))
}
