//! CSP instances, the bounded-degree constraint oracle and brute-force ground truth.
//!
//! Values are `0..q`. A truth table is indexed lexicographically over `[q]^k`
//! with the first scope position most significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default enumeration budget for the brute-force oracles.
pub const DEFAULT_BUDGET: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
    pub truth_table: Vec<u8>,
}

impl Predicate {
    pub fn new(name: &str, arity: usize, truth_table: Vec<u8>) -> Self {
        Predicate {
            name: name.to_string(),
            arity,
            truth_table,
        }
    }

    /// Builds a predicate from a closure over the scope values.
    pub fn from_fn(name: &str, q: usize, arity: usize, f: impl Fn(&[usize]) -> bool) -> Self {
        let mut table = Vec::with_capacity(q.pow(arity as u32));
        let mut vals = vec![0; arity];
        for idx in 0..q.pow(arity as u32) {
            decode(idx, q, &mut vals);
            table.push(f(&vals) as u8);
        }
        Predicate::new(name, arity, table)
    }

    /// Not-equal on two values.
    pub fn neq(q: usize) -> Self {
        Self::from_fn("NEQ", q, 2, |v| v[0] != v[1])
    }

    /// A boolean clause; `signs[i]` is true for a positive literal.
    pub fn clause(signs: &[bool]) -> Self {
        let name: String = signs
            .iter()
            .map(|&p| if p { '+' } else { '-' })
            .collect();
        let signs = signs.to_vec();
        Self::from_fn(&format!("OR{name}"), 2, signs.len(), move |v| {
            v.iter().zip(&signs).any(|(&x, &p)| (x == 1) == p)
        })
    }

    /// Constantly true predicate of the given arity.
    pub fn always(q: usize, arity: usize) -> Self {
        Self::from_fn("TRUE", q, arity, |_| true)
    }

    pub fn eval(&self, q: usize, values: &[usize]) -> bool {
        self.truth_table[encode(values, q)] == 1
    }
}

/// Index of `values` in the lexicographic order over `[q]^k`.
pub fn encode(values: &[usize], q: usize) -> usize {
    values.iter().fold(0, |acc, &v| acc * q + v)
}

/// Inverse of [`encode`]; writes `out.len()` digits.
pub fn decode(mut idx: usize, q: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % q;
        idx /= q;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub predicate: usize,
    pub scope: Vec<usize>,
    pub weight: f64,
}

/// Serialized form of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub q: usize,
    pub s: usize,
    pub t: usize,
    pub w: f64,
    pub n: usize,
    pub predicates: Vec<Predicate>,
    pub constraints: Vec<ConstraintSpec>,
    /// per-variable constraint order; absent means scope order of appearance
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub predicate: PredicateRef,
    pub scope: Vec<usize>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Predicates are referenced by position or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateRef {
    Index(usize),
    Name(String),
}

/// A validated CSP instance with its degree index.
#[derive(Debug, Clone, PartialEq)]
pub struct CspInstance {
    pub q: usize,
    pub s: usize,
    pub t: usize,
    pub w: f64,
    pub n: usize,
    pub predicates: Vec<Predicate>,
    pub constraints: Vec<Constraint>,
    degree_index: Vec<Vec<usize>>,
    distinct: Vec<Vec<usize>>,
    positions: Vec<Vec<usize>>,
    sat: Vec<Vec<bool>>,
}

impl CspInstance {
    pub fn build(spec: InstanceSpec) -> Result<Self> {
        let InstanceSpec {
            q,
            s,
            t,
            w,
            n,
            predicates,
            constraints,
            index,
        } = spec;
        if q < 2 || s == 0 || t == 0 || !(w >= 1.0) || !w.is_finite() {
            return Err(Error::InvalidInstance(
                "need q >= 2, s >= 1, t >= 1, w >= 1".into(),
            ));
        }
        for p in &predicates {
            if p.arity == 0 || p.arity > s {
                return Err(Error::ArityExceeded(p.name.clone()));
            }
            if p.truth_table.len() != q.pow(p.arity as u32) {
                return Err(Error::BadTruthTableLength(p.name.clone()));
            }
            if p.truth_table.iter().any(|&b| b > 1) {
                return Err(Error::InvalidInstance(format!(
                    "predicate {} has a non-boolean entry",
                    p.name
                )));
            }
        }
        let mut built = Vec::with_capacity(constraints.len());
        for (id, c) in constraints.into_iter().enumerate() {
            let pid = match &c.predicate {
                PredicateRef::Index(i) => *i,
                PredicateRef::Name(name) => predicates
                    .iter()
                    .position(|p| &p.name == name)
                    .ok_or_else(|| Error::InvalidInstance(format!("unknown predicate {name}")))?,
            };
            let pred = predicates
                .get(pid)
                .ok_or_else(|| Error::InvalidInstance(format!("unknown predicate {pid}")))?;
            if c.scope.len() != pred.arity {
                return Err(Error::InvalidInstance(format!(
                    "constraint {id} has scope length {} for arity {}",
                    c.scope.len(),
                    pred.arity
                )));
            }
            if c.scope.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInstance(format!(
                    "constraint {id} names a variable >= n"
                )));
            }
            if !(c.weight >= 1.0 && c.weight <= w) {
                return Err(Error::WeightOutOfRange(id));
            }
            built.push(Constraint {
                predicate: pid,
                scope: c.scope,
                weight: c.weight,
            });
        }
        let inst = Self::from_parts(q, s, t, w, n, predicates, built)?;
        match index {
            Some(index) => inst.with_index(index),
            None => Ok(inst),
        }
    }

    /// Validates already-resolved parts.
    pub fn from_parts(
        q: usize,
        s: usize,
        t: usize,
        w: f64,
        n: usize,
        predicates: Vec<Predicate>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let mut degree_index = vec![Vec::new(); n];
        let mut distinct = Vec::with_capacity(constraints.len());
        let mut positions = Vec::with_capacity(constraints.len());
        let mut sat = Vec::with_capacity(constraints.len());
        for (id, c) in constraints.iter().enumerate() {
            if !(c.weight >= 1.0 && c.weight <= w) {
                return Err(Error::WeightOutOfRange(id));
            }
            let pred = predicates
                .get(c.predicate)
                .ok_or_else(|| Error::InvalidInstance(format!("unknown predicate {}", c.predicate)))?;
            if pred.arity > s {
                return Err(Error::ArityExceeded(pred.name.clone()));
            }
            let mut d: Vec<usize> = Vec::new();
            let mut pos = Vec::with_capacity(c.scope.len());
            for &v in &c.scope {
                if v >= n {
                    return Err(Error::InvalidInstance(format!("constraint {id} names a variable >= n")));
                }
                match d.iter().position(|&u| u == v) {
                    Some(j) => pos.push(j),
                    None => {
                        pos.push(d.len());
                        d.push(v);
                    }
                }
            }
            for &v in &d {
                degree_index[v].push(id);
            }
            let k = d.len();
            let mut table = Vec::with_capacity(q.pow(k as u32));
            let mut local = vec![0; k];
            let mut vals = vec![0; c.scope.len()];
            for b in 0..q.pow(k as u32) {
                decode(b, q, &mut local);
                for (slot, &j) in vals.iter_mut().zip(&pos) {
                    *slot = local[j];
                }
                table.push(pred.eval(q, &vals));
            }
            distinct.push(d);
            positions.push(pos);
            sat.push(table);
        }
        for (v, list) in degree_index.iter().enumerate() {
            if list.len() > t {
                return Err(Error::DegreeExceeded(v));
            }
        }
        Ok(CspInstance {
            q,
            s,
            t,
            w,
            n,
            predicates,
            constraints,
            degree_index,
            distinct,
            positions,
            sat,
        })
    }

    pub fn to_spec(&self) -> InstanceSpec {
        InstanceSpec {
            q: self.q,
            s: self.s,
            t: self.t,
            w: self.w,
            n: self.n,
            predicates: self.predicates.clone(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintSpec {
                    predicate: PredicateRef::Index(c.predicate),
                    scope: c.scope.clone(),
                    weight: c.weight,
                })
                .collect(),
            index: self
                .degree_index
                .iter()
                .any(|l| l.windows(2).any(|p| p[0] > p[1]))
                .then(|| self.degree_index.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::build(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("instance serializes")
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Incident constraint ids of `v` in slot order.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.degree_index[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree_index[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.degree_index.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Distinct variables of constraint `c` in order of first appearance.
    pub fn distinct_vars(&self, c: usize) -> &[usize] {
        &self.distinct[c]
    }

    /// For each scope position, the index of its variable among the distinct ones.
    pub fn scope_positions(&self, c: usize) -> &[usize] {
        &self.positions[c]
    }

    /// `P(β)` for every assignment `β` of the distinct variables of `c`.
    pub fn sat_table(&self, c: usize) -> &[bool] {
        &self.sat[c]
    }

    /// Number of entries of the local distribution of `c`.
    pub fn table_len(&self, c: usize) -> usize {
        self.sat[c].len()
    }

    pub fn total_weight(&self) -> f64 {
        self.constraints.iter().map(|c| c.weight).sum()
    }

    pub fn satisfied(&self, c: usize, beta: &[usize]) -> bool {
        let con = &self.constraints[c];
        let idx = con.scope.iter().fold(0, |acc, &v| acc * self.q + beta[v]);
        self.predicates[con.predicate].truth_table[idx] == 1
    }

    /// Instance of the same family with the largest degree used as `t`.
    pub fn with_tight_degree(mut self) -> Self {
        self.t = self.max_degree().max(1);
        self
    }

    /// Replaces the slot order the oracle uses. Each list must be a
    /// permutation of the variable's incident constraints.
    pub fn with_index(mut self, index: Vec<Vec<usize>>) -> Result<Self> {
        if index.len() != self.n {
            return Err(Error::InvalidInstance("index map has the wrong length".into()));
        }
        for (v, list) in index.iter().enumerate() {
            let mut a = list.clone();
            let mut b = self.degree_index[v].clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(Error::InvalidInstance(format!("index map of variable {v} is not a permutation")));
            }
        }
        self.degree_index = index;
        Ok(self)
    }
}

/// Weighted number of satisfied constraints.
pub fn evaluate(inst: &CspInstance, beta: &[usize]) -> f64 {
    (0..inst.num_constraints())
        .filter(|&c| inst.satisfied(c, beta))
        .map(|c| inst.constraints[c].weight)
        .fold(0.0, |a, b| a + b)
}

/// Query access to an instance in the bounded-degree model.
#[derive(Debug, Clone)]
pub struct ConstraintOracle<'a> {
    inst: &'a CspInstance,
    queries: u64,
}

impl<'a> ConstraintOracle<'a> {
    pub fn new(inst: &'a CspInstance) -> Self {
        ConstraintOracle { inst, queries: 0 }
    }

    /// The `i`-th constraint (1-based) where `v` appears.
    pub fn query(&mut self, v: usize, i: usize) -> Option<(usize, &'a Constraint)> {
        assert!(v < self.inst.n, "variable {v} out of range");
        assert!(i >= 1 && i <= self.inst.t, "index {i} out of range");
        self.queries += 1;
        let id = *self.inst.degree_index[v].get(i - 1)?;
        Some((id, &self.inst.constraints[id]))
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    /// The public parameters `(q, s, t, w)` and `n` are known up front.
    pub fn params(&self) -> (usize, usize, usize, f64) {
        (self.inst.q, self.inst.s, self.inst.t, self.inst.w)
    }

    pub fn n(&self) -> usize {
        self.inst.n
    }

    /// The predicate table set is part of the CSP family, known up front.
    pub fn predicate(&self, id: usize) -> &'a Predicate {
        &self.inst.predicates[id]
    }

    /// Constraint data by id. Ids are only learned through [`query`](Self::query),
    /// so this resolves a name the caller already holds.
    pub fn resolve(&self, c: usize) -> &'a Constraint {
        &self.inst.constraints[c]
    }

    pub fn distinct_vars(&self, c: usize) -> &'a [usize] {
        self.inst.distinct_vars(c)
    }

    pub fn sat_table(&self, c: usize) -> &'a [bool] {
        self.inst.sat_table(c)
    }

    pub fn instance(&self) -> &'a CspInstance {
        self.inst
    }
}

fn check_budget(inst: &CspInstance, budget: u128) -> Result<u128> {
    let mut total: u128 = 1;
    for _ in 0..inst.n {
        total = total.saturating_mul(inst.q as u128);
        if total > budget {
            return Err(Error::BudgetExceeded(total));
        }
    }
    Ok(total)
}

/// Maximizes `Σ_c score(c)·[c satisfied]` by enumeration; returns the
/// lexicographically first maximizer.
fn enumerate_max(inst: &CspInstance, score: &[f64], budget: u128) -> Result<(f64, Vec<usize>)> {
    let total = check_budget(inst, budget)?;
    let n = inst.n;
    let q = inst.q;
    let m = inst.num_constraints();
    let mut beta = vec![0usize; n];
    let mut contrib: Vec<f64> = (0..m)
        .map(|c| if inst.satisfied(c, &beta) { score[c] } else { 0.0 })
        .collect();
    let mut cur: f64 = contrib.iter().sum();
    let mut best = cur;
    let mut best_beta = beta.clone();
    let mut stamp = vec![0u64; m];
    let mut step: u64 = 0;
    for _ in 1..total {
        step += 1;
        // odometer: the last variable moves fastest
        let mut j = n;
        loop {
            j -= 1;
            beta[j] += 1;
            if beta[j] < q {
                break;
            }
            beta[j] = 0;
        }
        for v in j..n {
            for &c in inst.incident(v) {
                if stamp[c] == step {
                    continue;
                }
                stamp[c] = step;
                let new = if inst.satisfied(c, &beta) { score[c] } else { 0.0 };
                cur += new - contrib[c];
                contrib[c] = new;
            }
        }
        if cur > best + 1e-9 {
            best = cur;
            best_beta.copy_from_slice(&beta);
        }
    }
    // re-sum to remove drift from the incremental updates
    let exact: f64 = (0..m)
        .filter(|&c| inst.satisfied(c, &best_beta))
        .map(|c| score[c])
        .sum();
    Ok((exact, best_beta))
}

/// `opt(I)` and its lexicographically first argmax.
pub fn brute_force_opt(inst: &CspInstance) -> Result<(f64, Vec<usize>)> {
    brute_force_opt_with_budget(inst, DEFAULT_BUDGET)
}

pub fn brute_force_opt_with_budget(inst: &CspInstance, budget: u128) -> Result<(f64, Vec<usize>)> {
    let weights: Vec<f64> = inst.constraints.iter().map(|c| c.weight).collect();
    enumerate_max(inst, &weights, budget)
}

/// Minimum number of constraints whose removal leaves a satisfiable instance.
pub fn distance_to_satisfiability(inst: &CspInstance) -> Result<usize> {
    distance_to_satisfiability_with_budget(inst, DEFAULT_BUDGET)
}

pub fn distance_to_satisfiability_with_budget(inst: &CspInstance, budget: u128) -> Result<usize> {
    let ones = vec![1.0; inst.num_constraints()];
    let (best, _) = enumerate_max(inst, &ones, budget)?;
    Ok(inst.num_constraints() - best.round() as usize)
}

/// Small named instances used throughout tests and docs.
pub mod fixtures {
    use super::*;

    fn edges(q: usize, n: usize, t: usize, pairs: &[(usize, usize)]) -> CspInstance {
        CspInstance::from_parts(
            q,
            2,
            t,
            1.0,
            n,
            vec![Predicate::neq(q)],
            pairs
                .iter()
                .map(|&(a, b)| Constraint {
                    predicate: 0,
                    scope: vec![a, b],
                    weight: 1.0,
                })
                .collect(),
        )
        .expect("fixture is valid")
    }

    /// Max Cut on a triangle.
    pub fn triangle() -> CspInstance {
        edges(2, 3, 2, &[(0, 1), (1, 2), (2, 0)])
    }

    /// One NEQ constraint on five variables.
    pub fn single() -> CspInstance {
        edges(2, 5, 2, &[(0, 1)])
    }

    /// Max Cut on a simple graph.
    pub fn max_cut(n: usize, t: usize, pairs: &[(usize, usize)]) -> CspInstance {
        edges(2, n, t, pairs)
    }

    /// The satisfiable Horn instance `(¬x ∨ y)(¬y ∨ z)`.
    pub fn horn_chain() -> CspInstance {
        CspInstance::from_parts(
            2,
            2,
            2,
            1.0,
            3,
            vec![Predicate::clause(&[false, true])],
            vec![
                Constraint { predicate: 0, scope: vec![0, 1], weight: 1.0 },
                Constraint { predicate: 0, scope: vec![1, 2], weight: 1.0 },
            ],
        )
        .expect("fixture is valid")
    }

    /// Instance without constraints.
    pub fn empty(q: usize, n: usize) -> CspInstance {
        CspInstance::from_parts(q, 2, 1, 1.0, n, vec![Predicate::neq(q)], vec![])
            .expect("fixture is valid")
    }
}
