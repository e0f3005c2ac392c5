//! Seeded random instance families for experiments and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{Constraint, CspInstance, Predicate};

/// Ranges for a random corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusLimits {
    pub q_max: usize,
    pub s_max: usize,
    pub t_max: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub w_max: f64,
    /// cap on `q^n` so brute force stays cheap; `None` disables it
    pub enum_cap: Option<u64>,
    /// cap on `q^s`
    pub table_cap: usize,
}

impl CorpusLimits {
    /// Small instances for brute-force ground truth.
    pub fn brute_force() -> Self {
        CorpusLimits {
            q_max: 3,
            s_max: 3,
            t_max: 5,
            n_min: 2,
            n_max: 14,
            w_max: 2.0,
            enum_cap: Some(1 << 16),
            table_cap: 27,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random predicate of the given arity that is neither constant true nor false.
pub fn random_predicate(rng: &mut impl Rng, q: usize, arity: usize, name: &str) -> Predicate {
    let len = q.pow(arity as u32);
    loop {
        let p: f64 = rng.gen_range(0.2..0.8);
        let table: Vec<u8> = (0..len).map(|_| rng.gen_bool(p) as u8).collect();
        let ones = table.iter().filter(|&&b| b == 1).count();
        if len == 1 || (ones > 0 && ones < len) {
            return Predicate::new(name, arity, table);
        }
    }
}

/// Random instance with the given shape; degrees never exceed `t`.
pub fn random_instance(rng: &mut impl Rng, q: usize, s: usize, t: usize, n: usize, w: f64) -> CspInstance {
    let mut predicates = Vec::new();
    for arity in 1..=s {
        for j in 0..2 {
            predicates.push(random_predicate(rng, q, arity, &format!("P{arity}_{j}")));
        }
    }
    let mut deg = vec![0usize; n];
    let mut constraints = Vec::new();
    // aim for roughly t·n/2 incidences in total
    let target = (t * n).div_ceil(2).max(1);
    let mut incidences = 0;
    let mut attempts = 0;
    while incidences < target && attempts < 20 * target {
        attempts += 1;
        let arity = rng.gen_range(1..=s.min(n));
        let pid = 2 * (arity - 1) + rng.gen_range(0..2);
        let mut scope = Vec::with_capacity(arity);
        let free: Vec<usize> = (0..n).filter(|&v| deg[v] < t).collect();
        if free.len() < arity {
            continue;
        }
        let chosen: Vec<usize> = free.choose_multiple(rng, arity).copied().collect();
        scope.extend(chosen);
        for &v in &scope {
            deg[v] += 1;
        }
        incidences += arity;
        let weight = if w > 1.0 { rng.gen_range(1.0..=w) } else { 1.0 };
        constraints.push(Constraint {
            predicate: pid,
            scope,
            weight,
        });
    }
    CspInstance::from_parts(q, s, t, w, n, predicates, constraints).expect("generator respects limits")
}

/// A corpus of random instances within `limits`.
pub fn random_corpus(seed: u64, count: usize, limits: CorpusLimits) -> Vec<CspInstance> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let q = rng.gen_range(2..=limits.q_max);
        let mut s = rng.gen_range(1..=limits.s_max);
        while q.pow(s as u32) > limits.table_cap {
            s -= 1;
        }
        let t = rng.gen_range(1..=limits.t_max);
        let mut n_max = limits.n_max;
        if let Some(cap) = limits.enum_cap {
            while n_max > limits.n_min && (q as u64).pow(n_max as u32) > cap {
                n_max -= 1;
            }
        }
        let n = rng.gen_range(limits.n_min..=n_max.max(limits.n_min));
        let w = if rng.gen_bool(0.5) { 1.0 } else { limits.w_max };
        out.push(random_instance(&mut rng, q, s, t, n, w));
    }
    out
}

/// Horn clauses satisfied by a planted assignment; `lp = opt = w_I`.
pub fn planted_horn(rng: &mut impl Rng, n: usize, t: usize, s: usize) -> CspInstance {
    let alpha: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let mut predicates: Vec<Predicate> = Vec::new();
    let mut constraints = Vec::new();
    let mut deg = vec![0usize; n];
    let target = (t * n).div_ceil(2).max(1);
    let mut incidences = 0;
    let mut attempts = 0;
    while incidences < target && attempts < 50 * target {
        attempts += 1;
        let arity = rng.gen_range(1..=s.min(n));
        let free: Vec<usize> = (0..n).filter(|&v| deg[v] < t).collect();
        if free.len() < arity {
            continue;
        }
        let scope: Vec<usize> = free.choose_multiple(rng, arity).copied().collect();
        // at most one positive literal
        let pos = if rng.gen_bool(0.7) { Some(rng.gen_range(0..arity)) } else { None };
        let signs: Vec<bool> = (0..arity).map(|i| Some(i) == pos).collect();
        let sat = scope.iter().zip(&signs).any(|(&v, &p)| (alpha[v] == 1) == p);
        if !sat {
            continue;
        }
        let pred = Predicate::clause(&signs);
        let pid = match predicates.iter().position(|p| p.name == pred.name) {
            Some(i) => i,
            None => {
                predicates.push(pred);
                predicates.len() - 1
            }
        };
        for &v in &scope {
            deg[v] += 1;
        }
        incidences += arity;
        constraints.push(Constraint {
            predicate: pid,
            scope,
            weight: 1.0,
        });
    }
    if predicates.is_empty() {
        predicates.push(Predicate::clause(&[true]));
    }
    CspInstance::from_parts(2, s, t, 1.0, n, predicates, constraints).expect("generator respects limits")
}

/// Every variable carries both unit clauses `x` and `¬x`, plus a random Horn
/// clause per pair; at least `n` constraints must be removed.
pub fn contradictory_units(rng: &mut impl Rng, n: usize) -> CspInstance {
    let predicates = vec![
        Predicate::clause(&[true]),
        Predicate::clause(&[false]),
        Predicate::clause(&[false, true]),
    ];
    let mut constraints = Vec::new();
    for v in 0..n {
        constraints.push(Constraint { predicate: 0, scope: vec![v], weight: 1.0 });
        constraints.push(Constraint { predicate: 1, scope: vec![v], weight: 1.0 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for pair in order.chunks(2) {
        if let [a, b] = *pair {
            constraints.push(Constraint { predicate: 2, scope: vec![a, b], weight: 1.0 });
        }
    }
    CspInstance::from_parts(2, 2, 3, 1.0, n, predicates, constraints).expect("generator respects limits")
}
