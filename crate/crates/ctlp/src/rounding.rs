//! Rounding by variable folding, and the satisfiability tester built on it.
//!
//! Marginals from the LP oracle are bucketed to a grid, variables with equal
//! bucket vectors are identified, every assignment of the folded instance is
//! scored with the sampling estimator, and the best one is unfolded.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csp::{decode, Constraint, ConstraintOracle, CspInstance};
use crate::error::{Error, Result};
use crate::estimator::sample_count;
use crate::local::LpOracle;

/// Default cap on the number of folded assignments.
pub const DEFAULT_FOLD_BUDGET: u128 = 1 << 20;

/// Largest `ε̃ ≤ ε` with `1/ε̃` integral.
pub fn integral_epsilon(eps: f64) -> f64 {
    1.0 / (1.0 / eps - 1e-9).ceil()
}

/// Grid index of `x^ε`: 0 for `x ≤ 0`, otherwise `k + 1` with `kε < x ≤ (k+1)ε`.
fn grid(x: f64, eps: f64) -> u32 {
    if x <= 0.0 {
        return 0;
    }
    let r = x / eps;
    let near = r.round();
    // values sitting on a grid point up to rounding stay there
    let m = if (r - near).abs() <= 1e-9 * near.max(1.0) { near } else { r.ceil() };
    m.max(1.0) as u32
}

/// `x^ε`, the upward bucketing of `x` to `εℤ` (and `0 ↦ 0`).
///
/// ```
/// use ctlp::rounding::discretize;
/// assert_eq!(discretize(0.3, 0.25), 0.5);
/// assert_eq!(discretize(1.0, 0.25), 1.0);
/// assert_eq!(discretize(0.0, 0.25), 0.0);
/// ```
pub fn discretize(x: f64, eps: f64) -> f64 {
    grid(x, eps) as f64 * eps
}

/// Fold grid `ε′ = ε²/(q^s·s·t·w·8)`, made integral.
pub fn fold_epsilon(eps: f64, q: usize, s: usize, t: usize, w: f64) -> f64 {
    let kappa = (q as f64).powi(s as i32) * (s * t) as f64 * w * 8.0;
    integral_epsilon(eps * eps / kappa)
}

/// `φ`: variable ↦ bucket id, with the registry of occupied bucket vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldingMap {
    pub eps: f64,
    /// bucket vectors as grid indices; entry `a` stands for `index·ε`
    pub buckets: Vec<Vec<u32>>,
    pub phi: Vec<usize>,
    #[serde(skip)]
    ids: HashMap<Vec<u32>, usize>,
}

impl FoldingMap {
    pub fn new(eps: f64) -> Self {
        FoldingMap {
            eps,
            buckets: Vec::new(),
            phi: Vec::new(),
            ids: HashMap::new(),
        }
    }

    /// Map of a full marginal matrix `x[v][a]`.
    pub fn from_marginals(x: &[Vec<f64>], eps: f64) -> Self {
        let mut fm = Self::new(eps);
        for row in x {
            let id = fm.bucket_id(row);
            fm.phi.push(id);
        }
        fm
    }

    /// Bucket vector of a marginal row.
    pub fn key(&self, row: &[f64]) -> Vec<u32> {
        row.iter().map(|&x| grid(x, self.eps)).collect()
    }

    /// Id of the bucket of `row`, registering it if new.
    pub fn bucket_id(&mut self, row: &[f64]) -> usize {
        let key = self.key(row);
        let next = self.buckets.len();
        *self.ids.entry(key.clone()).or_insert_with(|| {
            self.buckets.push(key);
            next
        })
    }

    /// Id of an already registered bucket.
    pub fn lookup(&self, row: &[f64]) -> Option<usize> {
        self.ids.get(&self.key(row)).copied()
    }

    pub fn bucket_of(&self, v: usize) -> usize {
        self.phi[v]
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// `(x^ε_{v,a})_a` of a bucket.
    pub fn bucket_vector(&self, id: usize) -> Vec<f64> {
        self.buckets[id].iter().map(|&k| k as f64 * self.eps).collect()
    }

    /// `β_v = β′_{φ(v)}`.
    pub fn unfold(&self, beta_prime: &[usize]) -> Vec<usize> {
        self.phi.iter().map(|&b| beta_prime[b]).collect()
    }
}

/// `I/φ` together with the map that produced it.
#[derive(Debug, Clone)]
pub struct FoldedInstance {
    pub instance: CspInstance,
    pub map: FoldingMap,
}

/// Builds `I/φ_x` for the grid `eps`. Scopes may repeat a bucket; the degree
/// bound of the folded instance is its largest degree.
///
/// ```
/// use ctlp::csp::fixtures::triangle;
/// use ctlp::rounding::fold;
/// let x = vec![vec![0.5, 0.5]; 3];
/// let f = fold(&triangle(), &x, 0.25).unwrap();
/// assert_eq!(f.instance.n, 1);
/// assert_eq!(f.instance.constraints[0].scope, vec![0, 0]);
/// ```
pub fn fold(inst: &CspInstance, x: &[Vec<f64>], eps: f64) -> Result<FoldedInstance> {
    if x.len() != inst.n || x.iter().any(|r| r.len() != inst.q) {
        return Err(Error::InvalidParameter("marginal matrix has the wrong shape".into()));
    }
    let map = FoldingMap::from_marginals(x, eps);
    let constraints: Vec<Constraint> = inst
        .constraints
        .iter()
        .map(|c| Constraint {
            predicate: c.predicate,
            scope: c.scope.iter().map(|&v| map.phi[v]).collect(),
            weight: c.weight,
        })
        .collect();
    let nb = map.num_buckets();
    let mut deg = vec![0usize; nb];
    for c in &constraints {
        let mut d = c.scope.clone();
        d.sort_unstable();
        d.dedup();
        for b in d {
            deg[b] += 1;
        }
    }
    let t = deg.into_iter().max().unwrap_or(1).max(1);
    let instance = CspInstance::from_parts(inst.q, inst.s, t, inst.w, nb, inst.predicates.clone(), constraints)?;
    Ok(FoldedInstance { instance, map })
}

/// Incident constraints of one variable as the estimator needs them:
/// predicate, scope and `w_P/|P|` with `|P|` the number of distinct variables.
#[derive(Debug, Clone)]
struct Profile {
    items: Vec<(usize, Vec<usize>, f64)>,
    queries: u64,
}

fn profile(o: &mut ConstraintOracle<'_>, v: usize) -> Profile {
    let t = o.params().2;
    let mut items = Vec::new();
    let mut queries = 0;
    for i in 1..=t {
        queries += 1;
        match o.query(v, i) {
            Some((_, c)) => {
                let mut d = c.scope.clone();
                d.sort_unstable();
                d.dedup();
                items.push((c.predicate, c.scope.clone(), c.weight / d.len() as f64));
            }
            None => break,
        }
    }
    Profile { items, queries }
}

/// `f_v = Σ_{P∋v} w_P·P(β)/|P|` with `β` read through the folding map.
fn f_value(o: &ConstraintOracle<'_>, p: &Profile, fm: &FoldingMap, beta_prime: &[usize]) -> f64 {
    let q = o.params().0;
    p.items
        .iter()
        .filter(|(pred, scope, _)| {
            let idx = scope.iter().fold(0, |acc, &u| acc * q + beta_prime[fm.phi[u]]);
            o.predicate(*pred).truth_table[idx] == 1
        })
        .map(|&(_, _, share)| share)
        .sum()
}

/// Estimates `val(I, unfold(β′))` within `εn/2` with probability `1 − δ`.
///
/// Each sample reads the incident constraints of one variable.
pub fn estimate_assignment_value(
    o: &mut ConstraintOracle<'_>,
    fm: &FoldingMap,
    beta_prime: &[usize],
    eps: f64,
    delta: f64,
    seed: u64,
) -> f64 {
    let n = o.n();
    if n == 0 {
        return 0.0;
    }
    let (_, _, t, w) = o.params();
    let m = sample_count(t as f64 * w, eps / 2.0, delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..m {
        let v = rng.gen_range(0..n);
        let p = profile(o, v);
        total += f_value(o, &p, fm, beta_prime);
    }
    total * n as f64 / m as f64
}

/// Knobs of [`round`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingParams {
    pub eps: f64,
    /// grid of the fold
    pub fold_eps: f64,
    /// cap on `q^{|V′|}`
    pub budget: u128,
}

impl RoundingParams {
    pub fn new(eps: f64, q: usize, s: usize, t: usize, w: f64) -> Self {
        RoundingParams {
            eps,
            fold_eps: fold_epsilon(eps, q, s, t, w),
            budget: DEFAULT_FOLD_BUDGET,
        }
    }

    pub fn for_instance(inst: &CspInstance, eps: f64) -> Self {
        Self::new(eps, inst.q, inst.s, inst.t, inst.w)
    }
}

/// Outcome of one rounding run.
#[derive(Debug, Clone, Serialize)]
pub struct RoundingResult {
    pub params: RoundingParams,
    /// estimated value of the returned assignment
    pub estimate: f64,
    pub map: FoldingMap,
    /// `β′*` over the buckets
    pub beta_prime: Vec<usize>,
    /// estimate of every folded assignment, in enumeration order
    pub estimates: Vec<f64>,
    /// `w_I < εn`: nothing was computed and the estimate is 0
    pub short_circuit: bool,
    /// constraint-oracle queries of the estimation phase, counted per sample
    pub oracle_queries: u64,
    /// constraint-oracle queries spent inside the LP oracle
    pub lp_queries: u64,
}

impl RoundingResult {
    /// `β*_v = β′*_{φ(v)}` from the stored map.
    pub fn answer(&self, v: usize) -> usize {
        if self.short_circuit {
            0
        } else {
            self.beta_prime[self.map.phi[v]]
        }
    }

    /// The unfolded assignment of every variable.
    pub fn assignment(&self) -> Vec<usize> {
        (0..self.map.phi.len())
            .map(|v| self.answer(v))
            .collect()
    }
}

/// `w_I` through the oracle: `Σ_v Σ_{P∋v} w_P/|P|`.
fn total_weight(o: &mut ConstraintOracle<'_>) -> (f64, u64) {
    let mut w = 0.0;
    let mut cost = 0;
    for v in 0..o.n() {
        let p = profile(o, v);
        cost += p.queries;
        w += p.items.iter().map(|it| it.2).sum::<f64>();
    }
    (w, cost)
}

/// Rounds the LP oracle's solution: fold, score every folded assignment,
/// return the best with its estimate.
pub fn round(o: &mut ConstraintOracle<'_>, lp: &mut LpOracle<'_>, params: RoundingParams, seed: u64) -> Result<RoundingResult> {
    let eps = params.eps;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} outside (0, 1)")));
    }
    let n = o.n();
    let q = o.params().0;
    let (w_total, mut oracle_queries) = total_weight(o);
    let lp_before = lp.query_count();
    let mut out = RoundingResult {
        params,
        estimate: 0.0,
        map: FoldingMap::new(params.fold_eps),
        beta_prime: Vec::new(),
        estimates: Vec::new(),
        short_circuit: false,
        oracle_queries: 0,
        lp_queries: 0,
    };
    if w_total < eps * n as f64 {
        out.short_circuit = true;
        out.map.phi = vec![0; n];
        out.oracle_queries = oracle_queries;
        return Ok(out);
    }
    let mut fm = FoldingMap::new(params.fold_eps);
    for v in 0..n {
        let (x, _) = lp.marginal(v);
        let id = fm.bucket_id(&x);
        fm.phi.push(id);
    }
    let nb = fm.num_buckets();
    let mut count: u128 = 1;
    for _ in 0..nb {
        count = count.saturating_mul(q as u128);
        if count > params.budget {
            return Err(Error::FoldTooLarge(count));
        }
    }
    let delta = 1.0 / (3.0 * count as f64);
    let (_, _, t, w) = o.params();
    let m = sample_count(t as f64 * w, eps / 2.0, delta);
    // incident constraints are read once per variable and charged per sample
    let mut profiles: HashMap<usize, Profile> = HashMap::new();
    let mut beta = vec![0usize; nb];
    let mut best = (f64::NEG_INFINITY, 0u128);
    for idx in 0..count {
        decode_wide(idx, q, &mut beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let mut total = 0.0;
        for _ in 0..m {
            let v = rng.gen_range(0..n);
            let p = profiles.entry(v).or_insert_with(|| profile(o, v));
            oracle_queries += p.queries;
            total += f_value(o, p, &fm, &beta);
        }
        let est = total * n as f64 / m as f64;
        out.estimates.push(est);
        if est > best.0 {
            best = (est, idx);
        }
    }
    decode_wide(best.1, q, &mut beta);
    out.estimate = best.0;
    out.beta_prime = beta;
    out.map = fm;
    out.oracle_queries = oracle_queries;
    out.lp_queries = lp.query_count() - lp_before;
    Ok(out)
}

fn decode_wide(mut idx: u128, q: usize, out: &mut [usize]) {
    if out.len() <= 12 {
        decode(idx as usize, q, out);
        return;
    }
    for slot in out.iter_mut().rev() {
        *slot = (idx % q as u128) as usize;
        idx /= q as u128;
    }
}

/// `β*_v`, recomputing `φ(v)` with one marginal query (`q` names) to the LP oracle.
pub fn assignment_query(res: &RoundingResult, lp: &mut LpOracle<'_>, v: usize) -> Result<usize> {
    if res.short_circuit {
        return Ok(0);
    }
    let (x, _) = lp.marginal(v);
    let id = res.map.lookup(&x).ok_or(Error::UnseenVariableQuery)?;
    Ok(res.beta_prime[id])
}

/// CSP families with a known continuity modulus of the gap curve at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Family {
    /// `δ = ε/2`
    Horn,
    /// the gap curve is `1/2` at 1, so there is no usable `δ`
    TwoSat,
    /// caller-supplied `δ`
    Custom(f64),
}

impl Family {
    pub fn delta(&self, eps: f64) -> Result<f64> {
        match *self {
            Family::Horn => Ok(eps / 2.0),
            Family::TwoSat => Err(Error::InvalidParameter(
                "Max 2-SAT has integrality gap 1/2 at 1 and is not testable this way".into(),
            )),
            Family::Custom(d) if d > 0.0 && d < 1.0 => Ok(d),
            Family::Custom(d) => Err(Error::InvalidParameter(format!("delta {d} outside (0, 1)"))),
        }
    }
}

/// Tester verdict with the numbers behind it.
#[derive(Debug, Clone, Serialize)]
pub struct SatVerdict {
    pub accept: bool,
    pub estimate: f64,
    pub threshold: f64,
    /// the rounding precision actually used, `min(ε/2, δ)`
    pub eps_used: f64,
}

/// Accepts iff the rounding estimate at precision `min(ε/2, δ)` exceeds
/// `(1 − ε/2)·w_I − ε·t·w·n/2`.
pub fn test_satisfiability(o: &mut ConstraintOracle<'_>, family: Family, eps: f64, seed: u64) -> Result<SatVerdict> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} outside (0, 1)")));
    }
    let delta = family.delta(eps)?;
    let eps_used = (eps / 2.0).min(delta);
    let inst = o.instance();
    let (q, s, t, w) = o.params();
    let n = o.n();
    let (w_total, _) = total_weight(o);
    let threshold = (1.0 - eps / 2.0) * w_total - eps * t as f64 * w * n as f64 / 2.0;
    if inst.num_constraints() == 0 {
        return Ok(SatVerdict { accept: true, estimate: 0.0, threshold, eps_used });
    }
    let params = RoundingParams::new(eps_used, q, s, t, w);
    let mut lp = LpOracle::new(ConstraintOracle::new(inst), lp_epsilon(&params));
    let res = round(o, &mut lp, params, seed)?;
    Ok(SatVerdict {
        accept: res.estimate > threshold,
        estimate: res.estimate,
        threshold,
        eps_used,
    })
}

/// Precision handed to the LP oracle for a rounding run.
pub fn lp_epsilon(params: &RoundingParams) -> f64 {
    params.fold_eps
}
