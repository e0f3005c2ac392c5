//! Gap instances blown up from a seed instance: the "opt" family built from
//! random matchings, the "lp" family that plants the LP optimum, switching,
//! the lazy processes that answer oracle queries while drawing such an
//! instance, and the experiments run on them.
//!
//! Variable `(v, j)` of the blow-up has original id `v·N + j`; the stored
//! instance is over random labels.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csp::{brute_force_opt, decode, evaluate, Constraint, CspInstance, Predicate};
use crate::error::{Error, Result};
use crate::lp::{infeasibility, solve_basic_lp, LpSolution};

/// Largest-remainder apportionment of `n` items to a distribution; ties go
/// to the lower index.
///
/// ```
/// use ctlp::gap::apportion;
/// assert_eq!(apportion(&[0.4, 0.2, 0.4, 0.0], 5), vec![2, 1, 2, 0]);
/// assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
/// ```
pub fn apportion(dist: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = dist.iter().map(|&p| p.max(0.0) * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let left = n.saturating_sub(assigned);
    // remainders on a fixed grid so near-ties compare equal
    let key = |i: usize| ((exact[i] - counts[i] as f64).max(0.0) * 1e9).round() as i64;
    let mut order: Vec<(i64, usize)> = (0..dist.len()).map(|i| (-key(i), i)).collect();
    order.sort_unstable();
    for &(_, i) in order.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

/// A one-constraint seed whose LP optimum has class sizes `(0.4, 0.2, 0.4, 0)`:
/// NAND on two variables with marginals `(0.6, 0.4)` and `(0.8, 0.2)`.
pub fn nand_seed() -> (CspInstance, LpSolution) {
    let pred = Predicate::from_fn("nand", 2, 2, |v| !(v[0] == 1 && v[1] == 1));
    let inst = CspInstance::from_parts(
        2,
        2,
        1,
        1.0,
        2,
        vec![pred],
        vec![Constraint {
            predicate: 0,
            scope: vec![0, 1],
            weight: 1.0,
        }],
    )
    .expect("seed is valid");
    let sol = LpSolution {
        x: vec![vec![0.6, 0.4], vec![0.8, 0.2]],
        mu: vec![vec![0.4, 0.2, 0.4, 0.0]],
        value: 1.0,
    };
    (inst, sol)
}

/// Which family an instance was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GapMode {
    Opt,
    Lp,
}

/// Seed instance, its LP optimum, blow-up `N` and multiplicity `T`.
#[derive(Debug, Clone)]
pub struct GapParams {
    pub instance: CspInstance,
    pub solution: LpSolution,
    pub copies: usize,
    pub mult: usize,
    pub seed: u64,
}

impl GapParams {
    /// Solves the seed LP exactly.
    pub fn new(instance: CspInstance, copies: usize, mult: usize, seed: u64) -> Result<Self> {
        let solution = solve_basic_lp(&instance)?;
        Self::with_solution(instance, solution, copies, mult, seed)
    }

    pub fn with_solution(instance: CspInstance, solution: LpSolution, copies: usize, mult: usize, seed: u64) -> Result<Self> {
        if copies == 0 || mult == 0 {
            return Err(Error::InvalidParameter("N and T must be at least 1".into()));
        }
        if solution.x.len() != instance.n || solution.mu.len() != instance.num_constraints() {
            return Err(Error::InfeasibleSeedSolution("solution shape does not match the instance".into()));
        }
        Ok(GapParams {
            instance,
            solution,
            copies,
            mult,
            seed,
        })
    }

    /// Class sizes `μ*_{P,β}·N` of every constraint.
    pub fn class_sizes(&self) -> Vec<Vec<usize>> {
        self.solution.mu.iter().map(|m| apportion(m, self.copies)).collect()
    }

    /// Value counts `x*_{v,a}·N` of every variable.
    pub fn value_counts(&self) -> Vec<Vec<usize>> {
        self.solution.x.iter().map(|x| apportion(x, self.copies)).collect()
    }

    /// Smallest nonzero `μ*_{P,β}`.
    pub fn min_mu(&self) -> f64 {
        self.solution
            .mu
            .iter()
            .flatten()
            .copied()
            .filter(|&m| m > 1e-12)
            .fold(f64::INFINITY, f64::min)
    }

    fn check_feasible(&self) -> Result<()> {
        let inf = infeasibility(&self.instance, &self.solution).map_err(|e| Error::InfeasibleSeedSolution(e.to_string()))?;
        if inf > 1e-7 {
            return Err(Error::InfeasibleSeedSolution(format!("infeasibility {inf:.3e}")));
        }
        Ok(())
    }

    /// The lazy process needs class sizes whose per-value sums reproduce the
    /// value counts of every variable; apportionment can break this.
    fn check_consistent(&self) -> Result<()> {
        let inst = &self.instance;
        let (sizes, counts) = (self.class_sizes(), self.value_counts());
        for c in 0..inst.num_constraints() {
            let d = inst.distinct_vars(c);
            let mut digits = vec![0; d.len()];
            let mut sums = vec![vec![0; inst.q]; d.len()];
            for (b, &m) in sizes[c].iter().enumerate() {
                decode(b, inst.q, &mut digits);
                for (part, &a) in digits.iter().enumerate() {
                    sums[part][a] += m;
                }
            }
            for (part, &v) in d.iter().enumerate() {
                if sums[part] != counts[v] {
                    return Err(Error::InvalidParameter(format!(
                        "apportioned classes of constraint {c} disagree with the value counts of variable {v}; pick N with μ*·N integral"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A drawn instance over `V × [N]` with its bookkeeping.
#[derive(Debug, Clone)]
pub struct GapInstance {
    /// over labels, with the block index map installed
    pub instance: CspInstance,
    pub mode: GapMode,
    /// natural assignment by label (lp family only)
    pub alpha: Option<Vec<usize>>,
    /// `labels[v·N + j]` is the label of `(v, j)`
    pub labels: Vec<usize>,
    /// seed constraint each constraint was copied from
    pub source: Vec<usize>,
    pub copies: usize,
    pub mult: usize,
}

impl GapInstance {
    /// The same instance with labels mapped back to `v·N + j`.
    pub fn unpermuted(&self) -> Result<CspInstance> {
        let mut inverse = vec![0; self.labels.len()];
        for (o, &l) in self.labels.iter().enumerate() {
            inverse[l] = o;
        }
        let inst = &self.instance;
        let constraints: Vec<Constraint> = inst
            .constraints
            .iter()
            .map(|c| Constraint {
                predicate: c.predicate,
                scope: c.scope.iter().map(|&l| inverse[l]).collect(),
                weight: c.weight,
            })
            .collect();
        let index: Vec<Vec<usize>> = (0..inst.n).map(|o| inst.incident(self.labels[o]).to_vec()).collect();
        CspInstance::from_parts(inst.q, inst.s, inst.t, inst.w, inst.n, inst.predicates.clone(), constraints)?.with_index(index)
    }

    /// `opt(J)/w_J` by enumeration.
    pub fn olopt(&self) -> Result<f64> {
        Ok(brute_force_opt(&self.instance)?.0 / self.instance.total_weight())
    }
}

/// Distinct position of `c` among the incident constraints of `v`.
fn slot_of(inst: &CspInstance, v: usize, c: usize) -> usize {
    inst.incident(v).iter().position(|&x| x == c).expect("constraint is incident")
}

fn assemble(
    params: &GapParams,
    mode: GapMode,
    rng: &mut ChaCha8Rng,
    constraints: Vec<Constraint>,
    source: Vec<usize>,
    incid: Vec<Vec<Vec<usize>>>,
    values: Option<Vec<usize>>,
) -> Result<GapInstance> {
    let inst = &params.instance;
    let total = inst.n * params.copies;
    let mut labels: Vec<usize> = (0..total).collect();
    labels.shuffle(rng);
    let constraints: Vec<Constraint> = constraints
        .into_iter()
        .map(|c| Constraint {
            scope: c.scope.iter().map(|&o| labels[o]).collect(),
            ..c
        })
        .collect();
    let mut index = vec![Vec::new(); total];
    for (o, blocks) in incid.into_iter().enumerate() {
        let mut list = Vec::new();
        for mut block in blocks {
            block.shuffle(rng);
            list.extend(block);
        }
        index[labels[o]] = list;
    }
    let alpha = values.map(|vals| {
        let mut a = vec![0; total];
        for (o, &val) in vals.iter().enumerate() {
            a[labels[o]] = val;
        }
        a
    });
    let t = (inst.t * params.mult).max(1);
    let instance = CspInstance::from_parts(inst.q, inst.s, t, inst.w, total, inst.predicates.clone(), constraints)?.with_index(index)?;
    Ok(GapInstance {
        instance,
        mode,
        alpha,
        labels,
        source,
        copies: params.copies,
        mult: params.mult,
    })
}

/// Part layouts of one seed constraint: for every distinct position, the
/// local positions of each class, plus the map from local position to `j`.
struct Layout {
    /// `members[class][part]` local positions
    members: Vec<Vec<Vec<usize>>>,
    /// `maps[part][local] = j`
    maps: Vec<Vec<usize>>,
}

fn opt_layout(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Layout {
    let maps = (0..k)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    Layout {
        members: vec![vec![(0..n).collect(); k]],
        maps,
    }
}

/// Local positions are laid out class by class; each position then goes to
/// a random copy `j` holding the same value in the natural assignment.
fn lp_layout(
    q: usize,
    vars: &[usize],
    sizes: &[usize],
    value_of: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Layout {
    let k = vars.len();
    let mut digits = vec![0; k];
    let mut members = vec![vec![Vec::new(); k]; sizes.len()];
    let mut local_value: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (b, &size) in sizes.iter().enumerate() {
        decode(b, q, &mut digits);
        for part in 0..k {
            for _ in 0..size {
                members[b][part].push(local_value[part].len());
                local_value[part].push(digits[part]);
            }
        }
    }
    let maps = (0..k)
        .map(|part| {
            let vals = &value_of[vars[part]];
            let n = vals.len();
            let mut map = vec![usize::MAX; n];
            let mut loose_pos = Vec::new();
            let mut loose_j = Vec::new();
            for a in 0..q {
                let mut pos: Vec<usize> = (0..n).filter(|&p| local_value[part][p] == a).collect();
                let mut js: Vec<usize> = (0..n).filter(|&j| vals[j] == a).collect();
                js.shuffle(rng);
                let m = pos.len().min(js.len());
                for (&p, &j) in pos[..m].iter().zip(&js[..m]) {
                    map[p] = j;
                }
                loose_pos.extend(pos.drain(m..));
                loose_j.extend_from_slice(&js[m..]);
            }
            // apportionment mismatch: leftovers are paired at random
            loose_j.shuffle(rng);
            for (p, j) in loose_pos.into_iter().zip(loose_j) {
                map[p] = j;
            }
            map
        })
        .collect();
    Layout { members, maps }
}

fn generate(params: &GapParams, mode: GapMode) -> Result<GapInstance> {
    let inst = &params.instance;
    let (n_big, t_mult) = (params.copies, params.mult);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sizes = params.class_sizes();
    let counts = params.value_counts();
    // natural assignment of copy j of v: the j-th slot of v's apportioned layout
    let value_of: Vec<Vec<usize>> = counts
        .iter()
        .map(|c| c.iter().enumerate().flat_map(|(a, &m)| std::iter::repeat(a).take(m)).collect())
        .collect();
    let mut incid: Vec<Vec<Vec<usize>>> = (0..inst.n * n_big)
        .map(|o| vec![Vec::new(); inst.degree(o / n_big)])
        .collect();
    let mut constraints = Vec::new();
    let mut source = Vec::new();
    for c in 0..inst.num_constraints() {
        let d = inst.distinct_vars(c);
        let pos = inst.scope_positions(c);
        let k = d.len();
        let slots: Vec<usize> = d.iter().map(|&v| slot_of(inst, v, c)).collect();
        let layout = match mode {
            GapMode::Opt => opt_layout(k, n_big, &mut rng),
            GapMode::Lp => lp_layout(inst.q, d, &sizes[c], &value_of, &mut rng),
        };
        for class in &layout.members {
            // split every member into T copies, then match part-wise at random
            let copies: Vec<Vec<usize>> = class
                .iter()
                .map(|m| {
                    let mut v: Vec<usize> = m.iter().flat_map(|&p| std::iter::repeat(p).take(t_mult)).collect();
                    v.shuffle(&mut rng);
                    v
                })
                .collect();
            for m in 0..copies[0].len() {
                let ids: Vec<usize> = (0..k).map(|part| d[part] * n_big + layout.maps[part][copies[part][m]]).collect();
                let id = constraints.len();
                for part in 0..k {
                    incid[ids[part]][slots[part]].push(id);
                }
                constraints.push(Constraint {
                    predicate: inst.constraints[c].predicate,
                    scope: pos.iter().map(|&j| ids[j]).collect(),
                    weight: inst.constraints[c].weight,
                });
                source.push(c);
            }
        }
    }
    let values = match mode {
        GapMode::Opt => None,
        GapMode::Lp => Some(value_of.into_iter().flatten().collect()),
    };
    assemble(params, mode, &mut rng, constraints, source, incid, values)
}

/// Draws from the "opt" family: random `k`-partite matchings per seed
/// constraint, merged per variable by random matchings.
pub fn gen_opt_instance(params: &GapParams) -> Result<GapInstance> {
    generate(params, GapMode::Opt)
}

/// Draws from the "lp" family, planting the seed LP optimum as the natural
/// assignment.
pub fn gen_lp_instance(params: &GapParams) -> Result<GapInstance> {
    params.check_feasible()?;
    generate(params, GapMode::Lp)
}

/// Exchanges the variables of two copies of the same seed constraint at every
/// distinct position where `pairing` is true. Degrees and the predicate
/// multiset are unchanged; the index map follows the variables.
pub fn switch(j: &GapInstance, c1: usize, c2: usize, pairing: &[bool]) -> Result<GapInstance> {
    let inst = &j.instance;
    let (a, b) = (&inst.constraints[c1], &inst.constraints[c2]);
    if c1 == c2 || a.predicate != b.predicate || a.scope.len() != b.scope.len() {
        return Err(Error::ArityMismatch);
    }
    if j.source[c1] != j.source[c2] {
        return Err(Error::InvalidParameter("constraints come from different seed constraints".into()));
    }
    let d1 = inst.distinct_vars(c1).to_vec();
    let d2 = inst.distinct_vars(c2).to_vec();
    if pairing.len() != d1.len() || d1.len() != d2.len() {
        return Err(Error::ArityMismatch);
    }
    let mut n1 = d1.clone();
    let mut n2 = d2.clone();
    let mut index: Vec<Vec<usize>> = (0..inst.n).map(|v| inst.incident(v).to_vec()).collect();
    for (i, &swap) in pairing.iter().enumerate() {
        if !swap || d1[i] == d2[i] {
            continue;
        }
        n1[i] = d2[i];
        n2[i] = d1[i];
        for x in index[d1[i]].iter_mut().filter(|x| **x == c1) {
            *x = c2;
        }
        for x in index[d2[i]].iter_mut().filter(|x| **x == c2) {
            *x = c1;
        }
    }
    let mut constraints = inst.constraints.clone();
    constraints[c1].scope = inst.scope_positions(c1).iter().map(|&p| n1[p]).collect();
    constraints[c2].scope = inst.scope_positions(c2).iter().map(|&p| n2[p]).collect();
    let instance = CspInstance::from_parts(inst.q, inst.s, inst.t, inst.w, inst.n, inst.predicates.clone(), constraints)?.with_index(index)?;
    Ok(GapInstance { instance, ..j.clone() })
}

/// A query to a lazy process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProcessQuery {
    /// a uniformly random unseen variable
    RandomVariable,
    /// the `p`-th (1-based) constraint of a seen variable
    Constraint { v: usize, p: usize },
}

/// A constraint handed out by a process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnsweredConstraint {
    pub predicate: usize,
    pub weight: f64,
    /// labels per scope position
    pub scope: Vec<usize>,
    /// `(label, index)` under which each distinct variable sees it
    pub indices: Vec<(usize, usize)>,
    /// the answer reused a variable already in the transcript
    pub collision: bool,
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProcessAnswer {
    Variable(usize),
    Constraint(Option<AnsweredConstraint>),
}

/// State of a lazy process drawing a gap instance while answering queries.
#[derive(Debug, Clone)]
pub struct ProcessState {
    seed: CspInstance,
    copies: usize,
    mult: usize,
    branch: GapMode,
    /// the caller is not told the branch
    pub hidden: bool,
    rng: ChaCha8Rng,
    /// `ρ`: label ↦ seed variable
    pub rho: Vec<Option<usize>>,
    /// `V_i` in discovery order
    members: Vec<Vec<usize>>,
    unseen: Vec<usize>,
    unseen_pos: Vec<usize>,
    used: HashMap<(usize, usize), Vec<usize>>,
    answered: HashMap<(usize, usize), usize>,
    pub transcript: Vec<AnsweredConstraint>,
    sizes: Vec<Vec<usize>>,
    counts: Vec<Vec<usize>>,
    value: Vec<Option<usize>>,
    value_count: Vec<Vec<usize>>,
    class_of: HashMap<(usize, usize), usize>,
    class_count: HashMap<(usize, usize, usize), usize>,
}

impl ProcessState {
    /// `branch = None` draws the branch uniformly and hides it.
    pub fn new(params: &GapParams, branch: Option<GapMode>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (branch, hidden) = match branch {
            Some(b) => (b, false),
            None => (if rng.gen_bool(0.5) { GapMode::Opt } else { GapMode::Lp }, true),
        };
        if branch == GapMode::Lp {
            params.check_feasible()?;
            params.check_consistent()?;
        }
        let inst = params.instance.clone();
        let total = inst.n * params.copies;
        Ok(ProcessState {
            copies: params.copies,
            mult: params.mult,
            branch,
            hidden,
            rng,
            rho: vec![None; total],
            members: vec![Vec::new(); inst.n],
            unseen: (0..total).collect(),
            unseen_pos: (0..total).collect(),
            used: HashMap::new(),
            answered: HashMap::new(),
            transcript: Vec::new(),
            sizes: params.class_sizes(),
            counts: params.value_counts(),
            value: vec![None; total],
            value_count: vec![vec![0; inst.q]; inst.n],
            class_of: HashMap::new(),
            class_count: HashMap::new(),
            seed: inst,
        })
    }

    /// The branch, unless it is hidden.
    pub fn branch(&self) -> Option<GapMode> {
        if self.hidden {
            None
        } else {
            Some(self.branch)
        }
    }

    pub fn total_variables(&self) -> usize {
        self.rho.len()
    }

    pub fn unseen_count(&self) -> usize {
        self.unseen.len()
    }

    /// Slots of a seen variable, `deg_I(ρ(v))·T`.
    pub fn slots(&self, v: usize) -> usize {
        self.rho[v].map_or(0, |i| self.seed.degree(i) * self.mult)
    }

    pub fn is_answered(&self, v: usize, p: usize) -> bool {
        self.answered.contains_key(&(v, p))
    }

    fn d(&self, u: usize, block: usize) -> usize {
        self.used.get(&(u, block)).map_or(0, Vec::len)
    }

    fn remove_unseen(&mut self, label: usize) {
        let k = self.unseen_pos[label];
        let last = *self.unseen.last().expect("unseen nonempty");
        self.unseen.swap_remove(k);
        if last != label {
            self.unseen_pos[last] = k;
        }
    }

    fn place(&mut self, u: usize, i: usize, value: Option<usize>) {
        self.rho[u] = Some(i);
        self.members[i].push(u);
        if let Some(a) = value {
            self.value[u] = Some(a);
            self.value_count[i][a] += 1;
        }
    }

    fn remaining(&self, c: usize, beta: usize, part: usize) -> usize {
        self.sizes[c][beta] - self.class_count.get(&(c, beta, part)).copied().unwrap_or(0)
    }

    fn digit(&self, beta: usize, k: usize, part: usize) -> usize {
        let q = self.seed.q;
        (beta / q.pow((k - 1 - part) as u32)) % q
    }

    fn set_class(&mut self, u: usize, block: usize, c: usize, beta: usize, part: usize) {
        self.class_of.insert((u, block), beta);
        *self.class_count.entry((c, beta, part)).or_insert(0) += 1;
    }

    fn pick(&mut self, weights: &[f64]) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInstance("process ran out of consistent choices".into()));
        }
        let mut r = self.rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if r < w {
                return Ok(i);
            }
            r -= w;
        }
        Ok(weights.iter().rposition(|&w| w > 0.0).expect("positive weight"))
    }

    fn random_variable(&mut self) -> Result<usize> {
        if self.unseen.is_empty() {
            return Err(Error::InvalidParameter("every variable has been seen".into()));
        }
        let n_big = self.copies as f64;
        let w: Vec<f64> = self.members.iter().map(|m| n_big - m.len() as f64).collect();
        let i = self.pick(&w)?;
        let value = match self.branch {
            GapMode::Opt => None,
            GapMode::Lp => {
                let w: Vec<f64> = (0..self.seed.q)
                    .map(|a| (self.counts[i][a] - self.value_count[i][a]) as f64)
                    .collect();
                Some(self.pick(&w)?)
            }
        };
        let k = self.rng.gen_range(0..self.unseen.len());
        let v = self.unseen[k];
        self.remove_unseen(v);
        self.place(v, i, value);
        Ok(v)
    }

    fn constraint(&mut self, v: usize, p: usize) -> Result<Option<AnsweredConstraint>> {
        let i = self.rho.get(v).copied().flatten().ok_or(Error::UnseenVariableQuery)?;
        if p == 0 {
            return Err(Error::InvalidParameter("indices start at 1".into()));
        }
        if let Some(&id) = self.answered.get(&(v, p)) {
            return Ok(Some(self.transcript[id].clone()));
        }
        let t_mult = self.mult;
        let block = (p - 1) / t_mult;
        if block >= self.seed.degree(i) {
            return Ok(None);
        }
        let c = self.seed.incident(i)[block];
        let d = self.seed.distinct_vars(c).to_vec();
        let k = d.len();
        let ell = d.iter().position(|&x| x == i).expect("variable in its constraint");
        let mut beta = 0;
        if self.branch == GapMode::Lp {
            beta = match self.class_of.get(&(v, block)) {
                Some(&b) => b,
                None => {
                    let a = self.value[v].expect("lp variables carry values");
                    let w: Vec<f64> = (0..self.sizes[c].len())
                        .map(|b| if self.digit(b, k, ell) == a { self.remaining(c, b, ell) as f64 } else { 0.0 })
                        .collect();
                    let b = self.pick(&w)?;
                    self.set_class(v, block, c, b, ell);
                    b
                }
            };
        }
        let mut chosen = vec![v; k];
        let mut collision = false;
        for part in 0..k {
            if part == ell {
                continue;
            }
            let ij = d[part];
            let qj = slot_of(&self.seed, ij, c);
            let cands = self.members[ij].clone();
            let mut w: Vec<f64> = Vec::with_capacity(cands.len() + 1);
            let mut new_value = None;
            match self.branch {
                GapMode::Opt => {
                    for &u in &cands {
                        w.push((t_mult - self.d(u, qj)) as f64);
                    }
                    w.push(((self.copies - cands.len()) * t_mult) as f64);
                }
                GapMode::Lp => {
                    let b = self.digit(beta, k, part);
                    let rem = self.remaining(c, beta, part) as f64;
                    let open: f64 = (0..self.sizes[c].len())
                        .filter(|&bb| self.digit(bb, k, part) == b)
                        .map(|bb| self.remaining(c, bb, part) as f64)
                        .sum();
                    let share = if open > 0.0 { rem / open } else { 0.0 };
                    for &u in &cands {
                        let weight = if self.value[u] != Some(b) {
                            0.0
                        } else {
                            match self.class_of.get(&(u, qj)) {
                                Some(&cb) if cb == beta => (t_mult - self.d(u, qj)) as f64,
                                Some(_) => 0.0,
                                None => t_mult as f64 * share,
                            }
                        };
                        w.push(weight);
                    }
                    w.push((self.counts[ij][b] - self.value_count[ij][b]) as f64 * t_mult as f64 * share);
                    new_value = Some(b);
                }
            }
            let pick = self.pick(&w)?;
            let u = if pick < cands.len() {
                collision = true;
                cands[pick]
            } else {
                let k2 = self.rng.gen_range(0..self.unseen.len());
                let u = self.unseen[k2];
                self.remove_unseen(u);
                self.place(u, ij, new_value);
                u
            };
            if self.branch == GapMode::Lp && !self.class_of.contains_key(&(u, qj)) {
                self.set_class(u, qj, c, beta, part);
            }
            chosen[part] = u;
        }
        let id = self.transcript.len();
        let mut indices = Vec::with_capacity(k);
        for part in 0..k {
            let u = chosen[part];
            let (blk, idx) = if part == ell {
                (block, p)
            } else {
                let qj = slot_of(&self.seed, d[part], c);
                let used = self.used.get(&(u, qj)).cloned().unwrap_or_default();
                let free: Vec<usize> = (qj * t_mult + 1..=qj * t_mult + t_mult).filter(|x| !used.contains(x)).collect();
                let idx = *free.choose(&mut self.rng).ok_or_else(|| Error::InvalidInstance("no free index".into()))?;
                (qj, idx)
            };
            self.used.entry((u, blk)).or_default().push(idx);
            self.answered.insert((u, idx), id);
            indices.push((u, idx));
        }
        let con = &self.seed.constraints[c];
        let answer = AnsweredConstraint {
            predicate: con.predicate,
            weight: con.weight,
            scope: self.seed.scope_positions(c).iter().map(|&j| chosen[j]).collect(),
            indices,
            collision,
            source: c,
        };
        self.transcript.push(answer.clone());
        Ok(Some(answer))
    }

    /// Answers one query and appends it to the transcript.
    pub fn query(&mut self, q: ProcessQuery) -> Result<ProcessAnswer> {
        match q {
            ProcessQuery::RandomVariable => self.random_variable().map(ProcessAnswer::Variable),
            ProcessQuery::Constraint { v, p } => self.constraint(v, p).map(ProcessAnswer::Constraint),
        }
    }

    /// Second stage: keeps answering until every variable and slot is seen,
    /// then returns the instance the transcript now spells out.
    pub fn complete(mut self) -> Result<GapInstance> {
        while !self.unseen.is_empty() {
            self.random_variable()?;
        }
        for v in 0..self.rho.len() {
            for p in 1..=self.slots(v) {
                if !self.answered.contains_key(&(v, p)) {
                    self.constraint(v, p)?;
                }
            }
        }
        let total = self.rho.len();
        let constraints: Vec<Constraint> = self
            .transcript
            .iter()
            .map(|a| Constraint {
                predicate: a.predicate,
                scope: a.scope.clone(),
                weight: a.weight,
            })
            .collect();
        let index: Vec<Vec<usize>> = (0..total)
            .map(|v| (1..=self.slots(v)).map(|p| self.answered[&(v, p)]).collect())
            .collect();
        let mut labels = vec![0; total];
        for (i, m) in self.members.iter().enumerate() {
            for (j, &u) in m.iter().enumerate() {
                labels[i * self.copies + j] = u;
            }
        }
        let seed = &self.seed;
        let t = (seed.t * self.mult).max(1);
        let instance = CspInstance::from_parts(seed.q, seed.s, t, seed.w, total, seed.predicates.clone(), constraints)?.with_index(index)?;
        let alpha = match self.branch {
            GapMode::Opt => None,
            GapMode::Lp => Some(self.value.iter().map(|v| v.expect("every variable placed")).collect()),
        };
        Ok(GapInstance {
            instance,
            mode: self.branch,
            alpha,
            labels,
            source: self.transcript.iter().map(|a| a.source).collect(),
            copies: self.copies,
            mult: self.mult,
        })
    }
}

/// `process_query` as a free function.
pub fn process_query(st: &mut ProcessState, q: ProcessQuery) -> Result<ProcessAnswer> {
    st.query(q)
}

/// `τ²s²/(μN − τs)`, or infinity when the denominator is not positive.
///
/// ```
/// let b = ctlp::gap::collision_bound(10, 2, 0.2, 10_000);
/// assert!((b - 400.0 / 1980.0).abs() < 1e-12);
/// ```
pub fn collision_bound(tau: usize, s: usize, mu: f64, copies: usize) -> f64 {
    let den = mu * copies as f64 - (tau * s) as f64;
    if den <= 0.0 {
        f64::INFINITY
    } else {
        ((tau * tau * s * s) as f64) / den
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CollisionReport {
    pub tau: usize,
    pub trials: usize,
    pub collisions: usize,
    pub empirical: f64,
    pub bound: f64,
}

/// Breadth-first probing with `τ` constraint queries against the hidden
/// process; a run collides when an answer reuses a transcribed variable.
pub fn collision_experiment(params: &GapParams, tau: usize, trials: usize, seed: u64) -> Result<CollisionReport> {
    let mu = params.min_mu();
    let s = params.instance.s;
    if !((tau * s) as f64) .lt(&(mu * params.copies as f64)) {
        return Err(Error::InvalidParameter(format!("need τ·s < μN, got τ={tau}, s={s}, μ={mu}")));
    }
    let mut collisions = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut st = ProcessState::new(params, None, rng.gen())?;
        if probe(&mut st, tau)? {
            collisions += 1;
        }
    }
    Ok(CollisionReport {
        tau,
        trials,
        collisions,
        empirical: collisions as f64 / trials.max(1) as f64,
        bound: collision_bound(tau, s, mu, params.copies),
    })
}

fn probe(st: &mut ProcessState, tau: usize) -> Result<bool> {
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = (0, 1);
    let mut asked = 0;
    while asked < tau {
        while cursor.0 < order.len() && (cursor.1 > st.slots(order[cursor.0]) || st.is_answered(order[cursor.0], cursor.1)) {
            if cursor.1 > st.slots(order[cursor.0]) {
                cursor = (cursor.0 + 1, 1);
            } else {
                cursor.1 += 1;
            }
        }
        if cursor.0 >= order.len() {
            if st.unseen_count() == 0 {
                break;
            }
            if let ProcessAnswer::Variable(v) = st.query(ProcessQuery::RandomVariable)? {
                order.push(v);
            }
            continue;
        }
        let (v, p) = (order[cursor.0], cursor.1);
        asked += 1;
        if let ProcessAnswer::Constraint(Some(a)) = st.query(ProcessQuery::Constraint { v, p })? {
            if a.collision {
                return Ok(true);
            }
            for &(u, _) in &a.indices {
                if !order.contains(&u) {
                    order.push(u);
                }
            }
        }
    }
    Ok(false)
}

/// Outcome of the opt-family experiment.
#[derive(Debug, Clone, Serialize)]
pub struct OptExperiment {
    pub seed_olopt: f64,
    pub threshold: f64,
    pub values: Vec<f64>,
    /// fraction of draws with `olopt(J) ≤ olopt(I) + ε`
    pub fraction: f64,
}

/// Draws `trials` opt-family instances and compares `olopt(J)` with `olopt(I) + ε`.
pub fn opt_experiment(params: &GapParams, eps: f64, trials: usize) -> Result<OptExperiment> {
    let seed_olopt = brute_force_opt(&params.instance)?.0 / params.instance.total_weight();
    let threshold = seed_olopt + eps;
    let mut values = Vec::with_capacity(trials);
    for trial in 0..trials {
        let p = GapParams {
            seed: params.seed.wrapping_add(trial as u64),
            ..params.clone()
        };
        values.push(gen_opt_instance(&p)?.olopt()?);
    }
    let hits = values.iter().filter(|&&v| v <= threshold + 1e-12).count();
    Ok(OptExperiment {
        seed_olopt,
        threshold,
        fraction: hits as f64 / trials.max(1) as f64,
        values,
    })
}

/// Outcome of the lp-family check.
#[derive(Debug, Clone, Serialize)]
pub struct LpExperiment {
    /// `val(J, α)`
    pub value: f64,
    /// `T·N·lp(I)`
    pub target: f64,
    /// allowed deviation from apportionment rounding
    pub slack: f64,
    /// `μ*·N` was integral everywhere
    pub integral: bool,
}

/// Compares the natural assignment's value with `T·N·lp(I)`.
pub fn lp_experiment(params: &GapParams) -> Result<LpExperiment> {
    let j = gen_lp_instance(params)?;
    let alpha = j.alpha.as_ref().expect("lp family has an assignment");
    let value = evaluate(&j.instance, alpha);
    let inst = &params.instance;
    let lp: f64 = (0..inst.num_constraints())
        .map(|c| {
            let w = inst.constraints[c].weight;
            inst.sat_table(c)
                .iter()
                .zip(&params.solution.mu[c])
                .filter(|(s, _)| **s)
                .map(|(_, m)| w * m)
                .sum::<f64>()
        })
        .sum();
    let n_big = params.copies as f64;
    let nonzero = params.solution.mu.iter().flatten().filter(|&&m| m > 1e-12).count();
    let integral = params
        .solution
        .mu
        .iter()
        .flatten()
        .chain(params.solution.x.iter().flatten())
        .all(|&m| ((m * n_big) - (m * n_big).round()).abs() < 1e-7);
    Ok(LpExperiment {
        value,
        target: params.mult as f64 * n_big * lp,
        slack: (params.mult * inst.s) as f64 * inst.w * nonzero as f64,
        integral,
    })
}
