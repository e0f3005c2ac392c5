//! BasicLP → relaxed LP → complemented big-C packing LP → restricted packing LP,
//! and the restore-and-repair step that turns a packing solution back into an
//! ε-infeasible BasicLP solution.

use serde::Serialize;

use crate::csp::{decode, CspInstance};
use crate::error::{Error, Result};
use crate::lp::marginal_entries;
use crate::lp::{infeasibility, ColumnLabel, LinearProgram, LpSolution, Relation, RowLabel};

/// Slack, big constant and repair thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineParams {
    /// relaxation slack of the relaxed LP
    pub eps: f64,
    /// weight of the complement terms in the objective
    pub c_big: f64,
    /// target approximation loss of the packing solver
    pub eps_prime: f64,
    /// reset threshold on `1 − z − z̄`
    pub eps_dprime: f64,
}

impl PipelineParams {
    /// `C = q^{2s}(tw)²/ε²`, `ε′ = ε³/(q^{2s}(tw)²)`, `ε″ = ε`.
    pub fn new(q: usize, s: usize, t: usize, w: f64, eps: f64) -> Self {
        let k = (q as f64).powi(2 * s as i32) * (t as f64 * w).powi(2);
        PipelineParams {
            eps,
            c_big: k / (eps * eps),
            eps_prime: eps.powi(3) / k,
            eps_dprime: eps,
        }
    }

    pub fn for_instance(inst: &CspInstance, eps: f64) -> Self {
        Self::new(inst.q, inst.s, inst.t, inst.w, eps)
    }

    pub fn validate(&self, w: f64) -> Result<()> {
        let ok = self.eps > 0.0
            && self.eps < 0.5
            && self.c_big >= w
            && self.eps_prime > 0.0
            && self.eps_dprime > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("pipeline parameters {self:?}")))
        }
    }
}

/// Column offsets of the complemented LP: all `x`, all `x̄`, all `μ`, all `μ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementLayout {
    pub q: usize,
    pub nq: usize,
    pub mu_offset: Vec<usize>,
    pub mu_total: usize,
}

impl ComplementLayout {
    pub fn new(inst: &CspInstance) -> Self {
        let mut mu_offset = Vec::with_capacity(inst.num_constraints());
        let mut off = 0;
        for c in 0..inst.num_constraints() {
            mu_offset.push(off);
            off += inst.table_len(c);
        }
        ComplementLayout {
            q: inst.q,
            nq: inst.n * inst.q,
            mu_offset,
            mu_total: off,
        }
    }

    pub fn x(&self, v: usize, a: usize) -> usize {
        v * self.q + a
    }
    pub fn xbar(&self, v: usize, a: usize) -> usize {
        self.nq + v * self.q + a
    }
    pub fn mu(&self, c: usize, b: usize) -> usize {
        2 * self.nq + self.mu_offset[c] + b
    }
    pub fn mubar(&self, c: usize, b: usize) -> usize {
        2 * self.nq + self.mu_total + self.mu_offset[c] + b
    }
    /// Number of primal columns of the relaxed LP (`N` in the value identity).
    pub fn primal_columns(&self) -> usize {
        self.nq + self.mu_total
    }
    pub fn total(&self) -> usize {
        2 * self.primal_columns()
    }
}

/// The relaxed LP: `x ↦ 1 − x` substituted and every equality relaxed by `ε`.
pub fn relax_basic_lp(inst: &CspInstance, eps: f64) -> LinearProgram {
    let q = inst.q;
    let lay = ComplementLayout::new(inst);
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
    let mu_col = |c: usize, b: usize| lay.nq + lay.mu_offset[c] + b;
    let qm1 = (q - 1) as f64;
    for v in 0..inst.n {
        let coeffs: Vec<(usize, f64)> = (0..q).map(|a| (lay.x(v, a), 1.0)).collect();
        lp.add_row(RowLabel::XSum { v }, coeffs.clone(), Relation::Le, qm1 + eps);
        lp.add_row(RowLabel::XSum { v }, coeffs, Relation::Ge, qm1 - eps);
    }
    for c in 0..inst.num_constraints() {
        for (j, &v) in inst.distinct_vars(c).iter().enumerate() {
            for a in 0..q {
                let mut coeffs = vec![(lay.x(v, a), 1.0)];
                coeffs.extend(marginal_entries(inst, c, j, a).map(|b| (mu_col(c, b), 1.0)));
                lp.add_row(RowLabel::XMarg { c, v, a }, coeffs.clone(), Relation::Le, 1.0 + eps);
                lp.add_row(RowLabel::XMarg { c, v, a }, coeffs, Relation::Ge, 1.0 - eps);
            }
        }
    }
    lp
}

/// The relaxed LP with every column capped at 1.
///
/// The complemented LP defines `x̄ = 1 − x ≥ 0`, which presumes `x ≤ 1`; with
/// the cap the optimum of the complemented LP equals this optimum plus `C·N`.
pub fn relax_basic_lp_bounded(inst: &CspInstance, eps: f64) -> LinearProgram {
    let mut lp = relax_basic_lp(inst, eps);
    for col in 0..lp.num_columns() {
        lp.add_row(RowLabel::Bound { col }, vec![(col, 1.0)], Relation::Le, 1.0);
    }
    lp
}

/// The complemented packing LP with coupling rows and the `C`-weighted objective.
pub fn to_packing(inst: &CspInstance, params: &PipelineParams) -> LinearProgram {
    let q = inst.q;
    let eps = params.eps;
    let big = params.c_big;
    let lay = ComplementLayout::new(inst);
    let mut lp = LinearProgram::default();
    for v in 0..inst.n {
        for a in 0..q {
            lp.add_column(ColumnLabel::X { v, a }, big);
        }
    }
    for v in 0..inst.n {
        for a in 0..q {
            lp.add_column(ColumnLabel::XBar { v, a }, big);
        }
    }
    for c in 0..inst.num_constraints() {
        let w = inst.constraints[c].weight;
        for (b, &sat) in inst.sat_table(c).iter().enumerate() {
            lp.add_column(ColumnLabel::Mu { c, b }, if sat { w + big } else { big });
        }
    }
    for c in 0..inst.num_constraints() {
        for b in 0..inst.table_len(c) {
            lp.add_column(ColumnLabel::MuBar { c, b }, big);
        }
    }
    for v in 0..inst.n {
        let xs = (0..q).map(|a| (lay.x(v, a), 1.0)).collect();
        lp.add_row(RowLabel::XSum { v }, xs, Relation::Le, (q - 1) as f64 + eps);
        let xb = (0..q).map(|a| (lay.xbar(v, a), 1.0)).collect();
        lp.add_row(RowLabel::XBarSum { v }, xb, Relation::Le, 1.0 + eps);
    }
    for c in 0..inst.num_constraints() {
        let k = inst.distinct_vars(c).len();
        for (j, &v) in inst.distinct_vars(c).iter().enumerate() {
            for a in 0..q {
                let mut m = vec![(lay.x(v, a), 1.0)];
                m.extend(marginal_entries(inst, c, j, a).map(|b| (lay.mu(c, b), 1.0)));
                lp.add_row(RowLabel::XMarg { c, v, a }, m, Relation::Le, 1.0 + eps);
                let mut mb = vec![(lay.xbar(v, a), 1.0)];
                mb.extend(marginal_entries(inst, c, j, a).map(|b| (lay.mubar(c, b), 1.0)));
                let rhs = (q as f64).powi(k as i32 - 1) + eps;
                lp.add_row(RowLabel::XBarMarg { c, v, a }, mb, Relation::Le, rhs);
            }
        }
    }
    for v in 0..inst.n {
        for a in 0..q {
            let cs = vec![(lay.x(v, a), 1.0), (lay.xbar(v, a), 1.0)];
            lp.add_row(RowLabel::XCouple { v, a }, cs, Relation::Le, 1.0);
        }
    }
    for c in 0..inst.num_constraints() {
        for b in 0..inst.table_len(c) {
            let cs = vec![(lay.mu(c, b), 1.0), (lay.mubar(c, b), 1.0)];
            lp.add_row(RowLabel::MuCouple { c, b }, cs, Relation::Le, 1.0);
        }
    }
    lp
}

/// Row multiplier that brings every coefficient of the scaled LP to at least 1.
pub fn row_multiplier(label: &RowLabel, w: f64, c_big: f64) -> f64 {
    match label {
        RowLabel::XMarg { .. } | RowLabel::MuCouple { .. } => w + c_big,
        _ => c_big,
    }
}

/// Sparsity and magnitude statistics of a restricted packing program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PackingStats {
    pub c_max: f64,
    pub gamma_p: f64,
    pub gamma_d: f64,
    /// most columns in one row
    pub delta_p: usize,
    /// most rows containing one column
    pub delta_d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingRow {
    pub label: RowLabel,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `max 1ᵀy` subject to `Σ_i a_ji y_i ≤ c_j`, `y ≥ 0`, every nonzero `a_ji ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingProgram {
    pub labels: Vec<ColumnLabel>,
    pub rows: Vec<PackingRow>,
    /// `y_i = scale_i · z_i` where `z` are the complemented-LP coordinates
    pub scale: Vec<f64>,
    pub stats: PackingStats,
}

impl PackingProgram {
    /// Builds a program from explicit rows (unit scaling).
    pub fn from_rows(num_columns: usize, rows: Vec<(Vec<(usize, f64)>, f64)>) -> Self {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(j, (coeffs, rhs))| PackingRow {
                label: RowLabel::Free(j),
                coeffs,
                rhs,
            })
            .collect();
        Self::assemble((0..num_columns).map(ColumnLabel::Free).collect(), rows, vec![1.0; num_columns])
    }

    fn assemble(labels: Vec<ColumnLabel>, rows: Vec<PackingRow>, scale: Vec<f64>) -> Self {
        let stats = packing_stats(labels.len(), &rows);
        PackingProgram {
            labels,
            rows,
            scale,
            stats,
        }
    }

    pub fn num_columns(&self) -> usize {
        self.labels.len()
    }

    pub fn to_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::default();
        for &l in &self.labels {
            lp.add_column(l, 1.0);
        }
        for r in &self.rows {
            lp.add_row(r.label, r.coeffs.clone(), Relation::Le, r.rhs);
        }
        lp
    }

    /// Largest relative row excess `(load − c)/max(c, 1)`; `≤ 0` means feasible.
    pub fn max_excess(&self, y: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let load: f64 = r.coeffs.iter().map(|&(i, a)| a * y[i]).sum();
                (load - r.rhs) / r.rhs.max(1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale_up(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }
}

/// Computes `c_max`, `Γ_p`, `Γ_d`, `Δ_p`, `Δ_d` from the rows.
pub fn packing_stats(num_columns: usize, rows: &[PackingRow]) -> PackingStats {
    let c_max = rows.iter().map(|r| r.rhs).fold(0.0, f64::max);
    let mut col_sum = vec![0.0; num_columns];
    let mut col_min_c = vec![f64::INFINITY; num_columns];
    let mut col_deg = vec![0usize; num_columns];
    let mut gamma_d = 0.0f64;
    let mut delta_p = 0;
    for r in rows {
        let mut sum = 0.0;
        for &(i, a) in &r.coeffs {
            sum += a;
            col_sum[i] += a;
            col_deg[i] += 1;
            col_min_c[i] = col_min_c[i].min(r.rhs);
        }
        gamma_d = gamma_d.max(sum);
        delta_p = delta_p.max(r.coeffs.len());
    }
    let gamma_p = (0..num_columns)
        .filter(|&i| col_deg[i] > 0)
        .map(|i| c_max / col_min_c[i] * col_sum[i])
        .fold(0.0, f64::max);
    PackingStats {
        c_max,
        gamma_p,
        gamma_d,
        delta_p,
        delta_d: col_deg.into_iter().max().unwrap_or(0),
    }
}

/// Rescales the complemented LP into restricted form with unit objective.
pub fn normalize_packing(lp3: &LinearProgram, params: &PipelineParams, w: f64) -> PackingProgram {
    let scale = lp3.objective.clone();
    let rows = lp3
        .rows
        .iter()
        .map(|r| {
            let m = row_multiplier(&r.label, w, params.c_big);
            PackingRow {
                label: r.label,
                coeffs: r.coeffs.iter().map(|&(i, a)| (i, m * a / scale[i])).collect(),
                rhs: m * r.rhs,
            }
        })
        .collect();
    PackingProgram::assemble(lp3.labels.clone(), rows, scale)
}

/// Analytic bounds on `Γ_p`, `Γ_d` from the family parameters alone.
pub fn gamma_bounds(q: usize, s: usize, t: usize, w: f64, params: &PipelineParams) -> (f64, f64) {
    let (qf, big, eps) = (q as f64, params.c_big, params.eps);
    let ratio = (w + big) / big;
    let qs1 = qf.powi(s as i32 - 1);
    let gamma_d = qf.max((1.0 + qs1) * ratio);
    let c_max = [big * (qf - 1.0 + eps), big * (1.0 + eps), (1.0 + eps) * (w + big), big * (qs1 + eps)]
        .into_iter()
        .fold(0.0, f64::max);
    let col = [
        2.0 + t as f64 * ratio,
        2.0 + t as f64,
        (s as f64 + 1.0) * ratio,
        s as f64 + ratio,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    (c_max / big * col, gamma_d)
}

/// A point of the complemented LP, split into its four blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementPoint {
    pub x: Vec<Vec<f64>>,
    pub xbar: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub mubar: Vec<Vec<f64>>,
}

impl ComplementPoint {
    pub fn from_columns(inst: &CspInstance, cols: &[f64]) -> Self {
        let lay = ComplementLayout::new(inst);
        let q = inst.q;
        let m = inst.num_constraints();
        ComplementPoint {
            x: (0..inst.n).map(|v| (0..q).map(|a| cols[lay.x(v, a)]).collect()).collect(),
            xbar: (0..inst.n).map(|v| (0..q).map(|a| cols[lay.xbar(v, a)]).collect()).collect(),
            mu: (0..m).map(|c| (0..inst.table_len(c)).map(|b| cols[lay.mu(c, b)]).collect()).collect(),
            mubar: (0..m).map(|c| (0..inst.table_len(c)).map(|b| cols[lay.mubar(c, b)]).collect()).collect(),
        }
    }

    pub fn to_columns(&self, inst: &CspInstance) -> Vec<f64> {
        let lay = ComplementLayout::new(inst);
        let mut cols = vec![0.0; lay.total()];
        for v in 0..inst.n {
            for a in 0..inst.q {
                cols[lay.x(v, a)] = self.x[v][a];
                cols[lay.xbar(v, a)] = self.xbar[v][a];
            }
        }
        for c in 0..inst.num_constraints() {
            for b in 0..inst.table_len(c) {
                cols[lay.mu(c, b)] = self.mu[c][b];
                cols[lay.mubar(c, b)] = self.mubar[c][b];
            }
        }
        cols
    }

    /// `wᵀμ` part of the objective.
    pub fn weighted_value(&self, inst: &CspInstance) -> f64 {
        (0..inst.num_constraints())
            .map(|c| {
                let w = inst.constraints[c].weight;
                inst.sat_table(c)
                    .iter()
                    .zip(&self.mu[c])
                    .filter(|(s, _)| **s)
                    .map(|(_, m)| w * m)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Decides the repaired marginal of one variable from its `q` column pairs.
/// Returns the BasicLP marginal and whether it was reset to uniform.
pub fn repair_marginal(x: &[f64], xbar: &[f64], eps_dprime: f64) -> (Vec<f64>, bool) {
    let q = x.len();
    let bad = x.iter().zip(xbar).any(|(a, b)| 1.0 - a - b >= eps_dprime);
    if bad {
        (vec![1.0 / q as f64; q], true)
    } else {
        (x.iter().map(|v| (1.0 - v).max(0.0)).collect(), false)
    }
}

/// Product distribution over the distinct variables of a constraint, each
/// marginal normalized so the table sums to one.
pub fn product_table(q: usize, marginals: &[Vec<f64>]) -> Vec<f64> {
    let k = marginals.len();
    let normed: Vec<Vec<f64>> = marginals
        .iter()
        .map(|m| {
            let s: f64 = m.iter().sum();
            if s > 0.0 {
                m.iter().map(|v| v / s).collect()
            } else {
                vec![1.0 / q as f64; q]
            }
        })
        .collect();
    let mut vals = vec![0; k];
    (0..q.pow(k as u32))
        .map(|b| {
            decode(b, q, &mut vals);
            vals.iter().enumerate().map(|(j, &a)| normed[j][a]).product()
        })
        .collect()
}

/// Outcome of [`restore_and_repair`].
#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub solution: LpSolution,
    pub infeasibility: f64,
    /// variables whose marginals were reset
    pub reset_vars: Vec<usize>,
    /// constraints whose tables became product distributions
    pub reset_constraints: Vec<usize>,
    /// `|S|`, the columns with `1 − z − z̄ ≥ ε″`
    pub s_size: usize,
}

/// Checks feasibility for the complemented LP up to a relative tolerance.
pub fn check_complement_feasible(inst: &CspInstance, z: &ComplementPoint, params: &PipelineParams) -> Result<()> {
    let lp3 = to_packing(inst, params);
    let cols = z.to_columns(inst);
    if let Some(i) = cols.iter().position(|&v| v < -1e-9) {
        return Err(Error::NotFeasibleForLp3(format!("column {:?} negative", lp3.labels[i])));
    }
    for r in &lp3.rows {
        let lhs: f64 = r.coeffs.iter().map(|&(i, a)| a * cols[i]).sum();
        if lhs > r.rhs + 1e-7 * r.rhs.max(1.0) {
            return Err(Error::NotFeasibleForLp3(format!("{:?}", r.label)));
        }
    }
    Ok(())
}

/// Maps a packing solution back to BasicLP and applies the reset rule.
pub fn restore_and_repair(inst: &CspInstance, z: &ComplementPoint, params: &PipelineParams) -> Result<Repaired> {
    check_complement_feasible(inst, z, params)?;
    let mut s_size = 0;
    for v in 0..inst.n {
        for a in 0..inst.q {
            if 1.0 - z.x[v][a] - z.xbar[v][a] >= params.eps_dprime {
                s_size += 1;
            }
        }
    }
    for c in 0..inst.num_constraints() {
        for b in 0..inst.table_len(c) {
            if 1.0 - z.mu[c][b] - z.mubar[c][b] >= params.eps_dprime {
                s_size += 1;
            }
        }
    }
    let mut reset = vec![false; inst.n];
    let mut x = Vec::with_capacity(inst.n);
    for v in 0..inst.n {
        let (m, r) = repair_marginal(&z.x[v], &z.xbar[v], params.eps_dprime);
        reset[v] = r;
        x.push(m);
    }
    let mut mu = Vec::with_capacity(inst.num_constraints());
    let mut reset_constraints = Vec::new();
    for c in 0..inst.num_constraints() {
        let d = inst.distinct_vars(c);
        if d.iter().any(|&v| reset[v]) {
            let margs: Vec<Vec<f64>> = d.iter().map(|&v| x[v].clone()).collect();
            mu.push(product_table(inst.q, &margs));
            reset_constraints.push(c);
        } else {
            mu.push(z.mu[c].iter().map(|v| v.max(0.0)).collect());
        }
    }
    let mut solution = LpSolution { x, mu, value: 0.0 };
    solution.value = crate::lp::lp_value(inst, &solution);
    let infeasibility = infeasibility(inst, &solution)?;
    Ok(Repaired {
        solution,
        infeasibility,
        reset_vars: (0..inst.n).filter(|&v| reset[v]).collect(),
        reset_constraints,
        s_size,
    })
}

/// Lifts a relaxed-LP point `(x, μ)` to the complemented LP via `x̄ = 1 − x`, `μ̄ = 1 − μ`.
pub fn complement_of_relaxed(inst: &CspInstance, cols: &[f64]) -> ComplementPoint {
    let lay = ComplementLayout::new(inst);
    let q = inst.q;
    let m = inst.num_constraints();
    let x: Vec<Vec<f64>> = (0..inst.n).map(|v| (0..q).map(|a| cols[lay.x(v, a)]).collect()).collect();
    let mu: Vec<Vec<f64>> = (0..m)
        .map(|c| (0..inst.table_len(c)).map(|b| cols[lay.nq + lay.mu_offset[c] + b]).collect())
        .collect();
    let comp = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().map(|v| (1.0 - v).max(0.0)).collect()).collect()
    };
    ComplementPoint {
        xbar: comp(&x),
        mubar: comp(&mu),
        x,
        mu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::fixtures::*;
    use crate::lp::solve_lp;

    #[test]
    fn relaxed_rows_for_single() {
        let lp = relax_basic_lp(&single(), 0.1);
        let lay = ComplementLayout::new(&single());
        let want: Vec<(usize, f64)> = vec![(lay.x(0, 0), 1.0), (lay.nq, 1.0), (lay.nq + 1, 1.0)];
        let hit = |rel: Relation, rhs: f64| {
            lp.rows.iter().any(|r| {
                r.label == RowLabel::XMarg { c: 0, v: 0, a: 0 }
                    && r.rel == rel
                    && (r.rhs - rhs).abs() < 1e-12
                    && r.coeffs == want
            })
        };
        assert!(hit(Relation::Le, 1.1));
        assert!(hit(Relation::Ge, 0.9));
    }

    #[test]
    fn complement_column_count() {
        let p = PipelineParams::for_instance(&single(), 0.1);
        assert_eq!(to_packing(&single(), &p).num_columns(), 28);
    }

    #[test]
    fn toy_gamma_d() {
        let p = PackingProgram::from_rows(2, vec![(vec![(0, 1.0), (1, 2.0)], 1.0), (vec![(1, 3.0)], 1.0)]);
        assert_eq!(p.stats.gamma_d, 3.0);
        assert_eq!(p.stats.delta_p, 2);
        assert_eq!(p.stats.delta_d, 2);
    }

    #[test]
    fn restricted_form_and_round_trip() {
        let inst = triangle();
        let params = PipelineParams::for_instance(&inst, 0.1);
        let lp3 = to_packing(&inst, &params);
        let pack = normalize_packing(&lp3, &params, inst.w);
        for r in &pack.rows {
            for &(_, a) in &r.coeffs {
                assert!(a >= 1.0 - 1e-12);
            }
        }
        let z = solve_lp(&lp3).unwrap().x;
        let y = pack.scale_up(&z);
        let back = pack.unscale(&y);
        let v3 = lp3.value(&z);
        assert!((lp3.value(&back) - v3).abs() <= 1e-9 * v3.abs());
        assert!((y.iter().sum::<f64>() - v3).abs() <= 1e-9 * v3.abs());
    }

    #[test]
    fn repair_of_optimum_keeps_everything() {
        let inst = triangle();
        let params = PipelineParams::for_instance(&inst, 0.1);
        let z = solve_lp(&to_packing(&inst, &params)).unwrap().x;
        let pt = ComplementPoint::from_columns(&inst, &z);
        let rep = restore_and_repair(&inst, &pt, &params).unwrap();
        assert_eq!(rep.s_size, 0);
        assert!(rep.reset_vars.is_empty());
        assert!(rep.infeasibility <= params.eps + 1e-9);
        for v in 0..3 {
            for a in 0..2 {
                assert!((rep.solution.x[v][a] - (1.0 - pt.x[v][a])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deficient_block_is_reset() {
        let inst = triangle();
        let params = PipelineParams {
            eps_dprime: 0.3,
            ..PipelineParams::for_instance(&inst, 0.1)
        };
        let z = solve_lp(&to_packing(&inst, &params)).unwrap().x;
        let mut pt = ComplementPoint::from_columns(&inst, &z);
        pt.xbar[1][0] = (0.5 - pt.x[1][0]).max(0.0);
        let rep = restore_and_repair(&inst, &pt, &params).unwrap();
        assert_eq!(rep.reset_vars, vec![1]);
        assert_eq!(rep.reset_constraints, vec![0, 1]);
        for &c in &rep.reset_constraints {
            assert!((rep.solution.mu[c].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let inst = triangle();
        let params = PipelineParams::for_instance(&inst, 0.1);
        let mut pt = ComplementPoint::from_columns(&inst, &vec![0.0; 2 * (6 + 12)]);
        pt.x[0][0] = 2.0;
        assert!(matches!(
            restore_and_repair(&inst, &pt, &params),
            Err(Error::NotFeasibleForLp3(_))
        ));
    }
}
