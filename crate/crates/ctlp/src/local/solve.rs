//! The round-limited local packing solver.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use super::graph::{build_ball, CommGraphView, PackingSource};
use crate::lp::{solve_lp, ColumnLabel, LinearProgram, Relation, RowLabel};

/// Rows whose load exceeds `c(1 − GUARD)` are scaled down to exactly that,
/// which keeps the scaled loads at or below `c` in floating point.
pub const GUARD: f64 = 1e-12;

/// Knobs of the local solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSolverParams {
    pub eps: f64,
    /// constant in front of `ln Γ_p ln Γ_d / ε⁴`
    pub kappa: f64,
    /// ascent step
    pub eta: f64,
    /// hard cap on the number of rounds
    pub max_rounds: usize,
    /// components with at most this many columns and diameter at most `r + 1`
    /// are solved exactly
    pub exact_cap: usize,
}

impl LocalSolverParams {
    pub fn new(eps: f64) -> Self {
        LocalSolverParams {
            eps,
            kappa: 1.0,
            eta: 0.25,
            max_rounds: 64,
            exact_cap: 5000,
        }
    }

    /// `r = ceil(κ ln Γ_p ln Γ_d / ε⁴)`, clamped to `[1, max_rounds]`.
    pub fn rounds(&self, gamma_p: f64, gamma_d: f64) -> usize {
        let raw = self.kappa * gamma_p.ln().max(0.0) * gamma_d.ln().max(0.0) / self.eps.powi(4);
        if !raw.is_finite() || raw >= self.max_rounds as f64 {
            return self.max_rounds.max(1);
        }
        (raw.ceil() as usize).clamp(1, self.max_rounds.max(1))
    }
}

/// Dense index of a view: columns, rows as column-index lists.
struct Indexed<C> {
    cols: Vec<C>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    col_rows: Vec<Vec<usize>>,
}

fn index<C: Copy + Hash + Eq, R: Hash + Eq>(view: &CommGraphView<C, R>) -> Indexed<C> {
    let cols: Vec<C> = view.columns.iter().map(|&(c, _)| c).collect();
    let pos: HashMap<C, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let rows: Vec<(Vec<(usize, f64)>, f64)> = view
        .rows
        .iter()
        .map(|(_, coeffs, rhs)| (coeffs.iter().map(|&(c, a)| (pos[&c], a)).collect(), *rhs))
        .collect();
    let mut col_rows = vec![Vec::new(); cols.len()];
    for (j, (coeffs, _)) in rows.iter().enumerate() {
        for &(i, _) in coeffs {
            col_rows[i].push(j);
        }
    }
    Indexed { cols, rows, col_rows }
}

fn loads(rows: &[(Vec<(usize, f64)>, f64)], z: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|(coeffs, _)| coeffs.iter().map(|&(i, a)| a * z[i]).sum())
        .collect()
}

/// Phase 2: `z′_i = z_i · min_{j∋i} min(1, c_j/load_j)` (with the guard).
fn scale_down(ix: &Indexed<impl Copy>, z: &[f64]) -> Vec<f64> {
    let load = loads(&ix.rows, z);
    let factor: Vec<f64> = ix
        .rows
        .iter()
        .zip(&load)
        .map(|((_, c), &l)| {
            let cap = c * (1.0 - GUARD);
            if l > cap {
                if l > 0.0 {
                    cap / l
                } else {
                    0.0
                }
            } else {
                1.0
            }
        })
        .collect();
    z.iter()
        .enumerate()
        .map(|(i, &zi)| zi * ix.col_rows[i].iter().map(|&j| factor[j]).fold(1.0, f64::min))
        .collect()
}

/// `r` rounds of multiplicative ascent followed by the scaling round, on
/// every column of the view. Values are exact for columns within distance
/// `radius − r − 2` of the boundary-free part.
fn ascent<C: Copy>(ix: &Indexed<C>, gamma_d: f64, rounds: usize, eta: f64) -> Vec<f64> {
    let n = ix.cols.len();
    let mut z: Vec<f64> = (0..n)
        .map(|i| {
            ix.col_rows[i]
                .iter()
                .map(|&j| {
                    let (coeffs, c) = &ix.rows[j];
                    let a = coeffs.iter().find(|&&(k, _)| k == i).map_or(1.0, |&(_, a)| a);
                    c / (a * gamma_d)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    for _ in 0..rounds {
        let load = loads(&ix.rows, &z);
        let slack: Vec<f64> = ix
            .rows
            .iter()
            .zip(&load)
            .map(|((_, c), &l)| if *c > 0.0 { (c - l) / c } else { -1.0 })
            .collect();
        for (i, zi) in z.iter_mut().enumerate() {
            let m = ix.col_rows[i].iter().map(|&j| slack[j]).fold(f64::INFINITY, f64::min);
            let m = if m.is_finite() { m } else { 0.0 };
            *zi *= (1.0 + eta * m).clamp(1.0, 1.0 + eta);
        }
    }
    scale_down(ix, &z)
}

/// Exact optimum of a whole component with the dense simplex, then the guard.
fn exact<C: Copy>(ix: &Indexed<C>) -> Option<Vec<f64>> {
    let mut lp = LinearProgram::default();
    for i in 0..ix.cols.len() {
        lp.add_column(ColumnLabel::Free(i), 1.0);
    }
    for (j, (coeffs, c)) in ix.rows.iter().enumerate() {
        lp.add_row(RowLabel::Free(j), coeffs.clone(), Relation::Le, *c);
    }
    let out = solve_lp(&lp).ok()?;
    Some(scale_down(ix, &out.x))
}

/// Column-hop diameter of a closed view.
fn diameter<C>(ix: &Indexed<C>) -> usize {
    let n = ix.cols.len();
    let mut best = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for &j in &ix.col_rows[i] {
                for &(k, _) in &ix.rows[j].0 {
                    if dist[k] == usize::MAX {
                        dist[k] = dist[i] + 1;
                        best = best.max(dist[k]);
                        queue.push_back(k);
                    }
                }
            }
        }
    }
    best
}

/// How the values of a view were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMode {
    /// whole small component, exact optimum
    Exact,
    /// whole component, ascent run on all of it
    Component,
    /// ascent on a ball that does not close
    Ball,
}

/// Local solver state: the source, the round count and a per-component cache.
///
/// The cache stores values of closed components keyed by their smallest
/// column. Balls are still rebuilt on every call, so query costs are honest.
pub struct LocalSolver<S: PackingSource> {
    pub src: S,
    pub params: LocalSolverParams,
    pub rounds: usize,
    gamma_d: f64,
    cache: HashMap<S::Col, (SolveMode, HashMap<S::Col, f64>)>,
}

impl<S: PackingSource> LocalSolver<S> {
    /// `gamma_p`, `gamma_d` are known bounds (they set `r` and the start point).
    pub fn new(src: S, params: LocalSolverParams, gamma_p: f64, gamma_d: f64) -> Self {
        LocalSolver {
            src,
            params,
            rounds: params.rounds(gamma_p, gamma_d),
            gamma_d: gamma_d.max(1.0),
            cache: HashMap::new(),
        }
    }

    /// Ball radius needed for one value: `r + 2`.
    pub fn radius(&self) -> usize {
        self.rounds + 2
    }

    /// Packing values of `centers` and the ball they came from.
    pub fn solve_block(&mut self, centers: &[S::Col]) -> (Vec<f64>, CommGraphView<S::Col, S::Row>, SolveMode) {
        let radius = self.radius();
        let view = build_ball(&mut self.src, centers, radius);
        if view.closed {
            let key = view.columns.iter().map(|&(c, _)| c).min().expect("nonempty view");
            if !self.cache.contains_key(&key) {
                let ix = index(&view);
                let small = ix.cols.len() <= self.params.exact_cap && diameter(&ix) <= self.rounds + 1;
                let solved = if small { exact(&ix).map(|v| (SolveMode::Exact, v)) } else { None };
                let (mode, vals) = solved
                    .unwrap_or_else(|| (SolveMode::Component, ascent(&ix, self.gamma_d, self.rounds, self.params.eta)));
                self.cache.insert(key, (mode, ix.cols.iter().copied().zip(vals).collect()));
            }
            let (mode, vals) = &self.cache[&key];
            let out = centers.iter().map(|c| vals[c]).collect();
            return (out, view, *mode);
        }
        let ix = index(&view);
        let vals = ascent(&ix, self.gamma_d, self.rounds, self.params.eta);
        let pos: HashMap<S::Col, usize> = ix.cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let out = centers.iter().map(|c| vals[pos[c]]).collect();
        (out, view, SolveMode::Ball)
    }

    /// Packing value of one column.
    pub fn solve(&mut self, col: S::Col) -> f64 {
        self.solve_block(&[col]).0[0]
    }
}

/// One-shot local solve of a single column.
///
/// ```
/// use ctlp::local::{local_packing_solve, ExplicitSource, LocalSolverParams};
/// // max z subject to z ≤ 2.5
/// let src = ExplicitSource::new(1, vec![(vec![(0, 1.0)], 2.5)]);
/// let z = local_packing_solve(src, 0, LocalSolverParams::new(0.2), 1.0, 1.0);
/// assert!((z - 2.5).abs() < 1e-9);
/// ```
pub fn local_packing_solve<S: PackingSource>(src: S, col: S::Col, params: LocalSolverParams, gamma_p: f64, gamma_d: f64) -> f64 {
    LocalSolver::new(src, params, gamma_p, gamma_d).solve(col)
}
