//! Dense two-phase simplex with Bland's rule.

use super::{LinearProgram, LpOutcome, Relation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_columns: usize,
    pub tol: f64,
    pub max_pivots: usize,
    /// re-solve the final basis with iterative refinement when it has at most this many rows
    pub refine_rows: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_columns: 50_000,
            tol: 1e-9,
            max_pivots: 2_000_000,
            refine_rows: 1500,
        }
    }
}

/// Solves `lp` to optimality.
///
/// ```
/// use ctlp::lp::{LinearProgram, ColumnLabel, RowLabel, Relation, solve_lp};
/// let mut lp = LinearProgram::default();
/// let z = lp.add_column(ColumnLabel::Free(0), 1.0);
/// lp.add_row(RowLabel::Free(0), vec![(z, 1.0)], Relation::Le, 1.0);
/// assert!((solve_lp(&lp).unwrap().value - 1.0).abs() < 1e-12);
/// ```
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_lp_with(lp, SimplexOptions::default())
}

struct Tableau {
    width: usize,
    rows: Vec<Vec<f64>>,
    /// reduced costs `z_j − c_j`; last entry is the objective value
    d: Vec<f64>,
    basis: Vec<usize>,
    /// columns allowed to enter
    allowed: Vec<bool>,
    tol: f64,
    /// threshold on reduced costs
    dtol: f64,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        self.pivots += 1;
        let inv = 1.0 / self.rows[r][e];
        let nz: Vec<usize> = {
            let row = &mut self.rows[r];
            let mut nz = Vec::new();
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < 1e-14 {
                        *v = 0.0;
                    } else {
                        nz.push(j);
                    }
                }
            }
            nz
        };
        self.rows[r][e] = 1.0;
        let prow = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < 1e-13 { 0.0 } else { v };
            }
            row[e] = 0.0;
        }
        let f = self.d[e];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
            self.d[e] = 0.0;
        }
        self.rows[r] = prow;
        self.basis[r] = e;
    }

    /// Runs Bland's rule until optimal; `Err(Unbounded)` if a column has no limit.
    fn optimize(&mut self) -> Result<()> {
        loop {
            if self.pivots >= self.max_pivots {
                return Err(Error::IterationLimit(self.pivots));
            }
            let Some(e) = (0..self.width).find(|&j| self.allowed[j] && self.d[j] < -self.dtol) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][e];
                if a > self.tol {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, e);
        }
    }

    fn set_costs(&mut self, cost: &[f64]) {
        for j in 0..=self.width {
            let mut z = 0.0;
            for (i, row) in self.rows.iter().enumerate() {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    z += cb * row[j];
                }
            }
            self.d[j] = if j < self.width { z - cost[j] } else { z };
        }
    }
}

pub fn solve_lp_with(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpOutcome> {
    let nv = lp.num_columns();
    if nv > opts.max_columns {
        return Err(Error::SizeLimit(nv));
    }
    let m = lp.rows.len();
    // normalize to nonnegative right-hand sides
    let mut rels = Vec::with_capacity(m);
    let mut signs = Vec::with_capacity(m);
    for row in &lp.rows {
        let flip = row.rhs < 0.0;
        let rel = match (row.rel, flip) {
            (r, false) => r,
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (Relation::Eq, true) => Relation::Eq,
        };
        rels.push(rel);
        signs.push(if flip { -1.0 } else { 1.0 });
    }
    let n_slack = rels.iter().filter(|&&r| r != Relation::Eq).count();
    let n_art = rels.iter().filter(|&&r| r != Relation::Le).count();
    let width = nv + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (nv, nv + n_slack);
    for (i, row) in lp.rows.iter().enumerate() {
        let mut dense = vec![0.0; width + 1];
        for &(j, a) in &row.coeffs {
            dense[j] += signs[i] * a;
        }
        dense[width] = signs[i] * row.rhs;
        match rels[i] {
            Relation::Le => {
                dense[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                dense[next_slack] = -1.0;
                next_slack += 1;
                dense[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                dense[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(dense);
    }
    let art_start = nv + n_slack;
    let mut origin: Vec<usize> = (0..m).collect();
    let orig = if m <= opts.refine_rows { Some(rows.clone()) } else { None };
    let mut tab = Tableau {
        width,
        rows,
        d: vec![0.0; width + 1],
        basis,
        allowed: vec![true; width],
        tol: opts.tol,
        dtol: opts.tol,
        pivots: 0,
        max_pivots: opts.max_pivots,
    };

    if n_art > 0 {
        let mut c1 = vec![0.0; width];
        for c in c1.iter_mut().skip(art_start) {
            *c = -1.0;
        }
        tab.set_costs(&c1);
        tab.optimize()?;
        let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if tab.d[width] < -1e-7 * scale {
            return Err(Error::Infeasible);
        }
        // drive remaining artificials out of the basis
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                let e = (0..art_start).find(|&j| tab.rows[i][j].abs() > 1e-9);
                match e {
                    Some(e) => tab.pivot(i, e),
                    None => {
                        // redundant row
                        tab.rows.swap_remove(i);
                        tab.basis.swap_remove(i);
                        origin.swap_remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        for a in tab.allowed.iter_mut().skip(art_start) {
            *a = false;
        }
    }

    let mut c2 = vec![0.0; width];
    c2[..nv].copy_from_slice(&lp.objective);
    // reduced costs carry the scale of the objective
    let cmax = lp.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    tab.dtol = opts.tol.max(1e-13 * cmax);
    tab.set_costs(&c2);
    tab.optimize()?;

    let mut xb: Vec<f64> = (0..tab.rows.len()).map(|i| tab.rhs(i)).collect();
    if let Some(orig) = &orig {
        if let Some(r) = refine_basis(orig, &origin, &tab.basis, width, &xb) {
            xb = r;
        }
    }
    let mut x = vec![0.0; nv];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < nv {
            let v = xb[i];
            x[b] = if v < 0.0 { 0.0 } else { v };
        }
    }
    Ok(LpOutcome {
        value: lp.value(&x),
        x,
    })
}

/// Recomputes basic values from the original rows, with two refinement steps.
///
/// Long pivot sequences leave round-off of order `1e-13` in the tableau, which
/// matters once objective coefficients reach `1e7`.
fn refine_basis(orig: &[Vec<f64>], origin: &[usize], basis: &[usize], width: usize, start: &[f64]) -> Option<Vec<f64>> {
    let k = basis.len();
    let mut b = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (r, &o) in origin.iter().enumerate() {
        for (c, &j) in basis.iter().enumerate() {
            b[r * k + c] = orig[o][j];
        }
        rhs[r] = orig[o][width];
    }
    let lu = Lu::factor(b.clone(), k)?;
    let mut x = start.to_vec();
    for _ in 0..3 {
        let res: Vec<f64> = (0..k)
            .map(|r| rhs[r] - (0..k).map(|c| b[r * k + c] * x[c]).sum::<f64>())
            .collect();
        let dx = lu.solve(res);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    // refinement must stay close to the tableau values; otherwise keep them
    let drift = x.iter().zip(start).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (drift < 1e-6).then_some(x)
}

struct Lu {
    k: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, k: usize) -> Option<Lu> {
        let mut perm: Vec<usize> = (0..k).collect();
        for col in 0..k {
            let p = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
            if a[p * k + col].abs() < 1e-12 {
                return None;
            }
            if p != col {
                for j in 0..k {
                    a.swap(p * k + j, col * k + j);
                }
                perm.swap(p, col);
            }
            let piv = a[col * k + col];
            for i in col + 1..k {
                let f = a[i * k + col] / piv;
                if f == 0.0 {
                    continue;
                }
                a[i * k + col] = f;
                for j in col + 1..k {
                    a[i * k + j] -= f * a[col * k + j];
                }
            }
        }
        Some(Lu { k, a, perm })
    }

    fn solve(&self, b: Vec<f64>) -> Vec<f64> {
        let k = self.k;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..k {
            for j in 0..i {
                y[i] -= self.a[i * k + j] * y[j];
            }
        }
        for i in (0..k).rev() {
            for j in i + 1..k {
                y[i] -= self.a[i * k + j] * y[j];
            }
            y[i] /= self.a[i * k + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{ColumnLabel, RowLabel};

    fn col(lp: &mut LinearProgram, c: f64) -> usize {
        let k = lp.num_columns();
        lp.add_column(ColumnLabel::Free(k), c)
    }

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::default();
        let z = col(&mut lp, 1.0);
        lp.add_row(RowLabel::Free(0), vec![(z, 1.0)], Relation::Le, 1.0);
        assert!((solve_lp(&lp).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, 3.0);
        let y = col(&mut lp, 5.0);
        lp.add_row(RowLabel::Free(0), vec![(x, 1.0)], Relation::Le, 4.0);
        lp.add_row(RowLabel::Free(1), vec![(y, 2.0)], Relation::Le, 12.0);
        lp.add_row(RowLabel::Free(2), vec![(x, 3.0), (y, 2.0)], Relation::Le, 18.0);
        let out = solve_lp(&lp).unwrap();
        assert!((out.value - 36.0).abs() < 1e-9);
        assert!((out.x[0] - 2.0).abs() < 1e-9 && (out.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x - y, x + y = 2, y ≥ 0.5 → 1
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, 1.0);
        let y = col(&mut lp, -1.0);
        lp.add_row(RowLabel::Free(0), vec![(x, 1.0), (y, 1.0)], Relation::Eq, 2.0);
        lp.add_row(RowLabel::Free(1), vec![(y, 1.0)], Relation::Ge, 0.5);
        let out = solve_lp(&lp).unwrap();
        assert!((out.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        // max -x, -x ≤ -3 → -3
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, -1.0);
        lp.add_row(RowLabel::Free(0), vec![(x, -1.0)], Relation::Le, -3.0);
        assert!((solve_lp(&lp).unwrap().value + 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_unbounded_and_infeasible() {
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, 1.0);
        lp.add_row(RowLabel::Free(0), vec![(x, 1.0)], Relation::Ge, 1.0);
        assert_eq!(solve_lp(&lp).unwrap_err(), Error::Unbounded);
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, 1.0);
        lp.add_row(RowLabel::Free(0), vec![(x, 1.0)], Relation::Le, 1.0);
        lp.add_row(RowLabel::Free(1), vec![(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap_err(), Error::Infeasible);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::default();
        let x = col(&mut lp, 1.0);
        let y = col(&mut lp, 1.0);
        lp.add_row(RowLabel::Free(0), vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0);
        lp.add_row(RowLabel::Free(1), vec![(x, 2.0), (y, 2.0)], Relation::Eq, 2.0);
        assert!((solve_lp(&lp).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn size_limit() {
        let mut lp = LinearProgram::default();
        for _ in 0..5 {
            col(&mut lp, 1.0);
        }
        let opts = SimplexOptions {
            max_columns: 4,
            ..Default::default()
        };
        assert_eq!(solve_lp_with(&lp, opts).unwrap_err(), Error::SizeLimit(5));
    }
}
