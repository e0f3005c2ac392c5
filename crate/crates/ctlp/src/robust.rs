//! Turning ε-infeasible BasicLP solutions into feasible ones: surgery on the
//! marginals, Fourier smoothing of the local distributions, and the combined repair.

use serde::Serialize;

use crate::csp::{decode, CspInstance};
use crate::error::{Error, Result};
use crate::lp::{infeasibility, lp_value, LpSolution};

/// Orthonormal characters `χ_1 ≡ 1, …, χ_q` under `E_{a∈[q]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterBasis {
    pub q: usize,
    /// `chi[i][a]`
    pub chi: Vec<Vec<f64>>,
}

/// Gram–Schmidt over `1, 1_{a=0}, 1_{a=1}, …`, first nonzero entry positive.
///
/// ```
/// let b = ctlp::robust::build_basis(2);
/// assert_eq!(b.chi[1], vec![1.0, -1.0]);
/// ```
pub fn build_basis(q: usize) -> CharacterBasis {
    assert!(q >= 2, "alphabet must have at least two values");
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / q as f64;
    let mut chi: Vec<Vec<f64>> = vec![vec![1.0; q]];
    for e in 0..q {
        if chi.len() == q {
            break;
        }
        let mut v: Vec<f64> = (0..q).map(|a| (a == e) as u8 as f64).collect();
        // two passes keep the basis orthogonal to machine precision
        for _ in 0..2 {
            for c in &chi {
                let p = dot(&v, c);
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-9 {
            continue;
        }
        let sign = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        chi.push(v.iter().map(|x| sign * x / norm).collect());
    }
    CharacterBasis { q, chi }
}

impl CharacterBasis {
    /// Largest `|χ_i(a)|`.
    pub fn k_bound(&self) -> f64 {
        self.chi.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// Applies `m` along every axis of a `q^k` table.
    fn along_axes(&self, k: usize, values: &[f64], m: &dyn Fn(usize, usize) -> f64) -> Vec<f64> {
        let q = self.q;
        let mut cur = values.to_vec();
        for axis in 0..k {
            let stride = q.pow((k - 1 - axis) as u32);
            let mut next = vec![0.0; cur.len()];
            for (idx, out) in next.iter_mut().enumerate() {
                let digit = (idx / stride) % q;
                let base = idx - digit * stride;
                *out = (0..q).map(|a| m(digit, a) * cur[base + a * stride]).sum();
            }
            cur = next;
        }
        cur
    }
}

/// A function on `[q]^k`, optionally with its transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTable {
    pub k: usize,
    pub f: Vec<f64>,
    pub hat: Option<Vec<f64>>,
}

impl LocalTable {
    pub fn new(k: usize, f: Vec<f64>) -> Self {
        LocalTable { k, f, hat: None }
    }
}

/// `f̂(σ) = Σ_β f(β) χ_σ(β)`.
pub fn hat(basis: &CharacterBasis, t: &LocalTable) -> LocalTable {
    let h = basis.along_axes(t.k, &t.f, &|s, a| basis.chi[s][a]);
    LocalTable {
        k: t.k,
        f: t.f.clone(),
        hat: Some(h),
    }
}

/// `f(β) = E_σ[f̂(σ) χ_σ(β)]`, reading `t.hat`.
pub fn unhat(basis: &CharacterBasis, t: &LocalTable) -> LocalTable {
    let h = t.hat.as_ref().expect("table has coefficients");
    let q = basis.q as f64;
    let f = basis.along_axes(t.k, h, &|b, s| basis.chi[s][b] / q);
    LocalTable {
        k: t.k,
        f,
        hat: t.hat.clone(),
    }
}

/// Rescales each row of `x` to sum to one.
///
/// ```
/// let x = ctlp::robust::surgery(&[vec![0.5, 0.6]]).unwrap();
/// assert!((x[0][0] - 5.0 / 11.0).abs() < 1e-15);
/// ```
pub fn surgery(x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter()
        .enumerate()
        .map(|(v, row)| {
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                Err(Error::ZeroRow(v))
            } else {
                Ok(row.iter().map(|a| a / s).collect())
            }
        })
        .collect()
}

/// Output of [`smooth`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Smoothed {
    pub table: Vec<f64>,
    /// mixing weight toward uniform
    pub delta: f64,
    /// measured marginal infeasibility of the input pair
    pub eps: f64,
}

/// `max_{i,a} |Pr_μ[β_i = a] − x_{i,a}|`.
pub fn marginal_gap(q: usize, table: &[f64], x: &[Vec<f64>]) -> f64 {
    let k = x.len();
    let m = marginals(q, k, table);
    let mut worst = 0.0f64;
    for i in 0..k {
        for a in 0..q {
            worst = worst.max((m[i][a] - x[i][a]).abs());
        }
    }
    worst
}

/// Marginals of a table over `[q]^k`.
pub fn marginals(q: usize, k: usize, table: &[f64]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; q]; k];
    let mut vals = vec![0; k];
    for (b, &p) in table.iter().enumerate() {
        decode(b, q, &mut vals);
        for (i, &a) in vals.iter().enumerate() {
            m[i][a] += p;
        }
    }
    m
}

/// Smooths `μ_P` toward the marginals `x` (rows summing to one), with
/// `δ = min(1, k q³ ε)` and `ε` measured on the pair.
pub fn smooth(basis: &CharacterBasis, table: &[f64], x: &[Vec<f64>]) -> Result<Smoothed> {
    let q = basis.q;
    let eps = marginal_gap(q, table, x);
    let delta = (x.len() as f64 * (q as f64).powi(3) * eps).min(1.0);
    smooth_with_delta(basis, table, x, delta)
}

/// [`smooth`] with a caller-chosen `δ`; nonnegativity needs `δ ≥ k q³ ε`.
pub fn smooth_with_delta(basis: &CharacterBasis, table: &[f64], x: &[Vec<f64>], delta: f64) -> Result<Smoothed> {
    let q = basis.q;
    let k = x.len();
    if table.len() != q.pow(k as u32) || table.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::NotADistribution);
    }
    let eps = marginal_gap(q, table, x);
    let delta = delta.clamp(0.0, 1.0);
    let mut t = hat(basis, &LocalTable::new(k, table.to_vec()));
    let h = t.hat.as_mut().expect("just computed");
    // the constant coefficient is ĝ_i(1) = 1 for every i
    h[0] = 1.0;
    for (i, xi) in x.iter().enumerate() {
        let stride = q.pow((k - 1 - i) as u32);
        for s in 1..q {
            h[s * stride] = (0..q).map(|a| xi[a] * basis.chi[s][a]).sum();
        }
    }
    let fp = unhat(basis, &t).f;
    let u = 1.0 / table.len() as f64;
    let out = fp.iter().map(|v| (1.0 - delta) * v + delta * u).collect();
    Ok(Smoothed { table: out, delta, eps })
}

/// Feasible repair with its accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairReport {
    pub solution: LpSolution,
    /// measured infeasibility of the input
    pub eps_in: f64,
    /// measured infeasibility after surgery
    pub eps_surgery: f64,
    pub delta: f64,
    /// `value(input) − value(output)`
    pub loss: f64,
    /// `Σ_P w_P ‖μ_P − μ′_P‖₁`
    pub l1_bound: f64,
    /// infeasibility of the output
    pub eps_out: f64,
}

impl RepairReport {
    /// `loss / (ε_in · w_I)`, or 0 when there is nothing to compare.
    pub fn loss_ratio(&self, inst: &CspInstance) -> f64 {
        let d = self.eps_in * inst.total_weight();
        if d > 0.0 {
            self.loss / d
        } else {
            0.0
        }
    }
}

/// Surgery, smoothing of every table with one common `δ`, then `x″ = (1−δ)x′ + δ/q`.
///
/// `δ = min(1, k_max q³ ε′)` where `ε′` is the infeasibility measured after surgery
/// and `k_max` the largest number of distinct variables in a constraint.
pub fn repair_to_feasible(inst: &CspInstance, sol: &LpSolution) -> Result<RepairReport> {
    let eps_in = infeasibility(inst, sol)?;
    let q = inst.q;
    let xs = surgery(&sol.x)?;
    let mid = LpSolution {
        x: xs.clone(),
        mu: sol.mu.clone(),
        value: sol.value,
    };
    let eps_surgery = infeasibility(inst, &mid)?;
    let k_max = (0..inst.num_constraints())
        .map(|c| inst.distinct_vars(c).len())
        .max()
        .unwrap_or(0);
    let delta = (k_max as f64 * (q as f64).powi(3) * eps_surgery).min(1.0);
    let basis = build_basis(q);
    let mut mu = Vec::with_capacity(inst.num_constraints());
    let mut l1_bound = 0.0;
    for c in 0..inst.num_constraints() {
        let margs: Vec<Vec<f64>> = inst.distinct_vars(c).iter().map(|&v| xs[v].clone()).collect();
        let sm = smooth_with_delta(&basis, &sol.mu[c], &margs, delta)?;
        let l1: f64 = sm.table.iter().zip(&sol.mu[c]).map(|(a, b)| (a - b).abs()).sum();
        l1_bound += inst.constraints[c].weight * l1;
        // round-off can leave entries like -1e-18
        mu.push(sm.table.into_iter().map(|v| v.max(0.0)).collect());
    }
    let x = xs
        .iter()
        .map(|row| row.iter().map(|a| (1.0 - delta) * a + delta / q as f64).collect())
        .collect();
    let mut out = LpSolution { x, mu, value: 0.0 };
    out.value = lp_value(inst, &out);
    let eps_out = infeasibility(inst, &out)?;
    Ok(RepairReport {
        loss: lp_value(inst, sol) - out.value,
        solution: out,
        eps_in,
        eps_surgery,
        delta,
        l1_bound,
        eps_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for q in 2..6 {
            let b = build_basis(q);
            assert_eq!(b.chi.len(), q);
            for i in 0..q {
                for j in 0..q {
                    let e: f64 = (0..q).map(|a| b.chi[i][a] * b.chi[j][a]).sum::<f64>() / q as f64;
                    assert!((e - (i == j) as u8 as f64).abs() < 1e-12);
                }
            }
            assert!(b.k_bound() <= (q as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn uniform_hat_is_delta() {
        let b = build_basis(3);
        let t = hat(&b, &LocalTable::new(2, vec![1.0 / 9.0; 9]));
        let h = t.hat.unwrap();
        assert!((h[0] - 1.0).abs() < 1e-12);
        assert!(h[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn point_mass_hat() {
        let b = build_basis(2);
        let h = hat(&b, &LocalTable::new(1, vec![1.0, 0.0])).hat.unwrap();
        assert_eq!(h, vec![1.0, 1.0]);
        let h = hat(&b, &LocalTable::new(1, vec![0.0, 1.0])).hat.unwrap();
        assert_eq!(h, vec![1.0, -1.0]);
    }

    #[test]
    fn surgery_cases() {
        let x = surgery(&[vec![0.5, 0.6]]).unwrap();
        assert!((x[0][1] - 6.0 / 11.0).abs() < 1e-15);
        assert_eq!(surgery(&[vec![0.25, 0.75]]).unwrap(), vec![vec![0.25, 0.75]]);
        assert_eq!(surgery(&[vec![0.0, 0.0]]).unwrap_err(), Error::ZeroRow(0));
    }

    #[test]
    fn product_of_own_marginals_is_fixed() {
        let b = build_basis(2);
        let x = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let table: Vec<f64> = (0..4).map(|i| x[0][i / 2] * x[1][i % 2]).collect();
        let sm = smooth(&b, &table, &x).unwrap();
        assert!(sm.eps < 1e-15);
        for (a, b) in sm.table.iter().zip(&table) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
