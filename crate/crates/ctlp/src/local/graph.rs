//! Packing programs seen through local access, and balls in their
//! column/row communication graph.

use std::collections::{HashMap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use crate::csp::ConstraintOracle;
use crate::lp::{marginal_entries, ColumnLabel, RowLabel};
use crate::pipeline::{row_multiplier, PackingProgram, PipelineParams};

/// Local access to a restricted packing program `max 1ᵀy, Ay ≤ c, y ≥ 0`.
pub trait PackingSource {
    type Col: Copy + Ord + Hash + Debug;
    type Row: Copy + Ord + Hash + Debug;

    /// Rows containing `col`, ascending. May spend oracle queries.
    fn rows_of(&mut self, col: Self::Col) -> Vec<Self::Row>;
    /// Coefficients (ascending by column) and right-hand side of `row`.
    fn row_data(&mut self, row: Self::Row) -> (Vec<(Self::Col, f64)>, f64);
    /// Oracle queries spent so far.
    fn queries(&self) -> u64;
    /// Called before each ball is built; drops per-ball memos.
    fn reset_memo(&mut self) {}
}

/// A [`PackingProgram`] (or any explicit program) with free access.
#[derive(Debug, Clone)]
pub struct ExplicitSource {
    col_rows: Vec<Vec<usize>>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl ExplicitSource {
    pub fn new(num_columns: usize, rows: Vec<(Vec<(usize, f64)>, f64)>) -> Self {
        let mut col_rows = vec![Vec::new(); num_columns];
        let mut rows = rows;
        for (j, (coeffs, _)) in rows.iter_mut().enumerate() {
            coeffs.sort_by_key(|&(i, _)| i);
            for &(i, _) in coeffs.iter() {
                col_rows[i].push(j);
            }
        }
        ExplicitSource { col_rows, rows }
    }

    pub fn from_program(p: &PackingProgram) -> Self {
        Self::new(
            p.num_columns(),
            p.rows.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect(),
        )
    }
}

impl PackingSource for ExplicitSource {
    type Col = usize;
    type Row = usize;

    fn rows_of(&mut self, col: usize) -> Vec<usize> {
        self.col_rows[col].clone()
    }

    fn row_data(&mut self, row: usize) -> (Vec<(usize, f64)>, f64) {
        self.rows[row].clone()
    }

    fn queries(&self) -> u64 {
        0
    }
}

/// The restricted packing LP of a CSP instance, derived on the fly from
/// constraint-oracle answers and the public parameters.
#[derive(Debug, Clone)]
pub struct CspPackingSource<'a> {
    oracle: ConstraintOracle<'a>,
    pub params: PipelineParams,
    incident: HashMap<usize, Vec<usize>>,
}

impl<'a> CspPackingSource<'a> {
    pub fn new(oracle: ConstraintOracle<'a>, params: PipelineParams) -> Self {
        CspPackingSource {
            oracle,
            params,
            incident: HashMap::new(),
        }
    }

    pub fn oracle(&self) -> &ConstraintOracle<'a> {
        &self.oracle
    }

    /// Incident constraints of `v`, asking the oracle at most once per ball.
    fn incident(&mut self, v: usize) -> Vec<usize> {
        if let Some(cs) = self.incident.get(&v) {
            return cs.clone();
        }
        let t = self.oracle.params().2;
        let mut cs = Vec::new();
        for i in 1..=t {
            match self.oracle.query(v, i) {
                Some((id, _)) => cs.push(id),
                None => break,
            }
        }
        self.incident.insert(v, cs.clone());
        cs
    }

    /// `y = scale · z` between packing and complemented-LP coordinates.
    pub fn scale(&self, col: ColumnLabel) -> f64 {
        let big = self.params.c_big;
        match col {
            ColumnLabel::Mu { c, b } => {
                if self.oracle.sat_table(c)[b] {
                    self.oracle.resolve(c).weight + big
                } else {
                    big
                }
            }
            _ => big,
        }
    }

    fn position(&self, c: usize, v: usize) -> usize {
        self.oracle
            .distinct_vars(c)
            .iter()
            .position(|&u| u == v)
            .expect("variable occurs in constraint")
    }

    fn digit(&self, c: usize, b: usize, j: usize) -> usize {
        let q = self.oracle.params().0;
        let k = self.oracle.distinct_vars(c).len();
        (b / q.pow((k - 1 - j) as u32)) % q
    }
}

impl PackingSource for CspPackingSource<'_> {
    type Col = ColumnLabel;
    type Row = RowLabel;

    fn rows_of(&mut self, col: ColumnLabel) -> Vec<RowLabel> {
        let mut out = match col {
            ColumnLabel::X { v, a } => {
                let mut r = vec![RowLabel::XSum { v }, RowLabel::XCouple { v, a }];
                r.extend(self.incident(v).into_iter().map(|c| RowLabel::XMarg { c, v, a }));
                r
            }
            ColumnLabel::XBar { v, a } => {
                let mut r = vec![RowLabel::XBarSum { v }, RowLabel::XCouple { v, a }];
                r.extend(self.incident(v).into_iter().map(|c| RowLabel::XBarMarg { c, v, a }));
                r
            }
            ColumnLabel::Mu { c, b } => {
                let d = self.oracle.distinct_vars(c);
                let mut r: Vec<RowLabel> = (0..d.len())
                    .map(|j| RowLabel::XMarg { c, v: d[j], a: self.digit(c, b, j) })
                    .collect();
                r.push(RowLabel::MuCouple { c, b });
                r
            }
            ColumnLabel::MuBar { c, b } => {
                let d = self.oracle.distinct_vars(c);
                let mut r: Vec<RowLabel> = (0..d.len())
                    .map(|j| RowLabel::XBarMarg { c, v: d[j], a: self.digit(c, b, j) })
                    .collect();
                r.push(RowLabel::MuCouple { c, b });
                r
            }
            ColumnLabel::Free(_) => Vec::new(),
        };
        out.sort();
        out
    }

    fn row_data(&mut self, row: RowLabel) -> (Vec<(ColumnLabel, f64)>, f64) {
        let (q, _, _, w) = self.oracle.params();
        let p = self.params;
        let m = row_multiplier(&row, w, p.c_big);
        let (cols, rhs): (Vec<ColumnLabel>, f64) = match row {
            RowLabel::XSum { v } => ((0..q).map(|a| ColumnLabel::X { v, a }).collect(), (q - 1) as f64 + p.eps),
            RowLabel::XBarSum { v } => ((0..q).map(|a| ColumnLabel::XBar { v, a }).collect(), 1.0 + p.eps),
            RowLabel::XMarg { c, v, a } => {
                let j = self.position(c, v);
                let mut cols = vec![ColumnLabel::X { v, a }];
                cols.extend(marginal_entries(self.oracle.instance(), c, j, a).map(|b| ColumnLabel::Mu { c, b }));
                (cols, 1.0 + p.eps)
            }
            RowLabel::XBarMarg { c, v, a } => {
                let j = self.position(c, v);
                let k = self.oracle.distinct_vars(c).len();
                let mut cols = vec![ColumnLabel::XBar { v, a }];
                cols.extend(marginal_entries(self.oracle.instance(), c, j, a).map(|b| ColumnLabel::MuBar { c, b }));
                (cols, (q as f64).powi(k as i32 - 1) + p.eps)
            }
            RowLabel::XCouple { v, a } => (vec![ColumnLabel::X { v, a }, ColumnLabel::XBar { v, a }], 1.0),
            RowLabel::MuCouple { c, b } => (vec![ColumnLabel::Mu { c, b }, ColumnLabel::MuBar { c, b }], 1.0),
            RowLabel::Bound { .. } | RowLabel::Free(_) => (Vec::new(), 0.0),
        };
        let mut coeffs: Vec<(ColumnLabel, f64)> = cols.into_iter().map(|col| (col, m * 1.0 / self.scale(col))).collect();
        coeffs.sort_by_key(|&(c, _)| c);
        (coeffs, m * rhs)
    }

    fn queries(&self) -> u64 {
        self.oracle.query_count()
    }

    fn reset_memo(&mut self) {
        self.incident.clear();
    }
}

/// The ball of radius `r` around a set of columns. One hop is column → row →
/// column; rows of every column closer than `r` are included.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraphView<C: Hash + Eq, R: Hash + Eq> {
    pub centers: Vec<C>,
    pub radius: usize,
    /// columns in discovery order with their hop distance
    pub columns: Vec<(C, usize)>,
    /// rows in discovery order with coefficients and right-hand side
    pub rows: Vec<(R, Vec<(C, f64)>, f64)>,
    /// every column lies strictly inside the radius, so the view is a whole component
    pub closed: bool,
    pub query_cost: u64,
}

impl<C: Copy + Hash + Eq, R: Hash + Eq> CommGraphView<C, R> {
    pub fn contains(&self, c: C) -> bool {
        self.columns.iter().any(|&(x, _)| x == c)
    }
}

/// Breadth-first exploration in ascending order; only columns with distance
/// below `r` are expanded.
pub fn build_ball<S: PackingSource>(src: &mut S, centers: &[S::Col], r: usize) -> CommGraphView<S::Col, S::Row> {
    src.reset_memo();
    let before = src.queries();
    let mut dist: HashMap<S::Col, usize> = HashMap::new();
    let mut seen_rows: HashMap<S::Row, ()> = HashMap::new();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    let mut queue = VecDeque::new();
    let mut cs = centers.to_vec();
    cs.sort();
    cs.dedup();
    for &c in &cs {
        dist.insert(c, 0);
        columns.push((c, 0));
        queue.push_back(c);
    }
    let mut closed = true;
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        if d >= r {
            closed = false;
            continue;
        }
        for row in src.rows_of(c) {
            if seen_rows.insert(row, ()).is_some() {
                continue;
            }
            let (coeffs, rhs) = src.row_data(row);
            for &(nc, _) in &coeffs {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(nc) {
                    e.insert(d + 1);
                    columns.push((nc, d + 1));
                    queue.push_back(nc);
                }
            }
            rows.push((row, coeffs, rhs));
        }
    }
    CommGraphView {
        centers: cs,
        radius: r,
        columns,
        rows,
        closed,
        query_cost: src.queries() - before,
    }
}
