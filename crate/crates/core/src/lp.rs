//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as
//!
//! ```text
//! minimize  c·x
//! s.t.      A_ub x ≤ b_ub
//!           A_eq x = b_eq
//!           l ≤ x ≤ u          (l may be -inf, u may be +inf)
//! ```
//!
//! and converted to `A y = b, y ≥ 0` by shifting, reflecting or splitting
//! variables. Pricing uses Dantzig's rule and falls back to Bland's rule after
//! a run of degenerate pivots, which rules out cycling.

use std::fmt::Write as _;

use thiserror::Error;

/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-10;
/// Absolute feasibility tolerance on row-scaled constraints.
pub const FEAS_TOL: f64 = 1e-8;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Program with the given costs, no rows and bounds `0 ≤ x < ∞`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ub.push(row.into_iter().map(|v| -v).collect());
        self.b_ub.push(-rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let dim = |msg: String| Err(LpError::Dimension(msg));
        if self.lower.len() != n || self.upper.len() != n {
            return dim(format!("{n} variables but {} lower / {} upper bounds", self.lower.len(), self.upper.len()));
        }
        if self.a_ub.len() != self.b_ub.len() {
            return dim(format!("{} inequality rows but {} right-hand sides", self.a_ub.len(), self.b_ub.len()));
        }
        if self.a_eq.len() != self.b_eq.len() {
            return dim(format!("{} equality rows but {} right-hand sides", self.a_eq.len(), self.b_eq.len()));
        }
        for (kind, rows) in [("inequality", &self.a_ub), ("equality", &self.a_eq)] {
            if let Some(i) = rows.iter().position(|r| r.len() != n) {
                return dim(format!("{kind} row {i} has {} entries, expected {n}", rows[i].len()));
            }
        }
        let bad_number = self
            .objective
            .iter()
            .chain(self.b_ub.iter())
            .chain(self.b_eq.iter())
            .chain(self.a_ub.iter().flatten())
            .chain(self.a_eq.iter().flatten())
            .any(|v| !v.is_finite())
            || self.lower.iter().any(|&l| l.is_nan() || l == f64::INFINITY)
            || self.upper.iter().any(|&u| u.is_nan() || u == f64::NEG_INFINITY);
        if bad_number {
            return dim("non-finite coefficient or malformed bound".into());
        }
        Ok(())
    }

    /// Plain-text dump, one constraint per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fmt_row = |row: &[f64]| row.iter().map(|v| format!("{v:>10.4}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "min   {}", fmt_row(&self.objective));
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            let _ = writeln!(out, "ub    {} <= {b}", fmt_row(row));
        }
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            let _ = writeln!(out, "eq    {} == {b}", fmt_row(row));
        }
        let _ = writeln!(out, "lower {}", fmt_row(&self.lower));
        let _ = writeln!(out, "upper {}", fmt_row(&self.upper));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; empty unless optimal.
    pub x: Vec<f64>,
    /// Optimum; `+inf` when infeasible and `-inf` when unbounded.
    pub objective_value: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, pivots: usize) -> Self {
        let objective_value = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            LpStatus::Optimal => unreachable!("optimal solutions carry a point"),
        };
        Self { status, x: Vec::new(), objective_value, pivots }
    }
}

// x_j = offset + Σ coef·y_col
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    // reduced costs of the active objective and of the phase-2 objective
    phase1: Vec<f64>,
    phase2: Vec<f64>,
    phase1_value: f64,
    phase2_value: f64,
    ncols: usize,
    // columns allowed to enter
    eligible: Vec<bool>,
    pivots: usize,
    pivot_limit: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rows[i][c] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        for (costs, value) in [(&mut self.phase1, &mut self.phase1_value), (&mut self.phase2, &mut self.phase2_value)] {
            let f = costs[c];
            if f != 0.0 {
                for (v, pv) in costs.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                costs[c] = 0.0;
                *value -= f * pivot_rhs;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn run(&mut self, phase_one: bool) -> Result<Outcome, LpError> {
        let mut degenerate_run = 0usize;
        loop {
            if self.pivots >= self.pivot_limit {
                return Err(LpError::IterationLimit(self.pivots));
            }
            let costs = if phase_one { &self.phase1 } else { &self.phase2 };
            let bland = degenerate_run >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -COST_TOL;
            for j in 0..self.ncols {
                if !self.eligible[j] || costs[j] >= -COST_TOL {
                    continue;
                }
                if bland {
                    entering = Some(j);
                    break;
                }
                if costs[j] < best {
                    best = costs[j];
                    entering = Some(j);
                }
            }
            let Some(c) = entering else {
                return Ok(Outcome::Optimal);
            };

            // ratio test, ties broken by smallest basic index
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((k, best_ratio)) => {
                            if ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leaving else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `lp` to a vertex optimum or classifies it as infeasible/unbounded.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // standard-form variables
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
        }
        let map = if l.is_finite() {
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            VarMap { offset: l, terms: vec![(ncols, 1.0)] }
        } else if u.is_finite() {
            VarMap { offset: u, terms: vec![(ncols, -1.0)] }
        } else {
            ncols += 1;
            VarMap { offset: 0.0, terms: vec![(ncols - 1, 1.0), (ncols, -1.0)] }
        };
        ncols += 1;
        maps.push(map);
    }
    let structural = ncols;

    let translate = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; structural];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            b -= a * maps[j].offset;
            for &(col, coef) in &maps[j].terms {
                out[col] += a * coef;
            }
        }
        (out, b)
    };

    // (row, rhs, has_slack)
    let mut raw: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        let (r, b) = translate(row, b);
        raw.push((r, b, true));
    }
    for &(col, cap) in &bound_rows {
        let mut r = vec![0.0; structural];
        r[col] = 1.0;
        raw.push((r, cap, true));
    }
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let (r, b) = translate(row, b);
        raw.push((r, b, false));
    }

    let m = raw.len();
    let slack_count = raw.iter().filter(|r| r.2).count();
    let first_artificial = structural + slack_count;

    // decide the starting basis before laying out the columns
    let mut needs_artificial = Vec::with_capacity(m);
    for (_, b, has_slack) in &raw {
        needs_artificial.push(!(*has_slack && *b >= 0.0));
    }
    let artificial_count = needs_artificial.iter().filter(|&&a| a).count();
    let total = first_artificial + artificial_count;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_col = structural;
    let mut art_col = first_artificial;
    for (i, (r, b, has_slack)) in raw.into_iter().enumerate() {
        let mut row = vec![0.0; total];
        row[..structural].copy_from_slice(&r);
        let slack = if has_slack {
            row[slack_col] = 1.0;
            slack_col += 1;
            Some(slack_col - 1)
        } else {
            None
        };
        let mut b = b;
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b = -b;
        }
        if needs_artificial[i] {
            row[art_col] = 1.0;
            basis.push(art_col);
            art_col += 1;
        } else {
            basis.push(slack.expect("slack-started row has a slack"));
        }
        rows.push(row);
        rhs.push(b);
    }

    let mut phase2 = vec![0.0; total];
    let mut phase2_value = 0.0;
    for (j, map) in maps.iter().enumerate() {
        phase2_value -= lp.objective[j] * map.offset;
        for &(col, coef) in &map.terms {
            phase2[col] += lp.objective[j] * coef;
        }
    }
    // phase-2 value is tracked as -(objective) in the usual tableau convention
    let mut phase1 = vec![0.0; total];
    for p in phase1.iter_mut().skip(first_artificial) {
        *p = 1.0;
    }
    let mut phase1_value = 0.0;
    for i in 0..m {
        if basis[i] >= first_artificial {
            for j in 0..total {
                phase1[j] -= rows[i][j];
            }
            phase1_value -= rhs[i];
        }
    }

    let mut tab = Tableau {
        rows,
        rhs,
        basis,
        phase1,
        phase2,
        phase1_value,
        phase2_value,
        ncols: total,
        eligible: (0..total).map(|j| j < first_artificial).collect(),
        pivots: 0,
        pivot_limit: 200 * (m + total) + 1000,
    };

    if artificial_count > 0 {
        match tab.run(true)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
        }
        let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if -tab.phase1_value > FEAS_TOL * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, tab.pivots));
        }
        // drive zero-level artificials out of the basis; drop redundant rows
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= first_artificial {
                let col = (0..first_artificial)
                    .filter(|&j| tab.rows[i][j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| tab.rows[i][a].abs().total_cmp(&tab.rows[i][b].abs()));
                match col {
                    Some(c) => tab.pivot(i, c),
                    None => {
                        tab.rows.remove(i);
                        tab.rhs.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    match tab.run(false)? {
        Outcome::Unbounded => return Ok(LpSolution::without_point(LpStatus::Unbounded, tab.pivots)),
        Outcome::Optimal => {}
    }

    let mut y = vec![0.0; total];
    for (i, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs[i].max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| map.offset + map.terms.iter().map(|&(col, coef)| coef * y[col]).sum::<f64>())
        .collect();
    let objective_value = lp.objective_at(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective_value, pivots: tab.pivots })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRef {
    Inequality(usize),
    Equality(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub constraint: ConstraintRef,
    /// Unscaled amount by which the constraint is violated.
    pub residual: f64,
}

/// Lists every constraint of `lp` that `x` violates.
///
/// A row counts as violated when its residual divided by
/// `max(1, ‖row‖∞)` exceeds `tol`; bounds are checked absolutely.
pub fn check_feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> Result<Vec<Violation>, LpError> {
    lp.validate()?;
    if x.len() != lp.num_vars() {
        return Err(LpError::Dimension(format!("point has {} entries, expected {}", x.len(), lp.num_vars())));
    }
    let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    let scale = |row: &[f64]| row.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut out = Vec::new();
    for (i, (row, &b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
        let residual = dot(row) - b;
        if residual / scale(row) > tol {
            out.push(Violation { constraint: ConstraintRef::Inequality(i), residual });
        }
    }
    for (i, (row, &b)) in lp.a_eq.iter().zip(&lp.b_eq).enumerate() {
        let residual = (dot(row) - b).abs();
        if residual / scale(row) > tol {
            out.push(Violation { constraint: ConstraintRef::Equality(i), residual });
        }
    }
    for (j, &v) in x.iter().enumerate() {
        if lp.lower[j] - v > tol {
            out.push(Violation { constraint: ConstraintRef::Lower(j), residual: lp.lower[j] - v });
        }
        if v - lp.upper[j] > tol {
            out.push(Violation { constraint: ConstraintRef::Upper(j), residual: v - lp.upper[j] });
        }
    }
    Ok(out)
}
