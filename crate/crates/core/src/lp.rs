//! Dense two-phase simplex with Bland's rule.
//!
//! Meant for the small programs that show up in game solving (a few hundred
//! variables at most). After the tableau terminates the basic solution is
//! recomputed from the original constraint matrix with an LU solve, which
//! keeps the primal residual near machine precision.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub fn name(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        }
    }
}

/// `sense c'x` subject to `A_ub x <= b_ub`, `A_eq x = b_eq` and
/// `lower <= x <= upper`. Bounds default to `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, b: f64) -> &mut Self {
        self.a_ub.push(row);
        self.b_ub.push(b);
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, b: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|a| -a).collect(), -b)
    }

    pub fn add_eq(&mut self, row: Vec<f64>, b: f64) -> &mut Self {
        self.a_eq.push(row);
        self.b_eq.push(b);
        self
    }

    pub fn bound(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.bounds[j] = (lower, upper);
        self
    }

    pub fn free(&mut self, j: usize) -> &mut Self {
        self.bound(j, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars();
        if n == 0 {
            return Err(Error::Empty("linear program"));
        }
        if self.b_ub.len() != self.a_ub.len() {
            return Err(Error::DimensionMismatch { expected: self.a_ub.len(), got: self.b_ub.len() });
        }
        if self.b_eq.len() != self.a_eq.len() {
            return Err(Error::DimensionMismatch { expected: self.a_eq.len(), got: self.b_eq.len() });
        }
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.bounds.len() });
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
        }
        let finite = |name, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterOutOfRange { name, value: v })
            }
        };
        for &c in &self.objective {
            finite("objective", c)?;
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            for &a in row {
                finite("constraint coefficient", a)?;
            }
        }
        for &b in self.b_ub.iter().chain(&self.b_eq) {
            finite("right-hand side", b)?;
        }
        for &(lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::ParameterOutOfRange { name: "bound", value: if lo.is_nan() { lo } else { hi } });
            }
        }
        Ok(())
    }

    /// Largest violation of the constraints and bounds at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(dot(row) - b);
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (&xj, &(lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - xj).max(xj - hi);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    /// `Err(LpStatus)` for anything but an optimum.
    pub fn optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            s => Err(Error::LpStatus(s.name())),
        }
    }
}

/// How an original variable is written in terms of nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { col: usize, offset: f64 },
    Reflect { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

struct Standard {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    is_eq: Vec<bool>,
    cost: Vec<f64>,
    ncols: usize,
    map: Vec<VarMap>,
}

fn standardize(p: &LpProblem) -> Standard {
    let mut map = Vec::with_capacity(p.vars());
    let mut ncols = 0;
    let mut upper_rows = Vec::new();
    for &(lo, hi) in &p.bounds {
        if lo.is_finite() {
            map.push(VarMap::Shift { col: ncols, offset: lo });
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            map.push(VarMap::Reflect { col: ncols, offset: hi });
            ncols += 1;
        } else {
            map.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let transform = |row: &[f64], b: f64| {
        let mut out = vec![0.0; ncols];
        let mut shift = 0.0;
        for (j, &a) in row.iter().enumerate() {
            match map[j] {
                VarMap::Shift { col, offset } => {
                    out[col] += a;
                    shift += a * offset;
                }
                VarMap::Reflect { col, offset } => {
                    out[col] -= a;
                    shift += a * offset;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, b - shift)
    };
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut is_eq = Vec::new();
    for (row, &b) in p.a_ub.iter().zip(&p.b_ub) {
        let (r, b) = transform(row, b);
        rows.push(r);
        rhs.push(b);
        is_eq.push(false);
    }
    for (col, width) in upper_rows {
        let mut r = vec![0.0; ncols];
        r[col] = 1.0;
        rows.push(r);
        rhs.push(width);
        is_eq.push(false);
    }
    for (row, &b) in p.a_eq.iter().zip(&p.b_eq) {
        let (r, b) = transform(row, b);
        rows.push(r);
        rhs.push(b);
        is_eq.push(true);
    }
    let (cost, _) = transform(&p.objective.iter().map(|c| sign * c).collect::<Vec<_>>(), 0.0);
    Standard { rows, rhs, is_eq, cost, ncols, map }
}

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v *= inv;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule on the objective stored in the last row. Returns false
    /// when the problem is unbounded along the entering column.
    fn optimize(&mut self, allowed: usize, pivots: &mut usize) -> Result<bool> {
        let m = self.basis.len();
        loop {
            let obj = &self.t[m];
            let Some(enter) = (0..allowed).find(|&j| obj[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
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
                return Ok(false);
            };
            self.pivot(r, enter);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::NoConvergence { sweeps: *pivots, residual: f64::NAN });
            }
        }
    }
}

/// Solve `p`. Malformed input is an error; infeasibility and
/// unboundedness are reported through the status.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let std = standardize(p);
    let m = std.rows.len();
    let n = std.ncols;
    let n_slack = std.is_eq.iter().filter(|e| !**e).count();
    // columns: structural | slacks | artificials
    let mut slack_of = vec![None; m];
    let mut k = n;
    for i in 0..m {
        if !std.is_eq[i] {
            slack_of[i] = Some(k);
            k += 1;
        }
    }
    let mut needs_art = vec![false; m];
    let mut art_of = vec![None; m];
    let mut k = n + n_slack;
    for i in 0..m {
        let slack_basic = !std.is_eq[i] && std.rhs[i] >= 0.0;
        if !slack_basic {
            needs_art[i] = true;
            art_of[i] = Some(k);
            k += 1;
        }
    }
    let width = k;
    let real = n + n_slack;
    let mut t = vec![vec![0.0; width + 1]; m + 1];
    let mut basis = vec![0; m];
    for i in 0..m {
        let flip = if std.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * std.rows[i][j];
        }
        if let Some(s) = slack_of[i] {
            t[i][s] = flip;
        }
        t[i][width] = flip * std.rhs[i];
        if let Some(a) = art_of[i] {
            t[i][a] = 1.0;
            basis[i] = a;
        } else {
            basis[i] = slack_of[i].expect("inequality row has a slack");
        }
    }
    // phase one objective: sum of artificials, priced out
    for i in 0..m {
        if needs_art[i] {
            for j in 0..=width {
                if j < real || j == width {
                    t[m][j] -= t[i][j];
                }
            }
        }
    }
    let mut tab = Tableau { t, basis, width };
    let mut pivots = 0;
    tab.optimize(width, &mut pivots)?;
    let infeas = -tab.t[m][width];
    if infeas > FEAS_TOL * (1.0 + std.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
        return Ok(LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::NAN });
    }
    // drive artificials out of the basis; drop redundant rows
    let mut keep = vec![true; m];
    for i in 0..m {
        if tab.basis[i] >= real {
            if let Some(j) = (0..real).find(|&j| tab.t[i][j].abs() > 1e-9) {
                tab.pivot(i, j);
            } else {
                keep[i] = false;
            }
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
    let mut t2: Vec<Vec<f64>> = rows.iter().map(|&i| tab.t[i].clone()).collect();
    let basis2: Vec<usize> = rows.iter().map(|&i| tab.basis[i]).collect();
    for row in t2.iter_mut() {
        for a in row.iter_mut().take(width).skip(real) {
            *a = 0.0;
        }
    }
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(&std.cost);
    for (r, &b) in basis2.iter().enumerate() {
        let cb = obj[b];
        if cb != 0.0 {
            for j in 0..=width {
                obj[j] -= cb * t2[r][j];
            }
        }
    }
    t2.push(obj);
    let mut tab = Tableau { t: t2, basis: basis2, width };
    if !tab.optimize(real, &mut pivots)? {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective: f64::NAN });
    }
    let y = polish(&std, &rows, &slack_of, &tab);
    let x: Vec<f64> = std
        .map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shift { col, offset } => offset + y[col],
            VarMap::Reflect { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = p.objective_at(&x);
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}

/// Recompute the basic solution from the untouched constraint rows.
fn polish(std: &Standard, rows: &[usize], slack_of: &[Option<usize>], tab: &Tableau) -> Vec<f64> {
    let n = std.ncols;
    let k = rows.len();
    let mut fallback = vec![0.0; n + slack_of.len()];
    for (r, &b) in tab.basis.iter().enumerate() {
        fallback[b] = tab.rhs(r).max(0.0);
    }
    let mut bmat = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (r, &i) in rows.iter().enumerate() {
        rhs[r] = std.rhs[i];
        for (c, &col) in tab.basis.iter().enumerate() {
            bmat[(r, c)] = if col < n {
                std.rows[i][col]
            } else if slack_of[i] == Some(col) {
                1.0
            } else {
                0.0
            };
        }
    }
    let mut y = vec![0.0; n];
    if k == 0 {
        return y;
    }
    let solved = bmat.lu().solve(&rhs);
    match solved {
        Some(sol) if sol.iter().all(|v| v.is_finite() && *v > -1e-7) => {
            for (c, &col) in tab.basis.iter().enumerate() {
                if col < n {
                    y[col] = sol[c].max(0.0);
                }
            }
        }
        _ => y.copy_from_slice(&fallback[..n]),
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(sense: Sense, c: &[f64]) -> LpProblem {
        LpProblem::new(sense, c.to_vec())
    }

    #[test]
    fn trivial_cases() {
        let mut p = lp(Sense::Maximize, &[1.0]);
        p.add_le(vec![1.0], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.objective - 1.0).abs() < 1e-12);

        let mut p = lp(Sense::Maximize, &[1.0]);
        p.add_le(vec![1.0], -1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);

        let p = lp(Sense::Maximize, &[1.0]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
        assert!(matches!(solve_lp(&p).unwrap().optimal(), Err(Error::LpStatus("unbounded"))));
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut p = lp(Sense::Maximize, &[3.0, 5.0]);
        p.add_le(vec![1.0, 0.0], 4.0).add_le(vec![0.0, 2.0], 12.0).add_le(vec![3.0, 2.0], 18.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-10);
        assert!((s.x[0] - 2.0).abs() < 1e-10 && (s.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x + y with x free, x >= -3 via row, y in [1, 2], x + y >= -1.5
        let mut p = lp(Sense::Minimize, &[1.0, 1.0]);
        p.free(0).bound(1, 1.0, 2.0).add_ge(vec![1.0, 0.0], -3.0).add_ge(vec![1.0, 1.0], -1.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 1.5).abs() < 1e-10);
        assert!(p.residual(&s.x) < 1e-10);

        // upper-bounded only: max x with x <= 2.5 as a bound
        let mut p = lp(Sense::Maximize, &[1.0]);
        p.bound(0, f64::NEG_INFINITY, 2.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.x[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 1 stated twice, min x - y -> (0, 1)
        let mut p = lp(Sense::Minimize, &[1.0, -1.0]);
        p.add_eq(vec![1.0, 1.0], 1.0).add_eq(vec![2.0, 2.0], 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-12);
        let mut p = lp(Sense::Minimize, &[1.0, 1.0]);
        p.add_eq(vec![1.0, 1.0], 1.0).add_eq(vec![1.0, 1.0], 2.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the largest-coefficient rule.
        let mut p = lp(Sense::Minimize, &[-0.75, 150.0, -0.02, 6.0]);
        p.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0)
            .add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0)
            .add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-10);
    }

    #[test]
    fn malformed_input_is_an_error() {
        let mut p = lp(Sense::Minimize, &[1.0, 2.0]);
        p.add_le(vec![1.0], 1.0);
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch { .. })));
        let p = lp(Sense::Minimize, &[f64::NAN]);
        assert!(solve_lp(&p).is_err());
    }
}
