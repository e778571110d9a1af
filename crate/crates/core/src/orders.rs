//! Stochastic orders and total positivity.
//!
//! Every check returns an [`OrderVerdict`]; a failed verdict carries the
//! indices at which the defining inequality breaks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{check_dim, Belief, StochasticMatrix};
use crate::rng::RngStream;

/// Absolute slack used by every verdict in this module.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderVerdict {
    pub holds: bool,
    pub witness: Option<Vec<usize>>,
}

impl OrderVerdict {
    pub fn pass() -> Self {
        Self { holds: true, witness: None }
    }

    pub fn fail(witness: Vec<usize>) -> Self {
        Self { holds: false, witness: Some(witness) }
    }
}

/// Every 2x2 minor nonnegative. Witness is `[i1, i2, j1, j2]`.
pub fn is_tp2(m: &[Vec<f64>]) -> Result<OrderVerdict> {
    for (r, row) in m.iter().enumerate() {
        if row.len() != m[0].len() {
            return Err(Error::DimensionMismatch { expected: m[0].len(), got: row.len() });
        }
        for (c, &v) in row.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(Error::NegativeEntry { row: r, col: c, value: v });
            }
        }
    }
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    for i1 in 0..rows {
        for i2 in (i1 + 1)..rows {
            for j1 in 0..cols {
                for j2 in (j1 + 1)..cols {
                    let minor = m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1];
                    if minor < -ORDER_TOL {
                        return Ok(OrderVerdict::fail(vec![i1, i2, j1, j2]));
                    }
                }
            }
        }
    }
    Ok(OrderVerdict::pass())
}

/// `p >=_r q`: `p(i) q(j) >= p(j) q(i)` for all `i > j`. Witness `[i, j]`.
pub fn mlr_dominates(p: &Belief, q: &Belief) -> Result<OrderVerdict> {
    mlr_dominates_raw(p.as_slice(), q.as_slice())
}

pub(crate) fn mlr_dominates_raw(p: &[f64], q: &[f64]) -> Result<OrderVerdict> {
    check_dim(p.len(), q.len())?;
    for i in 0..p.len() {
        for j in 0..i {
            if p[i] * q[j] - p[j] * q[i] < -ORDER_TOL {
                return Ok(OrderVerdict::fail(vec![i, j]));
            }
        }
    }
    Ok(OrderVerdict::pass())
}

fn tail_sums(p: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; p.len() + 1];
    for i in (0..p.len()).rev() {
        tails[i] = tails[i + 1] + p[i];
    }
    tails
}

/// Tail sums of `p` dominate those of `q`. Witness `[l]`.
pub fn fosd_dominates(p: &Belief, q: &Belief) -> Result<OrderVerdict> {
    check_dim(p.dim(), q.dim())?;
    let (tp, tq) = (tail_sums(p.as_slice()), tail_sums(q.as_slice()));
    for l in 0..p.dim() {
        if tp[l] < tq[l] - ORDER_TOL {
            return Ok(OrderVerdict::fail(vec![l]));
        }
    }
    Ok(OrderVerdict::pass())
}

/// Row-wise tail sums of `p1` dominate those of `p2`, i.e. `P1 U >= P2 U`
/// where `U` accumulates columns from the right. Witness `[row, l]`.
pub fn fosd_matrix_condition(p1: &StochasticMatrix, p2: &StochasticMatrix) -> Result<OrderVerdict> {
    check_dim(p1.dim(), p2.dim())?;
    for i in 0..p1.dim() {
        let (t1, t2) = (tail_sums(p1.row(i)), tail_sums(p2.row(i)));
        for l in 0..p1.dim() {
            if t1[l] < t2[l] - ORDER_TOL {
                return Ok(OrderVerdict::fail(vec![i, l]));
            }
        }
    }
    Ok(OrderVerdict::pass())
}

/// Increasing hazard rate: survival ratios `S(i+1)/S(i)` nonincreasing.
pub fn is_ihr(pmf: &Belief) -> OrderVerdict {
    is_ihr_with_tail(pmf.as_slice(), 0.0)
}

/// IHR check for a truncated pmf whose remaining mass `tail` lies beyond the
/// last index. Ratios are formed only where the survival function is
/// positive. Witness `[i]` where ratio `i + 1` exceeds ratio `i`.
pub fn is_ihr_with_tail(pmf: &[f64], tail: f64) -> OrderVerdict {
    let mut survival = vec![tail; pmf.len() + 1];
    for i in (0..pmf.len()).rev() {
        survival[i] = survival[i + 1] + pmf[i];
    }
    let mut prev: Option<f64> = None;
    for i in 0..pmf.len() {
        if survival[i] <= 0.0 {
            break;
        }
        let ratio = survival[i + 1] / survival[i];
        if let Some(p) = prev {
            if ratio > p + ORDER_TOL {
                return OrderVerdict::fail(vec![i - 1]);
            }
        }
        prev = Some(ratio);
    }
    OrderVerdict::pass()
}

/// `Q(i, u+1) - Q(i, u)` nonincreasing in `i` for every `u`. Rows are
/// states, columns actions. Witness `[i, u]`.
pub fn is_submodular(q: &[Vec<f64>]) -> OrderVerdict {
    let actions = q.first().map_or(0, |r| r.len());
    for u in 0..actions.saturating_sub(1) {
        for i in 0..q.len().saturating_sub(1) {
            let d0 = q[i][u + 1] - q[i][u];
            let d1 = q[i + 1][u + 1] - q[i + 1][u];
            if d1 > d0 + ORDER_TOL {
                return OrderVerdict::fail(vec![i, u]);
            }
        }
    }
    OrderVerdict::pass()
}

/// Deterministic threshold test of `f` (null) against `g`.
///
/// Outcomes `0..reject_below` are rejected; in one-based terms the threshold
/// is `reject_below + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpThreshold {
    pub reject_below: usize,
    pub level: f64,
    pub power: f64,
}

/// Largest threshold whose level `sum_{x < x*} f(x)` stays within `alpha`.
/// Requires `f >=_r g`, which makes the threshold rule most powerful.
pub fn np_threshold(f: &Belief, g: &Belief, alpha: f64) -> Result<NpThreshold> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ParameterOutOfRange { name: "alpha", value: alpha });
    }
    let verdict = mlr_dominates(f, g)?;
    if !verdict.holds {
        return Err(Error::OrderViolation(format!(
            "null pmf does not MLR-dominate the alternative at {:?}",
            verdict.witness.unwrap_or_default()
        )));
    }
    let (mut level, mut power) = (0.0, 0.0);
    let mut reject_below = 0;
    for x in 0..f.dim() {
        let next = level + f[x];
        if next > alpha + ORDER_TOL {
            break;
        }
        level = next;
        power += g[x];
        reject_below = x + 1;
    }
    Ok(NpThreshold { reject_below, level: level.min(1.0), power })
}

/// TP2 stochastic matrix with rows `b_j exp(s_i t_j)` normalized, `s` and `t`
/// increasing.
pub fn random_tp2(dim: usize, rng: &mut RngStream) -> StochasticMatrix {
    let mut s: Vec<f64> = (0..dim).map(|_| 3.0 * rng.uniform()).collect();
    let mut t: Vec<f64> = (0..dim).map(|_| 3.0 * rng.uniform()).collect();
    s.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    let b: Vec<f64> = (0..dim).map(|_| 0.1 + rng.uniform()).collect();
    let rows = (0..dim)
        .map(|i| {
            let row: Vec<f64> = (0..dim).map(|j| b[j] * (s[i] * t[j]).exp()).collect();
            let sum: f64 = row.iter().sum();
            row.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    StochasticMatrix::new(rows).expect("normalized rows")
}

/// TP2 chain whose first state is absorbing.
pub fn random_tp2_absorbing(dim: usize, rng: &mut RngStream) -> StochasticMatrix {
    let mut rows = random_tp2(dim, rng).rows().to_vec();
    rows[0] = Belief::unit(dim, 0).into_vec();
    StochasticMatrix::new(rows).expect("normalized rows")
}
