//! Sequential social learning with two states and two actions: the vanilla
//! protocol, risk-averse (CVaR) agents, agents that sample a limited
//! number of past actions, and the exact incest-removal condition on a
//! communication graph.
//!
//! States and actions are 0-based. Ties between actions go to action 0.

use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::error::{Error, Result};
use crate::markov::{Belief, ObservationMatrix};
use crate::orders::OrderVerdict;
use crate::rng::RngStream;

/// Probability columns that differ by less than this are treated as equal.
pub const IDENTIFIABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SocialSpec", into = "SocialSpec")]
pub struct SocialModel {
    b: ObservationMatrix,
    /// `costs[a][x]`.
    costs: Vec<Vec<f64>>,
    prior: Belief,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocialSpec {
    pub observations: ObservationMatrix,
    pub costs: Vec<Vec<f64>>,
    pub prior: Belief,
}

impl TryFrom<SocialSpec> for SocialModel {
    type Error = Error;
    fn try_from(s: SocialSpec) -> Result<Self> {
        SocialModel::new(s.observations, s.costs, s.prior)
    }
}

impl From<SocialModel> for SocialSpec {
    fn from(m: SocialModel) -> Self {
        SocialSpec { observations: m.b, costs: m.costs, prior: m.prior }
    }
}

impl SocialModel {
    pub fn new(b: ObservationMatrix, costs: Vec<Vec<f64>>, prior: Belief) -> Result<Self> {
        if b.states() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: b.states() });
        }
        if costs.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: costs.len() });
        }
        for c in &costs {
            if c.len() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: c.len() });
            }
            if let Some(&v) = c.iter().find(|v| !v.is_finite()) {
                return Err(Error::ParameterOutOfRange { name: "cost", value: v });
            }
        }
        if prior.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: prior.dim() });
        }
        Ok(Self { b, costs, prior })
    }

    pub fn observations(&self) -> &ObservationMatrix {
        &self.b
    }

    pub fn cost(&self, a: usize, x: usize) -> f64 {
        self.costs[a][x]
    }

    pub fn prior(&self) -> &Belief {
        &self.prior
    }

    fn check_y(&self, y: usize) -> Result<()> {
        if y >= self.b.symbols() {
            return Err(Error::ObservationOutOfRange { y, size: self.b.symbols() });
        }
        Ok(())
    }

    /// Posterior after private signal `y` from belief `pi`.
    pub fn private_belief(&self, pi: &Belief, y: usize) -> Result<Belief> {
        self.check_y(y)?;
        let w: Vec<f64> = (0..2).map(|x| pi[x] * self.b.get(x, y)).collect();
        let s = w[0] + w[1];
        if !(s > 0.0) {
            return Err(Error::ZeroLikelihood { y, sigma: s });
        }
        Belief::from_weights(w)
    }

    /// Risk-neutral action `argmin_a c_a' eta`.
    pub fn myopic_action(&self, eta: &[f64]) -> usize {
        let v: Vec<f64> = (0..2).map(|a| self.costs[a][0] * eta[0] + self.costs[a][1] * eta[1]).collect();
        usize::from(v[1] < v[0])
    }

    /// Action taken for every signal value from public belief `pi`.
    pub fn decision_map(&self, pi: &Belief) -> Vec<Option<usize>> {
        (0..self.b.symbols())
            .map(|y| self.private_belief(pi, y).ok().map(|eta| self.myopic_action(eta.as_slice())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialStep {
    pub action: usize,
    pub private: Belief,
    pub public: Belief,
}

/// Vanilla protocol: private update, myopic action, then the public belief
/// is updated with the likelihood of the action.
pub fn social_learning_step(model: &SocialModel, public: &Belief, y: usize) -> Result<SocialStep> {
    let private = model.private_belief(public, y)?;
    let action = model.myopic_action(private.as_slice());
    let map = model.decision_map(public);
    let lik: Vec<f64> = (0..2)
        .map(|x| (0..model.b.symbols()).filter(|&v| map[v] == Some(action)).map(|v| model.b.get(x, v)).sum())
        .collect();
    let w: Vec<f64> = (0..2).map(|x| public[x] * lik[x]).collect();
    let s = w[0] + w[1];
    if !(s > 0.0) {
        return Err(Error::ZeroLikelihood { y, sigma: s });
    }
    Ok(SocialStep { action, private, public: Belief::from_weights(w)? })
}

/// `min_z { z + E[(c - z)^+] / alpha }` for a discrete cost distribution,
/// scanning `z` over the support.
pub fn cvar(costs: &[f64], probs: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ParameterOutOfRange { name: "alpha", value: alpha });
    }
    let mut best = f64::INFINITY;
    for &z in costs {
        let tail: f64 = costs.iter().zip(probs).map(|(c, p)| p * (c - z).max(0.0)).sum();
        best = best.min(z + tail / alpha);
    }
    Ok(best)
}

/// Risk-averse action from public belief `pi` after signal `y`.
pub fn cvar_action(model: &SocialModel, pi: &Belief, y: usize, alpha: f64) -> Result<usize> {
    let eta = model.private_belief(pi, y)?;
    let r0 = cvar(&model.costs[0], eta.as_slice(), alpha)?;
    let r1 = cvar(&model.costs[1], eta.as_slice(), alpha)?;
    Ok(usize::from(r1 < r0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialTraceRow {
    pub t: usize,
    pub y: usize,
    pub action: usize,
    pub belief: [f64; 2],
}

pub fn social_trace_csv(rows: &[SocialTraceRow]) -> CsvTable {
    let mut t = CsvTable::new(["t", "y", "action", "belief_1", "belief_2"]);
    for r in rows {
        t.push(vec![r.t.to_string(), r.y.to_string(), r.action.to_string(), num(r.belief[0]), num(r.belief[1])]);
    }
    t
}

/// Vanilla protocol for `n` agents under true state `theta`. The trace
/// records the public belief after each action.
pub fn simulate_vanilla(model: &SocialModel, theta: usize, n: usize, rng: &mut RngStream) -> Result<Vec<SocialTraceRow>> {
    let mut public = model.prior.clone();
    let mut rows = Vec::with_capacity(n);
    for t in 1..=n {
        let y = model.b.sample(theta, rng);
        let step = social_learning_step(model, &public, y)?;
        public = step.public;
        rows.push(SocialTraceRow { t, y, action: step.action, belief: [public[0], public[1]] });
    }
    Ok(rows)
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let mut coef = 1.0;
    for (k, o) in out.iter_mut().enumerate() {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        *o = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    out
}

/// Common-knowledge state of the limited-memory protocol after `t`
/// actions: `dist[x][z]` is the probability that action 0 was taken `z`
/// times, `z = 0..=t`, given state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitedMemoryState {
    t: usize,
    sample_size: usize,
    dist: [Vec<f64>; 2],
    /// Realized count of action 0 in the simulated history.
    count: usize,
}

impl LimitedMemoryState {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dist(&self, x: usize) -> &[f64] {
        &self.dist[x]
    }

    /// False when both states induce the same action-count distribution.
    pub fn identifiable(&self) -> bool {
        self.dist[0].iter().zip(&self.dist[1]).any(|(a, b)| (a - b).abs() > IDENTIFIABILITY_TOL)
    }

    /// Sampling law `P(zhat = k | z)` for every `z`: each of the
    /// `sample_size` draws shows action 0 with probability `z / t`.
    fn sampling(&self) -> Vec<Vec<f64>> {
        (0..=self.t)
            .map(|z| {
                let p = if self.t == 0 { 0.0 } else { z as f64 / self.t as f64 };
                binomial_pmf(self.sample_size, p)
            })
            .collect()
    }

    /// `D_k(x) = P(zhat = k | x)` for `k = 0..=sample_size`.
    pub fn sample_likelihood(&self) -> [Vec<f64>; 2] {
        let s = self.sampling();
        let d = |x: usize| {
            (0..=self.sample_size).map(|k| (0..=self.t).map(|z| s[z][k] * self.dist[x][z]).sum()).collect()
        };
        [d(0), d(1)]
    }
}

/// Private belief of an agent who saw signal `y` and `k` zeros in its
/// sample: `prior . B_y . D_k`, normalized.
fn limited_private(model: &SocialModel, d: &[Vec<f64>; 2], y: usize, k: usize) -> Option<Belief> {
    let w: Vec<f64> = (0..2).map(|x| model.prior[x] * model.b.get(x, y) * d[x][k]).collect();
    Belief::from_weights(w).ok()
}

fn advance(dist: &[Vec<f64>; 2], q: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
    let step = |x: usize| {
        let t = dist[x].len() - 1;
        (0..=t + 1)
            .map(|n| {
                let stay = if n <= t { dist[x][n] * (1.0 - q[x][n]) } else { 0.0 };
                let up = if n >= 1 { dist[x][n - 1] * q[x][n - 1] } else { 0.0 };
                stay + up
            })
            .collect()
    };
    [step(0), step(1)]
}

/// Seed phase: the first `sample_size` agents act on the prior and their
/// own signal. Returns the state after the seeds and their trace.
pub fn limited_memory_seed(
    model: &SocialModel,
    sample_size: usize,
    theta: usize,
    rng: &mut RngStream,
) -> Result<(LimitedMemoryState, Vec<SocialTraceRow>)> {
    let map = model.decision_map(&model.prior);
    let q0: Vec<f64> = (0..2)
        .map(|x| (0..model.b.symbols()).filter(|&y| map[y] == Some(0)).map(|y| model.b.get(x, y)).sum())
        .collect();
    let mut dist = [vec![1.0], vec![1.0]];
    let mut count = 0;
    let mut rows = Vec::new();
    for t in 1..=sample_size {
        let q = [vec![q0[0]; t], vec![q0[1]; t]];
        dist = advance(&dist, &q);
        let y = model.b.sample(theta, rng);
        let eta = model.private_belief(&model.prior, y)?;
        let action = model.myopic_action(eta.as_slice());
        count += usize::from(action == 0);
        rows.push(SocialTraceRow { t, y, action, belief: [eta[0], eta[1]] });
    }
    Ok((LimitedMemoryState { t: sample_size, sample_size, dist, count }, rows))
}

/// One agent after the seed phase: draws a signal and a sample of past
/// actions, acts, and the common-knowledge count distribution advances.
pub fn limited_memory_step(
    model: &SocialModel,
    state: &LimitedMemoryState,
    theta: usize,
    rng: &mut RngStream,
) -> Result<(SocialTraceRow, LimitedMemoryState)> {
    if state.t < state.sample_size {
        return Err(Error::ParameterOutOfRange { name: "history length", value: state.t as f64 });
    }
    let d = state.sample_likelihood();
    let sampling = state.sampling();
    let nsym = model.b.symbols();
    let n = state.sample_size;
    // decision for every (y, k)
    let decide: Vec<Vec<usize>> = (0..nsym)
        .map(|y| {
            (0..=n)
                .map(|k| limited_private(model, &d, y, k).map_or(0, |eta| model.myopic_action(eta.as_slice())))
                .collect()
        })
        .collect();
    let y = model.b.sample(theta, rng);
    let p = if state.t == 0 { 0.0 } else { state.count as f64 / state.t as f64 };
    let k = rng.categorical(&binomial_pmf(n, p));
    let eta = limited_private(model, &d, y, k).ok_or(Error::ZeroLikelihood { y, sigma: 0.0 })?;
    let action = decide[y][k];
    let q: [Vec<f64>; 2] = [0, 1].map(|x| {
        (0..=state.t)
            .map(|z| {
                (0..nsym)
                    .map(|yy| {
                        let by = model.b.get(x, yy);
                        by * (0..=n).filter(|&kk| decide[yy][kk] == 0).map(|kk| sampling[z][kk]).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    });
    let dist = advance(&state.dist, &q);
    let next = LimitedMemoryState {
        t: state.t + 1,
        sample_size: n,
        dist,
        count: state.count + usize::from(action == 0),
    };
    let row = SocialTraceRow { t: next.t, y, action, belief: [eta[0], eta[1]] };
    Ok((row, next))
}

/// Full limited-memory run of `agents` agents including the seed phase.
pub fn simulate_limited_memory(
    model: &SocialModel,
    sample_size: usize,
    theta: usize,
    agents: usize,
    rng: &mut RngStream,
) -> Result<(Vec<SocialTraceRow>, LimitedMemoryState)> {
    let seeds = sample_size.min(agents);
    let (mut state, mut rows) = limited_memory_seed(model, seeds, theta, rng)?;
    if seeds < sample_size {
        return Ok((rows, state));
    }
    for _ in sample_size..agents {
        let (row, next) = limited_memory_step(model, &state, theta, rng)?;
        rows.push(row);
        state = next;
    }
    Ok((rows, state))
}

/// Communication graph in time order: `a[i][j] = 1` when node `i` sends
/// to node `j`, only for `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct IncestGraph {
    a: Vec<Vec<u8>>,
}

impl TryFrom<Vec<Vec<u8>>> for IncestGraph {
    type Error = Error;
    fn try_from(a: Vec<Vec<u8>>) -> Result<Self> {
        IncestGraph::new(a)
    }
}

impl From<IncestGraph> for Vec<Vec<u8>> {
    fn from(g: IncestGraph) -> Self {
        g.a
    }
}

impl IncestGraph {
    pub fn new(a: Vec<Vec<u8>>) -> Result<Self> {
        let n = a.len();
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { rows: n, row: i, len: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::ParameterOutOfRange { name: "adjacency entry", value: v as f64 });
                }
                if v == 1 && j <= i {
                    return Err(Error::NotUpperTriangular { row: i, col: j });
                }
            }
        }
        Ok(Self { a })
    }

    pub fn nodes(&self) -> usize {
        self.a.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.a[i][j] == 1
    }

    /// `sgn((I - A)^{-1})`: reachability including the node itself.
    pub fn transitive_closure(&self) -> Vec<Vec<i64>> {
        let n = self.nodes();
        let mut t = vec![vec![0i64; n]; n];
        for j in 0..n {
            t[j][j] = 1;
            for i in (0..j).rev() {
                let reach = (i + 1..=j).any(|k| self.a[i][k] == 1 && t[k][j] == 1);
                t[i][j] = i64::from(reach);
            }
        }
        t
    }

    /// `w_n = T_{n-1}^{-1} t_n` for node `n` (0-based), by back
    /// substitution on the unit upper-triangular closure.
    pub fn incest_weights(&self, n: usize) -> Vec<i64> {
        let t = self.transitive_closure();
        let mut w = vec![0i64; n];
        for i in (0..n).rev() {
            let s: i64 = (i + 1..n).map(|k| t[i][k] * w[k]).sum();
            w[i] = t[i][n] - s;
        }
        w
    }
}

/// Every node `n` and every earlier `j` with no direct edge `j -> n` must
/// have `w_n(j) = 0`. Witness is `[n, j]` for the first failure.
pub fn incest_condition_check(g: &IncestGraph) -> OrderVerdict {
    for n in 1..g.nodes() {
        let w = g.incest_weights(n);
        for (j, &wj) in w.iter().enumerate() {
            if !g.edge(j, n) && wj != 0 {
                return OrderVerdict::fail(vec![n, j]);
            }
        }
    }
    OrderVerdict::pass()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SocialModel {
        // action 0 is right in state 0
        let b = ObservationMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        SocialModel::new(b, vec![vec![0.0, 1.0], vec![1.0, 0.0]], Belief::uniform(2)).unwrap()
    }

    #[test]
    fn uninformative_and_degenerate() {
        let b = ObservationMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let m = SocialModel::new(b, vec![vec![0.0, 1.0], vec![2.0, 0.0]], Belief::uniform(2)).unwrap();
        let pi = Belief::new(vec![0.4, 0.6]).unwrap();
        let s = social_learning_step(&m, &pi, 1).unwrap();
        assert_eq!(s.action, 0);
        assert_eq!(s.public, pi);
        let s = social_learning_step(&model(), &Belief::unit(2, 1), 0).unwrap();
        assert_eq!(s.action, 1);
        assert_eq!(s.public, Belief::unit(2, 1));
    }

    #[test]
    fn cascade_freezes_public_belief() {
        let m = model();
        let mut pi = Belief::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(m.decision_map(&pi), vec![Some(0), Some(0)]);
        for y in [0, 1, 1, 0] {
            let s = social_learning_step(&m, &pi, y).unwrap();
            assert_eq!(s.public, pi);
            pi = s.public;
        }
    }

    #[test]
    fn cvar_limits() {
        let m = model();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..200 {
            let pi = crate::markov::sample_uniform_simplex(2, &mut rng);
            for y in 0..2 {
                let eta = m.private_belief(&pi, y).unwrap();
                assert_eq!(cvar_action(&m, &pi, y, 1.0).unwrap(), m.myopic_action(eta.as_slice()));
            }
        }
        assert_eq!(cvar_action(&m, &Belief::unit(2, 1), 0, 0.05).unwrap(), 1);
        // costs with distinct worst cases: action 1 has the smaller maximum
        let b = ObservationMatrix::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let m2 = SocialModel::new(b, vec![vec![0.0, 5.0], vec![2.0, 1.0]], Belief::uniform(2)).unwrap();
        let pi = Belief::new(vec![0.95, 0.05]).unwrap();
        assert_eq!(cvar_action(&m2, &pi, 0, 1.0).unwrap(), 0);
        assert_eq!(cvar_action(&m2, &pi, 0, 1e-4).unwrap(), 1);
        assert!(cvar(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn binomial_sums_to_one() {
        for n in 0..8 {
            for &p in &[0.0, 0.3, 1.0] {
                assert!((binomial_pmf(n, p).iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn limited_memory_distributions_stay_normalized() {
        let m = model();
        let mut rng = RngStream::new(5, 0);
        for n in [0, 1, 3] {
            let (seed, _) = limited_memory_seed(&m, n, 0, &mut rng).unwrap();
            let mut state = seed;
            for _ in 0..40 {
                let (row, next) = limited_memory_step(&m, &state, 0, &mut rng).unwrap();
                assert!(row.action < 2);
                for x in 0..2 {
                    assert_eq!(next.dist(x).len(), next.t() + 1);
                    assert!((next.dist(x).iter().sum::<f64>() - 1.0).abs() < 1e-10);
                }
                state = next;
            }
        }
    }

    #[test]
    fn no_sample_means_private_signal_only() {
        let m = model();
        let mut rng = RngStream::new(6, 0);
        let (rows, state) = simulate_limited_memory(&m, 0, 1, 50, &mut rng).unwrap();
        let d = state.sample_likelihood();
        assert!(d.iter().all(|dx| dx.len() == 1 && (dx[0] - 1.0).abs() < 1e-12));
        assert!(rows.iter().all(|r| r.action == r.y));
    }

    #[test]
    fn certain_sample() {
        let m = model();
        let state = LimitedMemoryState { t: 4, sample_size: 1, dist: [vec![0.0, 0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]], count: 4 };
        let d = state.sample_likelihood();
        assert_eq!(d[0], vec![0.0, 1.0]);
        assert!(!state.identifiable());
        let mut rng = RngStream::new(1, 0);
        let (row, _) = limited_memory_step(&m, &state, 0, &mut rng).unwrap();
        assert!(row.action < 2);
    }

    #[test]
    fn incest_examples() {
        let empty = IncestGraph::new(vec![vec![0; 3]; 3]).unwrap();
        assert!(incest_condition_check(&empty).holds);
        let chain = IncestGraph::new(vec![vec![0, 1, 0], vec![0, 0, 1], vec![0, 0, 0]]).unwrap();
        assert_eq!(chain.incest_weights(2), vec![0, 1]);
        assert!(incest_condition_check(&chain).holds);
        let complete = IncestGraph::new(vec![vec![0, 1, 1], vec![0, 0, 1], vec![0, 0, 0]]).unwrap();
        assert!(incest_condition_check(&complete).holds);
        // 0 -> 1, 0 -> 2, 1 -> 3, 2 -> 3: node 3 hears node 0 twice
        let diamond = IncestGraph::new(vec![
            vec![0, 1, 1, 0],
            vec![0, 0, 0, 1],
            vec![0, 0, 0, 1],
            vec![0, 0, 0, 0],
        ])
        .unwrap();
        assert_eq!(diamond.incest_weights(3), vec![-1, 1, 1]);
        let v = incest_condition_check(&diamond);
        assert_eq!(v.witness, Some(vec![3, 0]));
        assert!(matches!(IncestGraph::new(vec![vec![0, 0], vec![1, 0]]), Err(Error::NotUpperTriangular { .. })));
    }

    #[test]
    fn trace_csv_header() {
        let mut rng = RngStream::new(2, 0);
        let rows = simulate_vanilla(&model(), 0, 5, &mut rng).unwrap();
        let csv = social_trace_csv(&rows).render();
        assert!(csv.starts_with("t,y,action,belief_1,belief_2\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
