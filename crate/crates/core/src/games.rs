//! Matrix games, single-controller zero-sum Markov games, correlated
//! equilibria, regret matching and the global-game monotonicity condition.

use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, Sense};
use crate::markov::{Belief, StochasticMatrix};
use crate::orders::OrderVerdict;
use crate::rng::RngStream;

/// Gap allowed by [`correlated_eq_check`].
pub const CE_TOL: f64 = 1e-9;

/// Zero-sum game where the column player picks `x`, the row player picks
/// `y`, and the column player receives `y' M x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MatrixGame {
    m: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for MatrixGame {
    type Error = Error;
    fn try_from(m: Vec<Vec<f64>>) -> Result<Self> {
        MatrixGame::new(m)
    }
}

impl From<MatrixGame> for Vec<Vec<f64>> {
    fn from(g: MatrixGame) -> Self {
        g.m
    }
}

impl MatrixGame {
    pub fn new(m: Vec<Vec<f64>>) -> Result<Self> {
        if m.is_empty() || m[0].is_empty() {
            return Err(Error::Empty("matrix game"));
        }
        let n = m[0].len();
        for row in &m {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            if let Some(&v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::ParameterOutOfRange { name: "payoff", value: v });
            }
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> usize {
        self.m.len()
    }

    pub fn cols(&self) -> usize {
        self.m[0].len()
    }

    pub fn payoffs(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// `-M'`: the same game with the players' roles exchanged.
    pub fn swapped(&self) -> Self {
        let m = (0..self.cols()).map(|j| (0..self.rows()).map(|i| -self.m[i][j]).collect()).collect();
        Self { m }
    }

    pub fn payoff(&self, x: &[f64], y: &[f64]) -> f64 {
        self.m.iter().zip(y).map(|(row, yi)| yi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    /// Maximizing (column) player.
    pub x: Belief,
    /// Minimizing (row) player.
    pub y: Belief,
}

fn clamp_pmf(v: &[f64]) -> Result<Belief> {
    Belief::from_weights(v.iter().map(|p| p.max(0.0)).collect())
}

/// `max z` subject to `z <= e_i' M x` and `x` a pmf; `y` from the dual
/// program `min w` subject to `(M'y)_j <= w`.
pub fn matrix_game_value(g: &MatrixGame) -> Result<MatrixGameSolution> {
    let (m, n) = (g.rows(), g.cols());
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut lp = LpProblem::new(Sense::Maximize, obj);
    lp.free(n);
    for row in &g.m {
        let mut r: Vec<f64> = row.iter().map(|a| -a).collect();
        r.push(1.0);
        lp.add_le(r, 0.0);
    }
    let mut ones = vec![1.0; n];
    ones.push(0.0);
    lp.add_eq(ones, 1.0);
    let primal = solve_lp(&lp)?.optimal()?;

    let mut obj = vec![0.0; m + 1];
    obj[m] = 1.0;
    let mut lp = LpProblem::new(Sense::Minimize, obj);
    lp.free(m);
    for j in 0..n {
        let mut r: Vec<f64> = (0..m).map(|i| g.m[i][j]).collect();
        r.push(-1.0);
        lp.add_le(r, 0.0);
    }
    let mut ones = vec![1.0; m];
    ones.push(0.0);
    lp.add_eq(ones, 1.0);
    let dual = solve_lp(&lp)?.optimal()?;

    Ok(MatrixGameSolution { value: primal.x[n], x: clamp_pmf(&primal.x[..n])?, y: clamp_pmf(&dual.x[..m])? })
}

/// Discounted zero-sum Markov game whose transitions depend only on the
/// minimizing player 1. `cost[i][u1][u2]` is paid by player 1 to player 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SingleControllerSpec", into = "SingleControllerSpec")]
pub struct SingleControllerGame {
    p: Vec<StochasticMatrix>,
    cost: Vec<Vec<Vec<f64>>>,
    rho: f64,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleControllerSpec {
    pub transitions: Vec<StochasticMatrix>,
    pub costs: Vec<Vec<Vec<f64>>>,
    pub discount: f64,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_weights: Option<Vec<f64>>,
}

impl TryFrom<SingleControllerSpec> for SingleControllerGame {
    type Error = Error;
    fn try_from(s: SingleControllerSpec) -> Result<Self> {
        let x = s.costs.len();
        let alpha = s.initial_weights.unwrap_or_else(|| vec![1.0 / x.max(1) as f64; x]);
        SingleControllerGame::new(s.transitions, s.costs, s.discount, alpha)
    }
}

impl From<SingleControllerGame> for SingleControllerSpec {
    fn from(g: SingleControllerGame) -> Self {
        SingleControllerSpec { transitions: g.p, costs: g.cost, discount: g.rho, initial_weights: Some(g.alpha) }
    }
}

impl SingleControllerGame {
    pub fn new(p: Vec<StochasticMatrix>, cost: Vec<Vec<Vec<f64>>>, rho: f64, alpha: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Empty("player 1 actions"));
        }
        let x = p[0].dim();
        for m in &p {
            if m.dim() != x {
                return Err(Error::DimensionMismatch { expected: x, got: m.dim() });
            }
        }
        if cost.len() != x {
            return Err(Error::DimensionMismatch { expected: x, got: cost.len() });
        }
        let u2 = cost[0].first().map_or(0, Vec::len);
        if u2 == 0 {
            return Err(Error::Empty("player 2 actions"));
        }
        for per_state in &cost {
            if per_state.len() != p.len() {
                return Err(Error::DimensionMismatch { expected: p.len(), got: per_state.len() });
            }
            for row in per_state {
                if row.len() != u2 {
                    return Err(Error::DimensionMismatch { expected: u2, got: row.len() });
                }
                if let Some(&v) = row.iter().find(|v| !v.is_finite()) {
                    return Err(Error::ParameterOutOfRange { name: "cost", value: v });
                }
            }
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::ParameterOutOfRange { name: "discount", value: rho });
        }
        if alpha.len() != x {
            return Err(Error::DimensionMismatch { expected: x, got: alpha.len() });
        }
        if let Some(&a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::ParameterOutOfRange { name: "initial weight", value: a });
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidBelief(format!("initial weights sum to {s}")));
        }
        Ok(Self { p, cost, rho, alpha })
    }

    pub fn states(&self) -> usize {
        self.cost.len()
    }

    pub fn actions1(&self) -> usize {
        self.p.len()
    }

    pub fn actions2(&self) -> usize {
        self.cost[0][0].len()
    }

    pub fn transition(&self, u1: usize) -> &StochasticMatrix {
        &self.p[u1]
    }

    pub fn cost(&self, i: usize, u1: usize, u2: usize) -> f64 {
        self.cost[i][u1][u2]
    }

    pub fn discount(&self) -> f64 {
        self.rho
    }

    pub fn initial_weights(&self) -> &[f64] {
        &self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleControllerSolution {
    pub value: Vec<f64>,
    /// Player 2 (maximizer), `q[i][u2]`.
    pub q: Vec<Vec<f64>>,
    /// Player 1 (minimizer), `p[i][u1]`, normalized occupation measure.
    pub p: Vec<Vec<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// States with zero occupation; their row of `p` is uniform.
    pub degenerate_states: Vec<usize>,
}

impl SingleControllerSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs()
    }
}

/// Primal program for `(V, q)` and dual program for `(z, p)`, solved
/// separately.
pub fn single_controller_solve(g: &SingleControllerGame) -> Result<SingleControllerSolution> {
    let (x, u1n, u2n, rho) = (g.states(), g.actions1(), g.actions2(), g.rho);

    // primal: variables V (x, free) then q (x * u2n)
    let nv = x + x * u2n;
    let mut obj = vec![0.0; nv];
    obj[..x].copy_from_slice(&g.alpha);
    let mut lp = LpProblem::new(Sense::Maximize, obj);
    for i in 0..x {
        lp.free(i);
    }
    for i in 0..x {
        for u1 in 0..u1n {
            let mut r = vec![0.0; nv];
            r[i] += 1.0;
            for j in 0..x {
                r[j] -= rho * g.p[u1].get(i, j);
            }
            for u2 in 0..u2n {
                r[x + i * u2n + u2] = -g.cost[i][u1][u2];
            }
            lp.add_le(r, 0.0);
        }
        let mut r = vec![0.0; nv];
        for u2 in 0..u2n {
            r[x + i * u2n + u2] = 1.0;
        }
        lp.add_eq(r, 1.0);
    }
    let primal = solve_lp(&lp)?.optimal()?;
    let value = primal.x[..x].to_vec();
    let q = (0..x)
        .map(|i| {
            let row: Vec<f64> = (0..u2n).map(|u2| primal.x[x + i * u2n + u2].max(0.0)).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();

    // dual: variables p (x * u1n) then z (x, free)
    let nd = x * u1n + x;
    let mut obj = vec![0.0; nd];
    for o in obj.iter_mut().skip(x * u1n) {
        *o = 1.0;
    }
    let mut lp = LpProblem::new(Sense::Minimize, obj);
    for i in 0..x {
        lp.free(x * u1n + i);
    }
    for j in 0..x {
        let mut r = vec![0.0; nd];
        for u1 in 0..u1n {
            r[j * u1n + u1] += 1.0;
        }
        for i in 0..x {
            for u1 in 0..u1n {
                r[i * u1n + u1] -= rho * g.p[u1].get(i, j);
            }
        }
        lp.add_eq(r, g.alpha[j]);
    }
    for i in 0..x {
        for u2 in 0..u2n {
            let mut r = vec![0.0; nd];
            for u1 in 0..u1n {
                r[i * u1n + u1] = g.cost[i][u1][u2];
            }
            r[x * u1n + i] = -1.0;
            lp.add_le(r, 0.0);
        }
    }
    let dual = solve_lp(&lp)?.optimal()?;
    let mut degenerate_states = Vec::new();
    let p = (0..x)
        .map(|i| {
            let row: Vec<f64> = (0..u1n).map(|u1| dual.x[i * u1n + u1].max(0.0)).collect();
            let s: f64 = row.iter().sum();
            if s <= 1e-12 {
                degenerate_states.push(i);
                vec![1.0 / u1n as f64; u1n]
            } else {
                row.into_iter().map(|v| v / s).collect()
            }
        })
        .collect();

    Ok(SingleControllerSolution {
        value,
        q,
        p,
        primal_objective: primal.objective,
        dual_objective: dual.objective,
        degenerate_states,
    })
}

/// `players` agents with `actions` actions each. Joint actions are indexed
/// in mixed radix with player 0 most significant, so a two-player game
/// reads `rewards[l][u0 * U + u1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalFormSpec", into = "NormalFormSpec")]
pub struct NormalFormGame {
    players: usize,
    actions: usize,
    rewards: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalFormSpec {
    pub players: usize,
    pub actions: usize,
    pub rewards: Vec<Vec<f64>>,
}

impl TryFrom<NormalFormSpec> for NormalFormGame {
    type Error = Error;
    fn try_from(s: NormalFormSpec) -> Result<Self> {
        NormalFormGame::new(s.players, s.actions, s.rewards)
    }
}

impl From<NormalFormGame> for NormalFormSpec {
    fn from(g: NormalFormGame) -> Self {
        NormalFormSpec { players: g.players, actions: g.actions, rewards: g.rewards }
    }
}

impl NormalFormGame {
    pub fn new(players: usize, actions: usize, rewards: Vec<Vec<f64>>) -> Result<Self> {
        if players == 0 || actions == 0 {
            return Err(Error::Empty("normal-form game"));
        }
        let joint = actions
            .checked_pow(players as u32)
            .filter(|&j| j <= 1 << 20)
            .ok_or(Error::TooLarge { states: actions, steps: players })?;
        if rewards.len() != players {
            return Err(Error::DimensionMismatch { expected: players, got: rewards.len() });
        }
        for r in &rewards {
            if r.len() != joint {
                return Err(Error::DimensionMismatch { expected: joint, got: r.len() });
            }
            if let Some(&v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::ParameterOutOfRange { name: "reward", value: v });
            }
        }
        Ok(Self { players, actions, rewards })
    }

    /// Two players from reward matrices indexed `[u0][u1]`.
    pub fn bimatrix(r0: &[Vec<f64>], r1: &[Vec<f64>]) -> Result<Self> {
        let u = r0.len();
        for rows in [r0, r1] {
            if rows.len() != u {
                return Err(Error::DimensionMismatch { expected: u, got: rows.len() });
            }
            for row in rows {
                if row.len() != u {
                    return Err(Error::NonSquare { rows: u, row: 0, len: row.len() });
                }
            }
        }
        let flat = |m: &[Vec<f64>]| m.iter().flatten().copied().collect::<Vec<_>>();
        Self::new(2, u, vec![flat(r0), flat(r1)])
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn joint_count(&self) -> usize {
        self.rewards[0].len()
    }

    pub fn reward(&self, l: usize, joint: usize) -> f64 {
        self.rewards[l][joint]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let rewards = self.rewards.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        Self { rewards, ..self.clone() }
    }

    fn stride(&self, l: usize) -> usize {
        self.actions.pow((self.players - 1 - l) as u32)
    }

    pub fn action_of(&self, joint: usize, l: usize) -> usize {
        joint / self.stride(l) % self.actions
    }

    pub fn joint_index(&self, profile: &[usize]) -> usize {
        profile.iter().fold(0, |acc, &u| acc * self.actions + u)
    }

    pub fn profile(&self, joint: usize) -> Vec<usize> {
        (0..self.players).map(|l| self.action_of(joint, l)).collect()
    }

    /// `joint` with player `l`'s action replaced by `a`.
    pub fn with_action(&self, joint: usize, l: usize, a: usize) -> usize {
        let s = self.stride(l);
        joint - self.action_of(joint, l) * s + a * s
    }

    fn range(&self) -> f64 {
        self.rewards
            .iter()
            .map(|r| {
                let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Smallest admissible inertia, `U (max r - min r)` over players.
    pub fn inertia_bound(&self) -> f64 {
        self.actions as f64 * self.range()
    }

    /// Gain to player `l` from playing `j` whenever recommended `i`, under
    /// joint distribution `z`.
    pub fn deviation_gap(&self, z: &[f64], l: usize, i: usize, j: usize) -> f64 {
        (0..self.joint_count())
            .filter(|&k| self.action_of(k, l) == i && z[k] != 0.0)
            .map(|k| z[k] * (self.rewards[l][self.with_action(k, l, j)] - self.rewards[l][k]))
            .sum()
    }
}

fn check_joint(g: &NormalFormGame, z: &Belief) -> Result<()> {
    if z.dim() != g.joint_count() {
        return Err(Error::DimensionMismatch { expected: g.joint_count(), got: z.dim() });
    }
    Ok(())
}

/// Witness is `[player, recommended, deviation]`.
pub fn correlated_eq_check(z: &Belief, g: &NormalFormGame) -> Result<OrderVerdict> {
    check_joint(g, z)?;
    for l in 0..g.players {
        for i in 0..g.actions {
            for j in 0..g.actions {
                if i != j && g.deviation_gap(z.as_slice(), l, i, j) > CE_TOL {
                    return Ok(OrderVerdict::fail(vec![l, i, j]));
                }
            }
        }
    }
    Ok(OrderVerdict::pass())
}

/// Largest positive deviation gap; zero exactly on the correlated
/// equilibrium polytope.
pub fn ce_violation(z: &Belief, g: &NormalFormGame) -> Result<f64> {
    check_joint(g, z)?;
    Ok(ce_violation_raw(z.as_slice(), g))
}

fn ce_violation_raw(z: &[f64], g: &NormalFormGame) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..g.players {
        for i in 0..g.actions {
            for j in 0..g.actions {
                if i != j {
                    worst = worst.max(g.deviation_gap(z, l, i, j));
                }
            }
        }
    }
    worst
}

/// Some point of the correlated equilibrium polytope, from a feasibility
/// program with zero objective.
pub fn correlated_eq_find(g: &NormalFormGame) -> Result<Belief> {
    let n = g.joint_count();
    let mut lp = LpProblem::new(Sense::Minimize, vec![0.0; n]);
    for l in 0..g.players {
        for i in 0..g.actions {
            for j in 0..g.actions {
                if i == j {
                    continue;
                }
                let mut r = vec![0.0; n];
                for (k, rk) in r.iter_mut().enumerate() {
                    if g.action_of(k, l) == i {
                        *rk = g.rewards[l][g.with_action(k, l, j)] - g.rewards[l][k];
                    }
                }
                lp.add_le(r, 0.0);
            }
        }
    }
    lp.add_eq(vec![1.0; n], 1.0);
    let s = solve_lp(&lp)?.optimal()?;
    clamp_pmf(&s.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub epsilon: f64,
    pub steps: usize,
    /// Defaults to the inertia bound (or 1 for a constant game).
    #[serde(default)]
    pub mu: Option<f64>,
    /// Trajectory is recorded every this many steps and at the end.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    1
}

impl RegretConfig {
    pub fn new(epsilon: f64, steps: usize) -> Self {
        Self { epsilon, steps, mu: None, record_every: 1 }
    }
}

/// Per-player regret matrices, current joint action and the discounted
/// empirical joint-play frequency `z`.
#[derive(Debug, Clone)]
pub struct RegretState {
    regrets: Vec<Vec<Vec<f64>>>,
    actions: Vec<usize>,
    epsilon: f64,
    mu: f64,
    z: Vec<f64>,
    n: usize,
}

impl RegretState {
    /// Initial actions are drawn uniformly; regrets start at zero and `z`
    /// at the point mass on the initial profile.
    pub fn new(g: &NormalFormGame, epsilon: f64, mu: Option<f64>, rng: &mut RngStream) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::ParameterOutOfRange { name: "epsilon", value: epsilon });
        }
        let bound = g.inertia_bound();
        let mu = match mu {
            Some(mu) => {
                if !(mu >= bound) || mu <= 0.0 {
                    return Err(Error::InertiaTooSmall { mu, bound });
                }
                mu
            }
            None if bound > 0.0 => bound,
            None => 1.0,
        };
        let u = g.actions;
        let actions: Vec<usize> = (0..g.players).map(|_| rng.index(u)).collect();
        let mut z = vec![0.0; g.joint_count()];
        z[g.joint_index(&actions)] = 1.0;
        Ok(Self { regrets: vec![vec![vec![0.0; u]; u]; g.players], actions, epsilon, mu, z, n: 0 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn steps_taken(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> &[usize] {
        &self.actions
    }

    pub fn regrets(&self, l: usize) -> &[Vec<f64>] {
        &self.regrets[l]
    }

    pub fn z(&self) -> Belief {
        Belief::from_weights(self.z.clone()).expect("z stays on the simplex")
    }

    /// `max_{l,i,j} R^l(i,j)^+` over off-diagonal entries.
    pub fn max_regret(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.regrets {
            for (i, row) in r.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if i != j {
                        worst = worst.max(v);
                    }
                }
            }
        }
        worst
    }

    /// Switching distribution of player `l` from its current action.
    pub fn switch_row(&self, l: usize) -> Vec<f64> {
        let i = self.actions[l];
        let r = &self.regrets[l][i];
        let mut row: Vec<f64> = r.iter().map(|v| v.max(0.0) / self.mu).collect();
        row[i] = 0.0;
        let moved: f64 = row.iter().sum();
        row[i] = 1.0 - moved;
        row
    }

    pub fn step(&mut self, g: &NormalFormGame, rng: &mut RngStream) {
        let next: Vec<usize> = (0..g.players)
            .map(|l| {
                let row = self.switch_row(l);
                debug_assert!(row.iter().all(|&p| p >= -1e-12), "switch row {row:?} is not a pmf");
                rng.categorical(&row)
            })
            .collect();
        self.actions = next;
        let joint = g.joint_index(&self.actions);
        let eps = self.epsilon;
        for l in 0..g.players {
            let played = self.actions[l];
            let base = g.rewards[l][joint];
            for (i, row) in self.regrets[l].iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let gain = if i == played { g.rewards[l][g.with_action(joint, l, j)] - base } else { 0.0 };
                    *v += eps * (gain - *v);
                }
            }
        }
        for (k, zk) in self.z.iter_mut().enumerate() {
            let e = if k == joint { 1.0 } else { 0.0 };
            *zk += eps * (e - *zk);
        }
        self.n += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub n: usize,
    pub joint_action: usize,
    pub max_regret: f64,
    pub ce_violation: f64,
}

#[derive(Debug, Clone)]
pub struct RegretRun {
    pub trajectory: Vec<RegretRecord>,
    pub final_z: Belief,
    pub final_regrets: Vec<Vec<Vec<f64>>>,
    pub mu: f64,
}

impl RegretRun {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(vec!["n", "joint_action", "max_regret", "ce_violation"]);
        for r in &self.trajectory {
            t.push(vec![r.n.to_string(), r.joint_action.to_string(), num(r.max_regret), num(r.ce_violation)]);
        }
        t
    }

    /// Largest `ce_violation` over the trailing `fraction` of records.
    pub fn trailing_ce_violation(&self, fraction: f64) -> f64 {
        let k = ((self.trajectory.len() as f64 * fraction).ceil() as usize).max(1);
        self.trajectory[self.trajectory.len().saturating_sub(k)..].iter().map(|r| r.ce_violation).fold(0.0, f64::max)
    }
}

pub fn regret_matching_run(g: &NormalFormGame, cfg: &RegretConfig, rng: &mut RngStream) -> Result<RegretRun> {
    if cfg.record_every == 0 {
        return Err(Error::ParameterOutOfRange { name: "record_every", value: 0.0 });
    }
    let mut state = RegretState::new(g, cfg.epsilon, cfg.mu, rng)?;
    let mut trajectory = Vec::new();
    for n in 1..=cfg.steps {
        state.step(g, rng);
        if n % cfg.record_every == 0 || n == cfg.steps {
            trajectory.push(RegretRecord {
                n,
                joint_action: g.joint_index(&state.actions),
                max_regret: state.max_regret(),
                ce_violation: ce_violation_raw(&state.z, g),
            });
        }
    }
    Ok(RegretRun { trajectory, final_z: state.z(), final_regrets: state.regrets, mu: state.mu })
}

/// Observation noise of the global game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDensity {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
    /// Discrete noise; its largest mass plays the role of the peak density.
    Pmf { probs: Vec<f64> },
}

impl NoiseDensity {
    pub fn max_density(&self) -> Result<f64> {
        let peak = match self {
            NoiseDensity::Uniform { half_width } => 1.0 / (2.0 * half_width),
            NoiseDensity::Gaussian { sigma } => 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma),
            NoiseDensity::Pmf { probs } => {
                let b = Belief::new(probs.clone())?;
                b.as_slice().iter().copied().fold(0.0, f64::max)
            }
        };
        if peak.is_finite() && peak > 0.0 {
            Ok(peak)
        } else {
            Err(Error::UnboundedDensity)
        }
    }

    /// Slope below which monotonicity of the threshold equilibrium is not
    /// guaranteed: `-1 / max p_W`.
    pub fn slope_threshold(&self) -> Result<f64> {
        Ok(-1.0 / self.max_density()?)
    }
}

/// Holds iff `congestion_slope_min > -1 / max p_W`.
pub fn bne_monotone_condition(noise: &NoiseDensity, congestion_slope_min: f64) -> Result<OrderVerdict> {
    if congestion_slope_min.is_nan() {
        return Err(Error::ParameterOutOfRange { name: "congestion slope", value: congestion_slope_min });
    }
    if congestion_slope_min > noise.slope_threshold()? {
        Ok(OrderVerdict::pass())
    } else {
        Ok(OrderVerdict::fail(vec![0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::random_stochastic;

    fn pennies() -> MatrixGame {
        MatrixGame::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn matrix_game_examples() {
        let s = matrix_game_value(&pennies()).unwrap();
        assert!(s.value.abs() < 1e-10);
        for v in s.x.as_slice().iter().chain(s.y.as_slice()) {
            assert!((v - 0.5).abs() < 1e-10);
        }
        let c = MatrixGame::new(vec![vec![3.5; 3]; 2]).unwrap();
        assert!((matrix_game_value(&c).unwrap().value - 3.5).abs() < 1e-12);
        let z = MatrixGame::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matrix_game_value(&z).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn matrix_game_saddle_and_swap() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..50 {
            let (m, n) = (1 + rng.index(4), 1 + rng.index(4));
            let g = MatrixGame::new((0..m).map(|_| (0..n).map(|_| rng.uniform() * 4.0 - 2.0).collect()).collect())
                .unwrap();
            let s = matrix_game_value(&g).unwrap();
            // x guarantees the value against every pure row, y against every pure column
            for i in 0..m {
                let e: Vec<f64> = (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
                assert!(g.payoff(s.x.as_slice(), &e) >= s.value - 1e-9);
            }
            for j in 0..n {
                let e: Vec<f64> = (0..n).map(|k| if k == j { 1.0 } else { 0.0 }).collect();
                assert!(g.payoff(&e, s.y.as_slice()) <= s.value + 1e-9);
            }
            let swapped = matrix_game_value(&g.swapped()).unwrap();
            assert!((s.value + swapped.value).abs() < 1e-9);
        }
    }

    fn mdp_value(p: &[Vec<Vec<f64>>], c: &[Vec<f64>], rho: f64, minimize: bool) -> Vec<f64> {
        // p[u][i][j], c[i][u]
        let x = c.len();
        let mut v = vec![0.0; x];
        for _ in 0..5000 {
            let next: Vec<f64> = (0..x)
                .map(|i| {
                    let vals = (0..p.len()).map(|u| c[i][u] + rho * (0..x).map(|j| p[u][i][j] * v[j]).sum::<f64>());
                    if minimize {
                        vals.fold(f64::INFINITY, f64::min)
                    } else {
                        vals.fold(f64::NEG_INFINITY, f64::max)
                    }
                })
                .collect();
            let d = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if d < 1e-13 {
                break;
            }
        }
        v
    }

    fn random_game(rng: &mut RngStream, x: usize, u1: usize, u2: usize) -> SingleControllerGame {
        let p = (0..u1).map(|_| random_stochastic(x, rng)).collect();
        let cost = (0..x).map(|_| (0..u1).map(|_| (0..u2).map(|_| rng.uniform() * 2.0).collect()).collect()).collect();
        SingleControllerGame::new(p, cost, 0.8, vec![1.0 / x as f64; x]).unwrap()
    }

    #[test]
    fn single_controller_duality_and_saddle() {
        let mut rng = RngStream::new(8, 0);
        for _ in 0..10 {
            let g = random_game(&mut rng, 3, 2, 2);
            let s = single_controller_solve(&g).unwrap();
            assert!(s.duality_gap() < 1e-6, "gap {}", s.duality_gap());
            let x = g.states();
            // player 1 best response against q*
            let p: Vec<Vec<Vec<f64>>> = (0..g.actions1()).map(|u| g.transition(u).rows().to_vec()).collect();
            let c1: Vec<Vec<f64>> = (0..x)
                .map(|i| (0..g.actions1()).map(|u| (0..g.actions2()).map(|w| g.cost(i, u, w) * s.q[i][w]).sum()).collect())
                .collect();
            let v1 = mdp_value(&p, &c1, g.discount(), true);
            for i in 0..x {
                assert!(v1[i] >= s.value[i] - 1e-6);
            }
            // player 2 best response against p*: transitions fixed by p*
            let pp: Vec<Vec<f64>> = (0..x)
                .map(|i| (0..x).map(|j| (0..g.actions1()).map(|u| s.p[i][u] * g.transition(u).get(i, j)).sum()).collect())
                .collect();
            let p2 = vec![pp; g.actions2()];
            let c2: Vec<Vec<f64>> = (0..x)
                .map(|i| (0..g.actions2()).map(|w| (0..g.actions1()).map(|u| g.cost(i, u, w) * s.p[i][u]).sum()).collect())
                .collect();
            let v2 = mdp_value(&p2, &c2, g.discount(), false);
            for i in 0..x {
                assert!(v2[i] <= s.value[i] + 1e-6);
            }
        }
    }

    #[test]
    fn single_controller_without_decisions_is_linear_solve() {
        let mut rng = RngStream::new(9, 0);
        let g = random_game(&mut rng, 4, 1, 1);
        let s = single_controller_solve(&g).unwrap();
        // V = c + rho P V by fixed-point iteration
        let p = g.transition(0).rows();
        let mut v = vec![0.0; 4];
        for _ in 0..2000 {
            v = (0..4).map(|i| g.cost(i, 0, 0) + 0.8 * (0..4).map(|j| p[i][j] * v[j]).sum::<f64>()).collect();
        }
        for i in 0..4 {
            assert!((v[i] - s.value[i]).abs() < 1e-9);
        }
    }

    fn pennies_nf() -> NormalFormGame {
        NormalFormGame::bimatrix(
            &[vec![1.0, -1.0], vec![-1.0, 1.0]],
            &[vec![-1.0, 1.0], vec![1.0, -1.0]],
        )
        .unwrap()
    }

    fn prisoners() -> NormalFormGame {
        // action 0 cooperate, 1 defect
        NormalFormGame::bimatrix(&[vec![3.0, 0.0], vec![5.0, 1.0]], &[vec![3.0, 5.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn joint_index_roundtrip() {
        let g = NormalFormGame::new(3, 3, vec![vec![0.0; 27]; 3]).unwrap();
        for k in 0..27 {
            assert_eq!(g.joint_index(&g.profile(k)), k);
            assert_eq!(g.action_of(g.with_action(k, 1, 2), 1), 2);
        }
        assert_eq!(g.joint_index(&[1, 0, 2]), 11);
    }

    #[test]
    fn correlated_equilibrium_checks() {
        let g = pennies_nf();
        assert!(correlated_eq_check(&Belief::uniform(4), &g).unwrap().holds);
        let v = correlated_eq_check(&Belief::unit(4, 0), &g).unwrap();
        assert!(!v.holds);
        assert_eq!(v.witness, Some(vec![1, 0, 1]));
        let pd = prisoners();
        assert!(correlated_eq_check(&Belief::unit(4, 3), &pd).unwrap().holds);
        // mutual cooperation: each gains 2 by defecting
        assert!((ce_violation(&Belief::unit(4, 0), &pd).unwrap() - 2.0).abs() < 1e-12);
        assert!((ce_violation(&Belief::unit(4, 0), &pd.scaled(2.0)).unwrap() - 4.0).abs() < 1e-12);
        assert!(ce_violation(&Belief::uniform(3), &pd).is_err());
    }

    #[test]
    fn correlated_equilibrium_find() {
        let pd = prisoners();
        let z = correlated_eq_find(&pd).unwrap();
        assert!((z[3] - 1.0).abs() < 1e-9);
        let z = correlated_eq_find(&pennies_nf()).unwrap();
        assert!(correlated_eq_check(&z, &pennies_nf()).unwrap().holds);
        let single = NormalFormGame::new(2, 1, vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(correlated_eq_find(&single).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn regret_matching_basics() {
        let g = prisoners();
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            RegretState::new(&g, 0.01, Some(1.0), &mut rng),
            Err(Error::InertiaTooSmall { .. })
        ));
        let s = RegretState::new(&g, 0.01, None, &mut rng).unwrap();
        assert_eq!(s.mu(), 10.0);
        for l in 0..2 {
            let row = s.switch_row(l);
            assert_eq!(row[s.profile()[l]], 1.0);
        }
        let single = NormalFormGame::new(2, 1, vec![vec![1.0], vec![1.0]]).unwrap();
        let run = regret_matching_run(&single, &RegretConfig::new(0.1, 100), &mut rng).unwrap();
        assert_eq!(run.final_z.as_slice(), &[1.0]);
        assert_eq!(run.mu, 1.0);
    }

    #[test]
    fn regret_matching_prisoners_dilemma_settles_on_defection() {
        let mut rng = RngStream::new(2, 0);
        let cfg = RegretConfig { record_every: 1000, ..RegretConfig::new(0.01, 20_000) };
        let run = regret_matching_run(&prisoners(), &cfg, &mut rng).unwrap();
        assert!(run.final_z[3] > 0.99);
        assert!(run.trajectory.last().unwrap().max_regret < 0.05);
        let csv = run.to_csv().render();
        assert!(csv.starts_with("n,joint_action,max_regret,ce_violation\n"));
    }

    #[test]
    fn bne_condition_examples() {
        let u = NoiseDensity::Uniform { half_width: 1.0 };
        assert!(bne_monotone_condition(&u, -1.9).unwrap().holds);
        assert!(!bne_monotone_condition(&u, -2.0).unwrap().holds);
        let gsn = NoiseDensity::Gaussian { sigma: 1.0 };
        assert!(!bne_monotone_condition(&gsn, -3.0).unwrap().holds);
        assert!(bne_monotone_condition(&gsn, -2.5).unwrap().holds);
        assert!((gsn.slope_threshold().unwrap() + (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let pmf = NoiseDensity::Pmf { probs: vec![0.25, 0.5, 0.25] };
        assert!(bne_monotone_condition(&pmf, 0.0).unwrap().holds);
        assert!(matches!(
            bne_monotone_condition(&NoiseDensity::Gaussian { sigma: 0.0 }, 0.0),
            Err(Error::UnboundedDensity)
        ));
    }
}
