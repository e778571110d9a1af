//! Belief-grid dynamic programming: finite-horizon value iteration, the
//! tiger problem, stopping-set geometry, a sensor-budget DP and the
//! replacement DP.
//!
//! Internally everything minimizes cost; reward models are negated on the
//! way in and values are reported back in the model's own sign where noted.

use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::detect::{argmin_first, is_single_run};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::markov::{check_dim, Belief, ObservationMatrix, StochasticMatrix};
use crate::orders::{is_submodular, OrderVerdict};
use crate::par::map_range;

/// Smallest grid resolution accepted by the belief-grid solvers.
pub const MIN_RESOLUTION: usize = 51;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PomdpSpec", into = "PomdpSpec")]
pub struct PomdpModel {
    p: Vec<StochasticMatrix>,
    b: Vec<ObservationMatrix>,
    costs: Vec<Vec<f64>>,
    discount: Option<f64>,
    reward_form: bool,
}

/// Serialized form: exactly one of `costs` or `rewards`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpSpec {
    pub transitions: Vec<StochasticMatrix>,
    pub observations: Vec<ObservationMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
}

impl TryFrom<PomdpSpec> for PomdpModel {
    type Error = Error;
    fn try_from(s: PomdpSpec) -> Result<Self> {
        match (s.costs, s.rewards) {
            (Some(c), None) => PomdpModel::new(s.transitions, s.observations, c, s.discount),
            (None, Some(r)) => PomdpModel::from_rewards(s.transitions, s.observations, r, s.discount),
            _ => Err(Error::InvalidBelief("exactly one of costs or rewards must be given".into())),
        }
    }
}

impl From<PomdpModel> for PomdpSpec {
    fn from(m: PomdpModel) -> Self {
        let native: Vec<Vec<f64>> = m.native_costs();
        let (costs, rewards) = if m.reward_form { (None, Some(native)) } else { (Some(native), None) };
        PomdpSpec { transitions: m.p, observations: m.b, costs, rewards, discount: m.discount }
    }
}

impl PomdpModel {
    /// `costs[u][i]` is the cost of action `u` in state `i`.
    pub fn new(
        p: Vec<StochasticMatrix>,
        b: Vec<ObservationMatrix>,
        costs: Vec<Vec<f64>>,
        discount: Option<f64>,
    ) -> Result<Self> {
        let m = Self { p, b, costs, discount, reward_form: false };
        m.validate()?;
        Ok(m)
    }

    /// Reward inputs are negated into costs.
    pub fn from_rewards(
        p: Vec<StochasticMatrix>,
        b: Vec<ObservationMatrix>,
        rewards: Vec<Vec<f64>>,
        discount: Option<f64>,
    ) -> Result<Self> {
        let costs = rewards.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let m = Self { p, b, costs, discount, reward_form: true };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let u = self.p.len();
        if u == 0 {
            return Err(Error::Empty("actions"));
        }
        check_dim(u, self.b.len())?;
        check_dim(u, self.costs.len())?;
        let x = self.p[0].dim();
        let y = self.b[0].symbols();
        for a in 0..u {
            check_dim(x, self.p[a].dim())?;
            check_dim(x, self.b[a].states())?;
            check_dim(y, self.b[a].symbols())?;
            check_dim(x, self.costs[a].len())?;
            if self.costs[a].iter().any(|c| !c.is_finite()) {
                return Err(Error::ParameterOutOfRange { name: "cost", value: f64::NAN });
            }
        }
        if let Some(r) = self.discount {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::ParameterOutOfRange { name: "discount", value: r });
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.p[0].dim()
    }

    pub fn actions(&self) -> usize {
        self.p.len()
    }

    pub fn symbols(&self) -> usize {
        self.b[0].symbols()
    }

    pub fn transition(&self, u: usize) -> &StochasticMatrix {
        &self.p[u]
    }

    pub fn observation(&self, u: usize) -> &ObservationMatrix {
        &self.b[u]
    }

    /// Canonical (minimization) cost vector of action `u`.
    pub fn cost(&self, u: usize) -> &[f64] {
        &self.costs[u]
    }

    pub fn is_reward_form(&self) -> bool {
        self.reward_form
    }

    fn native_costs(&self) -> Vec<Vec<f64>> {
        if self.reward_form {
            self.costs.iter().map(|c| c.iter().map(|v| -v).collect()).collect()
        } else {
            self.costs.clone()
        }
    }

    pub fn discount(&self) -> f64 {
        self.discount.unwrap_or(1.0)
    }

    /// `T(pi, y, u)` and `sigma(pi, y, u)`.
    pub fn belief_update(&self, pi: &Belief, y: usize, u: usize) -> Result<(Belief, f64)> {
        crate::hmm::filter_step(&self.p[u], &self.b[u], pi, y)
    }
}

/// `sum_y V(T(pi,y)) sigma(pi,y)` with `V` interpolated on the grid.
fn expected_next(grid: &SimplexGrid, prev: &[f64], p: &StochasticMatrix, b: &ObservationMatrix, pi: &[f64]) -> f64 {
    let pred = p.predict_raw(pi);
    let mut acc = 0.0;
    let mut post = vec![0.0; pred.len()];
    for y in 0..b.symbols() {
        let mut sigma = 0.0;
        for i in 0..pred.len() {
            post[i] = pred[i] * b.get(i, y);
            sigma += post[i];
        }
        if sigma > 0.0 {
            post.iter_mut().for_each(|v| *v /= sigma);
            acc += sigma * grid.interpolate(prev, &post);
        }
    }
    acc
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGridValue {
    pub n: usize,
    /// Cost-form values (negated rewards for reward models).
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GridValueSequence {
    pub grid: SimplexGrid,
    /// Stages `n = 0..=N`, stage 0 identically zero.
    pub stages: Vec<BeliefGridValue>,
    pub reward_form: bool,
}

impl GridValueSequence {
    pub fn last(&self) -> &BeliefGridValue {
        self.stages.last().expect("stage 0 always present")
    }

    /// Values in the model's own sign.
    pub fn native_values(&self, n: usize) -> Vec<f64> {
        let v = &self.stages[n].values;
        if self.reward_form {
            v.iter().map(|x| -x).collect()
        } else {
            v.clone()
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let x = self.grid.dim();
        let mut header: Vec<String> = (0..x).map(|i| format!("pi_{i}")).collect();
        header.extend(["n".to_string(), "value".to_string(), "action".to_string()]);
        let mut t = CsvTable::new(header);
        for stage in &self.stages {
            let native = self.native_values(stage.n);
            for i in 0..self.grid.len() {
                let mut row: Vec<String> = self.grid.point(i).into_iter().map(num).collect();
                row.push(stage.n.to_string());
                row.push(num(native[i]));
                row.push(stage.policy[i].to_string());
                t.push(row);
            }
        }
        t
    }
}

/// Extra belief-dependent stage cost, e.g. `min_i pi(i)`.
pub type GridCost<'a> = &'a (dyn Fn(&[f64], usize) -> f64 + Sync);

pub fn value_iteration_grid(model: &PomdpModel, horizon: usize, resolution: usize) -> Result<GridValueSequence> {
    value_iteration_grid_with(model, horizon, resolution, None)
}

/// `V_n(pi) = min_u { c_u' pi + rho sum_y V_{n-1}(T(pi,y,u)) sigma(pi,y,u) }`,
/// `V_0 = 0`, with `V_{n-1}` interpolated between lattice points.
pub fn value_iteration_grid_with(
    model: &PomdpModel,
    horizon: usize,
    resolution: usize,
    extra: Option<GridCost<'_>>,
) -> Result<GridValueSequence> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::GridTooCoarse { resolution, minimum: MIN_RESOLUTION });
    }
    if horizon == 0 {
        return Err(Error::ParameterOutOfRange { name: "horizon", value: 0.0 });
    }
    let grid = SimplexGrid::new(model.states(), resolution)?;
    let rho = model.discount();
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let mut stages = vec![BeliefGridValue { n: 0, values: vec![0.0; grid.len()], policy: vec![0; grid.len()] }];
    for n in 1..=horizon {
        let prev = &stages[n - 1].values;
        let backed: Vec<(f64, usize)> = map_range(grid.len(), |i| {
            let pi = &points[i];
            let q: Vec<f64> = (0..model.actions())
                .map(|u| {
                    let stage = dot(model.cost(u), pi) + extra.map_or(0.0, |f| f(pi, u));
                    stage + rho * expected_next(&grid, prev, model.transition(u), model.observation(u), pi)
                })
                .collect();
            let a = argmin_first(&q);
            (q[a], a)
        });
        let (values, policy) = backed.into_iter().unzip();
        stages.push(BeliefGridValue { n, values, policy });
    }
    Ok(GridValueSequence { grid, stages, reward_form: model.reward_form })
}

/// Tiger actions.
pub const TIGER_LEFT: usize = 0;
pub const TIGER_RIGHT: usize = 1;
pub const TIGER_HEAR: usize = 2;

/// Two doors, states `{l, r}`, observations `{l, r}`, actions `{l, r, h}`.
/// Opening a door resets the tiger uniformly and reveals its position.
pub fn tiger_model(p: f64, q: f64, alpha: f64, beta: f64, gamma: f64) -> Result<PomdpModel> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::ParameterOutOfRange { name, value: v });
        }
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0) {
            return Err(Error::ParameterOutOfRange { name, value: v });
        }
    }
    if !(gamma >= 0.0) {
        return Err(Error::ParameterOutOfRange { name: "gamma", value: gamma });
    }
    let reset = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]])?;
    let hear = ObservationMatrix::new(vec![vec![p, 1.0 - p], vec![1.0 - q, q]])?;
    PomdpModel::new(
        vec![reset.clone(), reset, StochasticMatrix::identity(2)],
        vec![ObservationMatrix::identity(2), ObservationMatrix::identity(2), hear],
        vec![vec![alpha, -beta], vec![-beta, alpha], vec![gamma, gamma]],
        None,
    )
}

/// Stopping-time POMDP: stop (terminal) with cost `c1`, or pay `c2` and
/// observe once more through `(P, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingPomdp {
    pub p: StochasticMatrix,
    pub b: ObservationMatrix,
    pub stop_cost: Vec<f64>,
    pub continue_cost: Vec<f64>,
}

impl StoppingPomdp {
    pub fn new(p: StochasticMatrix, b: ObservationMatrix, stop_cost: Vec<f64>, continue_cost: Vec<f64>) -> Result<Self> {
        let x = p.dim();
        check_dim(x, b.states())?;
        check_dim(x, stop_cost.len())?;
        check_dim(x, continue_cost.len())?;
        if stop_cost.iter().chain(&continue_cost).any(|c| !(*c >= 0.0)) {
            return Err(Error::NotStoppingProblem("costs must be nonnegative".into()));
        }
        Ok(Self { p, b, stop_cost, continue_cost })
    }

    /// Action 0 is the terminal stop action, action 1 continues.
    pub fn from_pomdp(model: &PomdpModel) -> Result<Self> {
        if model.actions() != 2 {
            return Err(Error::NotStoppingProblem(format!("{} actions, expected 2", model.actions())));
        }
        if model.is_reward_form() {
            return Err(Error::NotStoppingProblem("stopping problems take costs".into()));
        }
        Self::new(model.transition(1).clone(), model.observation(1).clone(), model.cost(0).to_vec(), model.cost(1).to_vec())
    }

    /// `c1'pi - c2'pi - c1'P'pi`; the explicit set is where this is `<= 0`.
    pub fn explicit_margin(&self, pi: &[f64]) -> f64 {
        dot(&self.stop_cost, pi) - dot(&self.continue_cost, pi) - dot(&self.stop_cost, &self.p.predict_raw(pi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingAnalysis {
    /// `S_n` as grid masks for `n = 0..=N`.
    pub stop_masks: Vec<Vec<bool>>,
    pub values: Vec<f64>,
    pub nested: OrderVerdict,
    /// Contiguity of every `S_n` (two-state models only).
    pub contiguous: Option<bool>,
    pub explicit_mask: Vec<bool>,
    /// The explicit set maps into itself under every observation, checked
    /// exactly at every grid point.
    pub closure_holds: bool,
    /// Explicit set inside `S_N`, mismatches allowed within one lattice step
    /// of the hyperplane.
    pub explicit_in_final: bool,
    /// Explicit set equals `S_N` within one lattice step; `None` unless the
    /// closure condition holds.
    pub explicit_equals_final: Option<bool>,
}

pub fn stopping_set_analysis(sp: &StoppingPomdp, horizon: usize, resolution: usize) -> Result<StoppingAnalysis> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::GridTooCoarse { resolution, minimum: MIN_RESOLUTION });
    }
    let grid = SimplexGrid::new(sp.p.dim(), resolution)?;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let stop: Vec<f64> = points.iter().map(|pi| dot(&sp.stop_cost, pi)).collect();
    let cont0: Vec<f64> = points.iter().map(|pi| dot(&sp.continue_cost, pi)).collect();
    let mut v = vec![0.0; grid.len()];
    let mut stop_masks = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        let cont: Vec<f64> = map_range(grid.len(), |i| cont0[i] + expected_next(&grid, &v, &sp.p, &sp.b, &points[i]));
        stop_masks.push((0..grid.len()).map(|i| stop[i] <= cont[i]).collect::<Vec<bool>>());
        if n < horizon {
            v = (0..grid.len()).map(|i| stop[i].min(cont[i])).collect();
        }
    }
    let mut nested = OrderVerdict::pass();
    'outer: for n in 0..horizon {
        for i in 0..grid.len() {
            if stop_masks[n][i] && !stop_masks[n + 1][i] {
                nested = OrderVerdict::fail(vec![n, i]);
                break 'outer;
            }
        }
    }
    let contiguous = (sp.p.dim() == 2).then(|| {
        stop_masks.iter().all(|m| {
            let labels: Vec<usize> = m.iter().map(|&s| usize::from(s)).collect();
            is_single_run(&labels, 1)
        })
    });
    let margin: Vec<f64> = points.iter().map(|pi| sp.explicit_margin(pi)).collect();
    let explicit_mask: Vec<bool> = margin.iter().map(|&h| h <= 1e-12).collect();
    let mut closure_holds = true;
    for (i, pi) in points.iter().enumerate() {
        if !explicit_mask[i] {
            continue;
        }
        let belief = Belief::from_weights(pi.clone())?;
        for y in 0..sp.b.symbols() {
            if let Ok((post, _)) = crate::hmm::filter_step(&sp.p, &sp.b, &belief, y) {
                if sp.explicit_margin(post.as_slice()) > 1e-12 {
                    closure_holds = false;
                }
            }
        }
    }
    // a single lattice step changes the linear margin by at most its spread / M
    let coeffs: Vec<f64> = (0..sp.p.dim()).map(|i| sp.explicit_margin(Belief::unit(sp.p.dim(), i).as_slice())).collect();
    let spread = coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - coeffs.iter().copied().fold(f64::INFINITY, f64::min);
    let cell = spread / grid.divisions() as f64 + 1e-12;
    let last = &stop_masks[horizon];
    let explicit_in_final = (0..grid.len()).all(|i| !explicit_mask[i] || last[i] || margin[i].abs() <= cell);
    let explicit_equals_final = closure_holds
        .then(|| (0..grid.len()).all(|i| explicit_mask[i] == last[i] || margin[i].abs() <= cell));
    let final_values = (0..grid.len())
        .map(|i| stop[i].min(cont0[i] + expected_next(&grid, &v, &sp.p, &sp.b, &points[i])))
        .collect();
    Ok(StoppingAnalysis {
        stop_masks,
        values: final_values,
        nested,
        contiguous,
        explicit_mask,
        closure_holds,
        explicit_in_final,
        explicit_equals_final,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetBoundary {
    /// `V_n(pi, 0) = 0` as stated.
    Literal,
    /// With no budget left, sensor 2 keeps running.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct BudgetTable {
    pub grid: SimplexGrid,
    pub boundary: BudgetBoundary,
    /// `values[n][l][i]` for horizon `n = 0..=N`, remaining budget `l = 0..=L`.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl BudgetTable {
    pub fn to_csv(&self) -> CsvTable {
        let x = self.grid.dim();
        let mut header: Vec<String> = (0..x).map(|i| format!("pi_{i}")).collect();
        header.extend(["n".to_string(), "l".to_string(), "value".to_string(), "boundary".to_string()]);
        let label = match self.boundary {
            BudgetBoundary::Literal => "literal",
            BudgetBoundary::Fallback => "fallback",
        };
        let mut t = CsvTable::new(header);
        for (n, per_l) in self.values.iter().enumerate() {
            for (l, vals) in per_l.iter().enumerate() {
                for i in 0..self.grid.len() {
                    let mut row: Vec<String> = self.grid.point(i).into_iter().map(num).collect();
                    row.extend([n.to_string(), l.to_string(), num(vals[i]), label.to_string()]);
                    t.push(row);
                }
            }
        }
        t
    }
}

/// Reward-maximizing DP where sensor 0 may be used at most `budget` times:
/// `V_{n+1}(pi,l) = max{R(pi,0) + sum_y V_n(T(pi,y,0), l-1) sigma,
///                      R(pi,1) + sum_y V_n(T(pi,y,1), l) sigma}`.
pub fn budget_dp(
    model: &PomdpModel,
    budget: usize,
    horizon: usize,
    resolution: usize,
    boundary: BudgetBoundary,
) -> Result<BudgetTable> {
    if model.actions() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: model.actions() });
    }
    if budget > horizon {
        return Err(Error::BudgetExceedsHorizon { budget, horizon });
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::GridTooCoarse { resolution, minimum: MIN_RESOLUTION });
    }
    let grid = SimplexGrid::new(model.states(), resolution)?;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let reward = |u: usize, pi: &[f64]| -dot(model.cost(u), pi);
    let rho = model.discount();
    let mut values = vec![vec![vec![0.0; grid.len()]; budget + 1]];
    for n in 1..=horizon {
        let prev = &values[n - 1];
        let mut stage = Vec::with_capacity(budget + 1);
        for l in 0..=budget {
            let row: Vec<f64> = map_range(grid.len(), |i| {
                let pi = &points[i];
                let keep = reward(1, pi) + rho * expected_next(&grid, &prev[l], model.transition(1), model.observation(1), pi);
                if l == 0 {
                    return match boundary {
                        BudgetBoundary::Literal => 0.0,
                        BudgetBoundary::Fallback => keep,
                    };
                }
                let spend =
                    reward(0, pi) + rho * expected_next(&grid, &prev[l - 1], model.transition(0), model.observation(0), pi);
                spend.max(keep)
            });
            stage.push(row);
        }
        values.push(stage);
    }
    Ok(BudgetTable { grid, boundary, values })
}

/// Machine replacement over a horizon: brand `u` costs `c(u)` and lasts `k`
/// steps with probability `lifetimes[u][k]` (`lifetimes[u][0] = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementModel {
    pub costs: Vec<f64>,
    pub lifetimes: Vec<Vec<f64>>,
    pub horizon: usize,
}

impl ReplacementModel {
    pub fn new(costs: Vec<f64>, lifetimes: Vec<Vec<f64>>, horizon: usize) -> Result<Self> {
        let m = Self { costs, lifetimes, horizon };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.costs.is_empty() {
            return Err(Error::Empty("brands"));
        }
        check_dim(self.costs.len(), self.lifetimes.len())?;
        for (u, pmf) in self.lifetimes.iter().enumerate() {
            if !(self.costs[u] > 0.0) {
                return Err(Error::ParameterOutOfRange { name: "cost", value: self.costs[u] });
            }
            if let Some(&p0) = pmf.first() {
                if p0 != 0.0 {
                    return Err(Error::ParameterOutOfRange { name: "lifetime p(0)", value: p0 });
                }
            }
            for (k, &v) in pmf.iter().enumerate() {
                if !(v >= 0.0) {
                    return Err(Error::NegativeEntry { row: u, col: k, value: v });
                }
            }
            let s: f64 = pmf.iter().sum();
            if s > 1.0 + 1e-9 {
                return Err(Error::RowSumOutOfTolerance { row: u, sum: s });
            }
        }
        Ok(())
    }

    /// Geometric lifetimes with per-step failure probability `hazard[u]`,
    /// truncated at `kmax`.
    pub fn geometric(costs: Vec<f64>, hazard: &[f64], kmax: usize, horizon: usize) -> Result<Self> {
        let lifetimes = hazard
            .iter()
            .map(|&h| {
                let mut pmf = vec![0.0];
                pmf.extend((1..=kmax).map(|k| h * (1.0 - h).powi(k as i32 - 1)));
                pmf
            })
            .collect();
        Self::new(costs, lifetimes, horizon)
    }

    fn p(&self, k: usize, u: usize) -> f64 {
        self.lifetimes[u].get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementSolution {
    /// `q[n][u]`.
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
}

impl ReplacementSolution {
    pub fn submodular(&self) -> OrderVerdict {
        is_submodular(&self.q)
    }
}

/// `Q(n,u) = c(u) + sum_{k=1}^{n} V(n-k) p(k,u)`, `V(n) = min_u Q(n,u)`.
pub fn replacement_dp(rm: &ReplacementModel) -> Result<ReplacementSolution> {
    rm.validate()?;
    let brands = rm.costs.len();
    let mut q = Vec::with_capacity(rm.horizon + 1);
    let mut v: Vec<f64> = Vec::with_capacity(rm.horizon + 1);
    let mut policy = Vec::with_capacity(rm.horizon + 1);
    for n in 0..=rm.horizon {
        let row: Vec<f64> = (0..brands)
            .map(|u| rm.costs[u] + (1..=n).map(|k| v[n - k] * rm.p(k, u)).sum::<f64>())
            .collect();
        let a = argmin_first(&row);
        v.push(row[a]);
        policy.push(a);
        q.push(row);
    }
    Ok(ReplacementSolution { q, v, policy })
}
