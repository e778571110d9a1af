//! Exact HMM filtering, a path-enumeration oracle, and the sensitivity
//! bounds for filtering with a mis-specified transition matrix.
//!
//! All distances here are plain L1. `eps` is the induced matrix norm
//! `max_i sum_j |P_ij - Pbar_ij|`.

use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::error::{Error, Result};
use crate::markov::{check_dim, Belief, ObservationMatrix, StochasticMatrix};
use crate::rng::RngStream;

/// Normalization constants at or below this raise [`Error::ZeroLikelihood`].
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Enumeration guard for [`brute_force_posterior`].
pub const MAX_ENUM_STEPS: usize = 12;
pub const MAX_ENUM_STATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub p: StochasticMatrix,
    pub b: ObservationMatrix,
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    pub prior: Belief,
}

impl HmmModel {
    pub fn new(
        p: StochasticMatrix,
        b: ObservationMatrix,
        levels: Option<Vec<f64>>,
        prior: Belief,
    ) -> Result<Self> {
        let model = Self { p, b, levels, prior };
        model.validate()?;
        Ok(model)
    }

    /// Checks dimensions after deserialization.
    pub fn validate(&self) -> Result<()> {
        let x = self.p.dim();
        check_dim(x, self.b.states())?;
        check_dim(x, self.prior.dim())?;
        if let Some(g) = &self.levels {
            check_dim(x, g.len())?;
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.p.dim()
    }

    pub fn symbols(&self) -> usize {
        self.b.symbols()
    }

    pub fn filter_step(&self, pi: &Belief, y: usize) -> Result<(Belief, f64)> {
        filter_step(&self.p, &self.b, pi, y)
    }

    /// Filtered beliefs `pi_1..pi_k` and the log-likelihood of `ys`.
    pub fn filter(&self, ys: &[usize]) -> Result<(Vec<Belief>, f64)> {
        let mut pi = self.prior.clone();
        let mut out = Vec::with_capacity(ys.len());
        let mut loglik = 0.0;
        for &y in ys {
            let (next, sigma) = self.filter_step(&pi, y)?;
            loglik += sigma.ln();
            out.push(next.clone());
            pi = next;
        }
        Ok((out, loglik))
    }

    /// States `x_0..x_n` and observations `y_1..y_n`.
    pub fn simulate(&self, n: usize, rng: &mut RngStream) -> (Vec<usize>, Vec<usize>) {
        let states = self.p.simulate(&self.prior, n, rng).expect("validated dimensions");
        let obs = states[1..].iter().map(|&x| self.b.sample(x, rng)).collect();
        (states, obs)
    }
}

/// One Bayes step `T(pi, y) = B_y P' pi / sigma` with `sigma = 1' B_y P' pi`.
pub fn filter_step(
    p: &StochasticMatrix,
    b: &ObservationMatrix,
    pi: &Belief,
    y: usize,
) -> Result<(Belief, f64)> {
    check_dim(p.dim(), pi.dim())?;
    check_dim(p.dim(), b.states())?;
    let like = b.column(y)?;
    let mut unnorm = p.predict_raw(pi.as_slice());
    for (u, l) in unnorm.iter_mut().zip(&like) {
        *u *= l;
    }
    let sigma: f64 = unnorm.iter().sum();
    if !(sigma > UNDERFLOW_FLOOR) {
        return Err(Error::ZeroLikelihood { y, sigma });
    }
    let post = Belief::from_weights(unnorm).map_err(|_| Error::ZeroLikelihood { y, sigma })?;
    Ok((post, sigma))
}

/// `P' pi`.
pub fn predict_step(p: &StochasticMatrix, pi: &Belief) -> Result<Belief> {
    p.predict(pi)
}

/// Exact posterior of `x_k` given `y_1..y_k` by summing the joint
/// `pi0(x_0) prod P(x_{n-1}, x_n) B(x_n, y_n)` over every state path.
/// Also returns the total joint mass `p(y_1..y_k)`.
pub fn brute_force_posterior(model: &HmmModel, ys: &[usize]) -> Result<(Belief, f64)> {
    let x = model.states();
    if ys.len() > MAX_ENUM_STEPS || x > MAX_ENUM_STATES {
        return Err(Error::TooLarge { states: x, steps: ys.len() });
    }
    if ys.is_empty() {
        return Ok((model.prior.clone(), 1.0));
    }
    for &y in ys {
        if y >= model.symbols() {
            return Err(Error::ObservationOutOfRange { y, size: model.symbols() });
        }
    }
    let mut mass = vec![0.0; x];
    for x0 in 0..x {
        let w0 = model.prior[x0];
        if w0 > 0.0 {
            enumerate_paths(model, ys, 0, x0, w0, &mut mass);
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > UNDERFLOW_FLOOR) {
        return Err(Error::ZeroLikelihood { y: ys[ys.len() - 1], sigma: total });
    }
    Ok((Belief::from_weights(mass)?, total))
}

fn enumerate_paths(
    model: &HmmModel,
    ys: &[usize],
    depth: usize,
    prev: usize,
    prefix: f64,
    mass: &mut [f64],
) {
    let y = ys[depth];
    for next in 0..model.states() {
        let w = prefix * model.p.get(prev, next) * model.b.get(next, y);
        if w == 0.0 {
            continue;
        }
        if depth + 1 == ys.len() {
            mass[next] += w;
        } else {
            enumerate_paths(model, ys, depth + 1, next, w, mass);
        }
    }
}

fn levels(model: &HmmModel) -> Result<&[f64]> {
    model.levels.as_deref().ok_or(Error::MissingLevels)
}

/// Upper bound on `E_y |g'(T(pi,y;P) - T(pi,y;Pbar))|`:
/// `eps * sum_y max_{i,j} g'(I - T(pi,y;Pbar) 1') B_y (e_i - e_j)`.
///
/// The maximum runs over ordered pairs, so each term equals the spread
/// `max_k w_k - min_k w_k` of `w_k = B_ky (g_k - g'T(pi,y;Pbar))`.
pub fn expected_deviation_bound(model: &HmmModel, p_bar: &StochasticMatrix, pi: &Belief) -> Result<f64> {
    let g = levels(model)?;
    let eps = model.p.perturbation_norm(p_bar)?;
    if eps == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for y in 0..model.symbols() {
        let t_bar = match filter_step(p_bar, &model.b, pi, y) {
            Ok((t, _)) => t,
            // y impossible under Pbar: T is undefined, fall back to the
            // prediction, which keeps every term finite
            Err(Error::ZeroLikelihood { .. }) => p_bar.predict(pi)?,
            Err(e) => return Err(e),
        };
        let mean = t_bar.dot(g);
        let w: Vec<f64> = (0..model.states()).map(|k| model.b.get(k, y) * (g[k] - mean)).collect();
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        total += hi - lo;
    }
    Ok(eps * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStep {
    pub bound: f64,
    pub a_value: f64,
    pub mu_value: f64,
}

/// `A(pibar, y) = 1'B_y Pbar' pibar / max_i B_iy` and
/// `mu(y) = min_i B_iy / max_i B_iy`.
pub fn bound_terms(p_bar: &StochasticMatrix, b: &ObservationMatrix, pi_bar: &Belief, y: usize) -> Result<(f64, f64)> {
    let col = b.column(y)?;
    let max_b = col.iter().copied().fold(0.0, f64::max);
    let min_b = col.iter().copied().fold(f64::INFINITY, f64::min);
    if max_b <= 0.0 {
        return Err(Error::ZeroLikelihood { y, sigma: 0.0 });
    }
    let pred = p_bar.predict(pi_bar)?;
    Ok((pred.dot(&col) / max_b, min_b / max_b))
}

/// One step of the recursive sample-path bound
/// `eps / max{A - eps, mu} + rho(Pbar) err_prev / A`.
pub fn samplepath_bound_step(
    model: &HmmModel,
    p_bar: &StochasticMatrix,
    pi_bar_prev: &Belief,
    err_prev: f64,
    y: usize,
) -> Result<BoundStep> {
    let eps = model.p.perturbation_norm(p_bar)?;
    samplepath_bound_with(eps, p_bar.dobrushin(), p_bar, &model.b, pi_bar_prev, err_prev, y)
}

fn samplepath_bound_with(
    eps: f64,
    rho: f64,
    p_bar: &StochasticMatrix,
    b: &ObservationMatrix,
    pi_bar_prev: &Belief,
    err_prev: f64,
    y: usize,
) -> Result<BoundStep> {
    if !(err_prev >= 0.0) {
        return Err(Error::ParameterOutOfRange { name: "err_prev", value: err_prev });
    }
    let (a, mu) = bound_terms(p_bar, b, pi_bar_prev, y)?;
    let denom = (a - eps).max(mu);
    let first = if eps == 0.0 {
        0.0
    } else if denom > 0.0 {
        eps / denom
    } else {
        return Err(Error::DegenerateBound { a_minus_eps: a - eps, mu });
    };
    let second = if err_prev == 0.0 { 0.0 } else { rho * err_prev / a };
    Ok(BoundStep { bound: first + second, a_value: a, mu_value: mu })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub k: usize,
    pub observed_l1: f64,
    pub samplepath_bound: f64,
    pub a_value: f64,
    pub mu_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub epsilon: f64,
    pub records: Vec<SensitivityRecord>,
}

impl SensitivityReport {
    pub fn max_observed(&self) -> f64 {
        self.records.iter().map(|r| r.observed_l1).fold(0.0, f64::max)
    }

    pub fn max_bound(&self) -> f64 {
        self.records.iter().map(|r| r.samplepath_bound).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["k", "observed_l1", "samplepath_bound", "A_value", "mu_value"]);
        for r in &self.records {
            t.push(vec![
                r.k.to_string(),
                num(r.observed_l1),
                num(r.samplepath_bound),
                num(r.a_value),
                num(r.mu_value),
            ]);
        }
        t
    }
}

/// Simulates `model` for `n` steps and runs two filters side by side, one
/// with the true `P` and one with `p_bar`, both started at the model prior.
pub fn run_sensitivity_experiment(
    model: &HmmModel,
    p_bar: &StochasticMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<SensitivityReport> {
    run_sensitivity_experiment_from(model, p_bar, &model.prior, n, rng)
}

/// As [`run_sensitivity_experiment`] with a separate prior for the
/// mis-specified filter; the bound is seeded with `||pi_0 - pibar_0||_1`.
pub fn run_sensitivity_experiment_from(
    model: &HmmModel,
    p_bar: &StochasticMatrix,
    pi_bar0: &Belief,
    n: usize,
    rng: &mut RngStream,
) -> Result<SensitivityReport> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange { name: "n", value: 0.0 });
    }
    check_dim(model.states(), p_bar.dim())?;
    check_dim(model.states(), pi_bar0.dim())?;
    let eps = model.p.perturbation_norm(p_bar)?;
    let rho = p_bar.dobrushin();
    let (_, ys) = model.simulate(n, rng);
    let mut pi = model.prior.clone();
    let mut pi_bar = pi_bar0.clone();
    let mut err = pi.l1_distance(&pi_bar);
    let mut records = Vec::with_capacity(n);
    for (k, &y) in ys.iter().enumerate() {
        let step = samplepath_bound_with(eps, rho, p_bar, &model.b, &pi_bar, err, y)?;
        pi = model.filter_step(&pi, y)?.0;
        pi_bar = filter_step(p_bar, &model.b, &pi_bar, y)?.0;
        err = step.bound;
        records.push(SensitivityRecord {
            k: k + 1,
            observed_l1: pi.l1_distance(&pi_bar),
            samplepath_bound: step.bound,
            a_value: step.a_value,
            mu_value: step.mu_value,
        });
    }
    Ok(SensitivityReport { epsilon: eps, records })
}
