//! Online estimation of the state levels of an HMM observed in Gaussian
//! noise with known variance and known transition matrix.
//!
//! Three recursions share the same driver: recursive EM with a
//! Gauss-Newton information matrix, recursive maximum likelihood and
//! recursive prediction error. RML and RPE differentiate by central finite
//! differences.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::error::{Error, Result};
use crate::hmm::UNDERFLOW_FLOOR;
use crate::markov::{Belief, StochasticMatrix};
use crate::rng::RngStream;

/// `y_k = g(x_k) + sigma w_k` with `x` a Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub p: StochasticMatrix,
    pub levels: Vec<f64>,
    pub sigma: f64,
    pub prior: Belief,
}

impl GaussianHmm {
    pub fn new(p: StochasticMatrix, levels: Vec<f64>, sigma: f64, prior: Belief) -> Result<Self> {
        let m = Self { p, levels, sigma, prior };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let x = self.p.dim();
        if self.levels.len() != x {
            return Err(Error::DimensionMismatch { expected: x, got: self.levels.len() });
        }
        if self.prior.dim() != x {
            return Err(Error::DimensionMismatch { expected: x, got: self.prior.dim() });
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::ParameterOutOfRange { name: "sigma", value: self.sigma });
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.p.dim()
    }

    /// States `x_0..x_n` and observations `y_1..y_n`.
    pub fn simulate(&self, n: usize, rng: &mut RngStream) -> (Vec<usize>, Vec<f64>) {
        let states = self.p.simulate(&self.prior, n, rng).expect("validated dimensions");
        let ys = states[1..]
            .iter()
            .map(|&x| {
                let w: f64 = StandardNormal.sample(rng);
                self.levels[x] + self.sigma * w
            })
            .collect();
        (states, ys)
    }
}

fn gaussian_density(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// One-step predicted belief `P' pi`.
pub fn predict(p: &StochasticMatrix, pi: &[f64]) -> Vec<f64> {
    p.predict_raw(pi)
}

/// Filter update with levels `g`; returns the posterior and
/// `log 1' B_y P' pi`.
pub fn gaussian_filter_step(p: &StochasticMatrix, g: &[f64], sigma: f64, pi: &[f64], y: f64) -> Result<(Vec<f64>, f64)> {
    let pred = predict(p, pi);
    let mut post: Vec<f64> = pred.iter().zip(g).map(|(q, gi)| q * gaussian_density(y, *gi, sigma)).collect();
    let s: f64 = post.iter().sum();
    if !(s > UNDERFLOW_FLOOR) {
        return Err(Error::ZeroLikelihood { y: 0, sigma: s });
    }
    for v in post.iter_mut() {
        *v /= s;
    }
    Ok((post, s.ln()))
}

/// `log 1' B_y(g) pi_pred`.
pub fn predicted_loglik(pred: &[f64], g: &[f64], sigma: f64, y: f64) -> f64 {
    pred.iter().zip(g).map(|(q, gi)| q * gaussian_density(y, *gi, sigma)).sum::<f64>().ln()
}

/// Recursive EM instant reward `-(1/2 sigma^2) sum_i pi(i) (y - g(i))^2`.
pub fn recem_reward(g: &[f64], pi: &[f64], y: f64, sigma: f64) -> f64 {
    -pi.iter().zip(g).map(|(p, gi)| p * (y - gi) * (y - gi)).sum::<f64>() / (2.0 * sigma * sigma)
}

/// Analytic gradient of [`recem_reward`] with respect to `g`.
pub fn recem_gradient(g: &[f64], pi: &[f64], y: f64, sigma: f64) -> Vec<f64> {
    pi.iter().zip(g).map(|(p, gi)| p * (y - gi) / (sigma * sigma)).collect()
}

/// Magnitude of the (diagonal) Hessian of [`recem_reward`].
pub fn recem_hessian(pi: &[f64], sigma: f64) -> Vec<f64> {
    pi.iter().map(|p| p / (sigma * sigma)).collect()
}

/// Central difference of `f` at `x` along every coordinate.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    RecEm,
    Rml,
    Rpe,
}

/// How the recursive EM information matrix evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationMode {
    /// `I_k = I_{k-1} + eps H_k`.
    #[default]
    Accumulate,
    /// `I_k = (1 - eps) I_{k-1} + eps H_k` with step `eps I_k^{-1} grad`.
    /// An exponential-forgetting variant, not the accumulating recursion.
    Forgetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    /// Recursive EM refreshes its frozen filtering model every `batch` steps.
    #[serde(default = "one")]
    pub batch: usize,
    /// Floor on the diagonal information matrix, also its initial value.
    #[serde(default = "one_f")]
    pub info_floor: f64,
    pub lower: f64,
    pub upper: f64,
    /// Finite-difference step for RML and RPE.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub information: InformationMode,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn default_h() -> f64 {
    1e-4
}

impl EstimatorConfig {
    pub fn new(algorithm: Algorithm, epsilon: f64, lower: f64, upper: f64) -> Self {
        Self {
            algorithm,
            epsilon,
            batch: 1,
            info_floor: 1.0,
            lower,
            upper,
            h: default_h(),
            information: InformationMode::Accumulate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::ParameterOutOfRange { name: "epsilon", value: self.epsilon });
        }
        if self.batch == 0 {
            return Err(Error::ParameterOutOfRange { name: "batch", value: 0.0 });
        }
        if !(self.info_floor > 0.0) {
            return Err(Error::ParameterOutOfRange { name: "info_floor", value: self.info_floor });
        }
        if !(self.h > 0.0) {
            return Err(Error::ParameterOutOfRange { name: "h", value: self.h });
        }
        if !(self.upper > self.lower) {
            return Err(Error::DegenerateBounds { lower: self.lower, upper: self.upper });
        }
        Ok(())
    }

    fn project(&self, g: &mut [f64]) {
        for v in g.iter_mut() {
            *v = v.clamp(self.lower, self.upper);
        }
    }
}

/// Current levels estimate; `sigma` is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub g: Vec<f64>,
    pub sigma: f64,
}

impl ParamEstimate {
    /// Levels sorted ascending, which removes label permutations.
    pub fn sorted(&self) -> Vec<f64> {
        let mut g = self.g.clone();
        g.sort_by(f64::total_cmp);
        g
    }
}

/// One recursive EM step. `pi` is the filtered belief for the current
/// observation; `info` is the diagonal information matrix. Returns how
/// many diagonal entries hit the floor.
pub fn recursive_em_step(
    est: &mut ParamEstimate,
    info: &mut [f64],
    pi: &[f64],
    y: f64,
    cfg: &EstimatorConfig,
) -> usize {
    let grad = recem_gradient(&est.g, pi, y, est.sigma);
    let hess = recem_hessian(pi, est.sigma);
    let mut floored = 0;
    for i in 0..info.len() {
        let next = match cfg.information {
            InformationMode::Accumulate => info[i] + cfg.epsilon * hess[i],
            InformationMode::Forgetting => (1.0 - cfg.epsilon) * info[i] + cfg.epsilon * hess[i],
        };
        if next < cfg.info_floor {
            floored += 1;
        }
        info[i] = next.max(cfg.info_floor);
        let gain = match cfg.information {
            InformationMode::Accumulate => 1.0,
            InformationMode::Forgetting => cfg.epsilon,
        };
        est.g[i] += gain * grad[i] / info[i];
    }
    cfg.project(&mut est.g);
    floored
}

/// One RML step: ascent on `log 1' B_y(g) pi_pred` with a central
/// difference gradient.
pub fn rml_step(est: &mut ParamEstimate, pred: &[f64], y: f64, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let sigma = est.sigma;
    let base: f64 = pred.iter().zip(&est.g).map(|(q, gi)| q * gaussian_density(y, *gi, sigma)).sum();
    if !(base > UNDERFLOW_FLOOR) {
        return Err(Error::ZeroLikelihood { y: 0, sigma: base });
    }
    let grad = central_gradient(&est.g, cfg.h, |g| predicted_loglik(pred, g, sigma, y));
    for (gi, d) in est.g.iter_mut().zip(&grad) {
        *gi += cfg.epsilon * d;
    }
    cfg.project(&mut est.g);
    Ok(grad)
}

/// Squared prediction error `(y - g' P' pi)^2`.
pub fn prediction_error(p: &StochasticMatrix, g: &[f64], pi_prev: &[f64], y: f64) -> f64 {
    let yhat: f64 = predict(p, pi_prev).iter().zip(g).map(|(q, gi)| q * gi).sum();
    y - yhat
}

/// Filters run with the levels shifted by `+h` and `-h` along each
/// coordinate, which carry the filter sensitivity for RPE.
#[derive(Debug, Clone)]
pub struct TangentFilters {
    plus: Vec<Vec<f64>>,
    minus: Vec<Vec<f64>>,
}

impl TangentFilters {
    pub fn new(pi0: &[f64]) -> Self {
        let x = pi0.len();
        Self { plus: vec![pi0.to_vec(); x], minus: vec![pi0.to_vec(); x] }
    }
}

/// One RPE step: descent on the squared prediction error, whose
/// derivative includes the filter's dependence on `g` through the tangent
/// filters. The tangent filters are advanced with `y`.
pub fn rpe_step(
    est: &mut ParamEstimate,
    p: &StochasticMatrix,
    tangents: &mut TangentFilters,
    y: f64,
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    let x = est.g.len();
    let h = cfg.h;
    let mut grad = vec![0.0; x];
    for i in 0..x {
        let mut gp = est.g.clone();
        gp[i] += h;
        let mut gm = est.g.clone();
        gm[i] -= h;
        let ep = prediction_error(p, &gp, &tangents.plus[i], y);
        let em = prediction_error(p, &gm, &tangents.minus[i], y);
        grad[i] = (ep * ep - em * em) / (2.0 * h);
        tangents.plus[i] = gaussian_filter_step(p, &gp, est.sigma, &tangents.plus[i], y)?.0;
        tangents.minus[i] = gaussian_filter_step(p, &gm, est.sigma, &tangents.minus[i], y)?.0;
    }
    for (gi, d) in est.g.iter_mut().zip(&grad) {
        *gi -= cfg.epsilon * d;
    }
    cfg.project(&mut est.g);
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRecord {
    pub k: usize,
    pub g: Vec<f64>,
    /// `y_k` minus its one-step prediction under the previous estimate.
    pub pred_error: f64,
    pub loglik_increment: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub records: Vec<EstimationRecord>,
    pub final_estimate: ParamEstimate,
    /// Diagonal information matrix at the end (recursive EM only).
    pub info: Vec<f64>,
    pub min_info: f64,
    pub floor_events: usize,
}

impl EstimationRun {
    pub fn to_csv(&self) -> CsvTable {
        let x = self.final_estimate.g.len();
        let mut header = vec!["k".to_string()];
        header.extend((1..=x).map(|i| format!("g_{i}")));
        header.push("pred_error".into());
        header.push("loglik_increment".into());
        let mut t = CsvTable::new(header);
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.g.iter().map(|v| num(*v)));
            row.push(num(r.pred_error));
            row.push(num(r.loglik_increment));
            t.push(row);
        }
        t
    }

    /// Largest absolute error of the sorted levels against sorted `truth`.
    pub fn sorted_error(&self, truth: &[f64]) -> f64 {
        let mut t = truth.to_vec();
        t.sort_by(f64::total_cmp);
        self.final_estimate.sorted().iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Estimate the levels of `truth` online from a simulated path of length
/// `n`, starting at `g0`. The filter at step `k` uses the estimate
/// available before `y_k` arrives. `record_every` thins the trajectory.
pub fn run_estimation(
    truth: &GaussianHmm,
    g0: Vec<f64>,
    cfg: &EstimatorConfig,
    n: usize,
    record_every: usize,
    rng: &mut RngStream,
) -> Result<EstimationRun> {
    truth.validate()?;
    cfg.validate()?;
    let x = truth.states();
    if g0.len() != x {
        return Err(Error::DimensionMismatch { expected: x, got: g0.len() });
    }
    if n == 0 || record_every == 0 {
        return Err(Error::ParameterOutOfRange { name: "steps", value: 0.0 });
    }
    let (_, ys) = truth.simulate(n, rng);
    estimate_from_observations(&truth.p, truth.sigma, truth.prior.as_slice(), g0, cfg, &ys, record_every)
}

/// Same as [`run_estimation`] on a given observation sequence.
pub fn estimate_from_observations(
    p: &StochasticMatrix,
    sigma: f64,
    prior: &[f64],
    g0: Vec<f64>,
    cfg: &EstimatorConfig,
    ys: &[f64],
    record_every: usize,
) -> Result<EstimationRun> {
    cfg.validate()?;
    let x = p.dim();
    let mut est = ParamEstimate { g: g0, sigma };
    cfg.project(&mut est.g);
    let mut info = vec![cfg.info_floor; x];
    let mut min_info = f64::INFINITY;
    let mut floor_events = 0;
    let mut pi = prior.to_vec();
    let mut frozen = est.g.clone();
    let mut tangents = TangentFilters::new(prior);
    let mut records = Vec::new();
    for (idx, &y) in ys.iter().enumerate() {
        let k = idx + 1;
        let pred = predict(p, &pi);
        let yhat: f64 = pred.iter().zip(&est.g).map(|(q, gi)| q * gi).sum();
        let loglik_increment = predicted_loglik(&pred, &est.g, sigma, y);
        match cfg.algorithm {
            Algorithm::RecEm => {
                let (post, _) = gaussian_filter_step(p, &frozen, sigma, &pi, y)?;
                floor_events += recursive_em_step(&mut est, &mut info, &post, y, cfg);
                min_info = info.iter().copied().fold(min_info, f64::min);
                pi = post;
                if k % cfg.batch == 0 {
                    frozen.clone_from(&est.g);
                }
            }
            Algorithm::Rml => {
                let (post, _) = gaussian_filter_step(p, &est.g, sigma, &pi, y)?;
                rml_step(&mut est, &pred, y, cfg)?;
                pi = post;
            }
            Algorithm::Rpe => {
                let (post, _) = gaussian_filter_step(p, &est.g, sigma, &pi, y)?;
                rpe_step(&mut est, p, &mut tangents, y, cfg)?;
                pi = post;
            }
        }
        if k % record_every == 0 || k == ys.len() {
            records.push(EstimationRecord { k, g: est.g.clone(), pred_error: y - yhat, loglik_increment });
        }
    }
    if cfg.algorithm != Algorithm::RecEm {
        min_info = f64::NAN;
    }
    Ok(EstimationRun { records, final_estimate: est, info, min_info, floor_events })
}
