//! Stochastic search with a uniform random ruler.
//!
//! Noisy costs are normalized to `[0, 1]` and compared against a uniform
//! draw, which turns every cost evaluation into a Bernoulli loss. The
//! search moves to a uniformly proposed candidate only when its loss is
//! strictly smaller, so the candidate with the smallest normalized mean
//! cost is visited most often.

use serde::{Deserialize, Serialize};

use crate::csv::CsvTable;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `(c - alpha) / (beta - alpha)` clamped to `[0, 1]`; the flag reports
/// whether clamping happened.
pub fn normalize_cost(c: f64, alpha: f64, beta: f64) -> Result<(f64, bool)> {
    if !(beta > alpha) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::DegenerateBounds { lower: alpha, upper: beta });
    }
    let m = (c - alpha) / (beta - alpha);
    if m < 0.0 {
        Ok((0.0, true))
    } else if m > 1.0 {
        Ok((1.0, true))
    } else {
        Ok((m, false))
    }
}

/// `I(m - u > 0)`.
pub fn ruler_loss(m: f64, u: f64) -> f64 {
    if m - u > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Average of the losses at `u` and `1 - u`.
pub fn antithetic_loss(m: f64, u: f64) -> f64 {
    0.5 * (ruler_loss(m, u) + ruler_loss(m, 1.0 - u))
}

/// Simulator for noisy costs of `candidates()` alternatives, each sample
/// lying in `bounds()`.
pub trait StochasticObjective {
    fn candidates(&self) -> usize;
    fn bounds(&self) -> (f64, f64);
    fn sample(&self, theta: usize, rng: &mut RngStream) -> f64;
}

/// Cost `1` with probability `m[theta]`, else `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliObjective {
    pub m: Vec<f64>,
}

impl BernoulliObjective {
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::Empty("candidates"));
        }
        if let Some(&v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ParameterOutOfRange { name: "loss probability", value: v });
        }
        Ok(Self { m })
    }
}

impl StochasticObjective for BernoulliObjective {
    fn candidates(&self) -> usize {
        self.m.len()
    }

    fn bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn sample(&self, theta: usize, rng: &mut RngStream) -> f64 {
        if rng.uniform() < self.m[theta] {
            1.0
        } else {
            0.0
        }
    }
}

/// Cost uniform on `[means[theta] - half_width, means[theta] + half_width]`
/// inside the declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformNoiseObjective {
    pub means: Vec<f64>,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl StochasticObjective for UniformNoiseObjective {
    fn candidates(&self) -> usize {
        self.means.len()
    }

    fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn sample(&self, theta: usize, rng: &mut RngStream) -> f64 {
        self.means[theta] + self.half_width * (2.0 * rng.uniform() - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub step: usize,
    pub theta: usize,
    pub moved: bool,
    pub estimate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub visits: Vec<u64>,
    /// `transitions[i][j]` counts steps that started at `i` and ended at `j`.
    pub transitions: Vec<Vec<u64>>,
    pub current: usize,
    pub estimate: usize,
    /// Cost samples that fell outside the declared bounds.
    pub clamp_events: u64,
    pub steps: Vec<SearchStep>,
}

impl SearchTrace {
    pub fn occupation(&self) -> Vec<f64> {
        let total: u64 = self.visits.iter().sum();
        self.visits.iter().map(|&v| v as f64 / total.max(1) as f64).collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["step", "theta", "moved", "estimate_so_far"]);
        for s in &self.steps {
            t.push(vec![s.step.to_string(), s.theta.to_string(), u8::from(s.moved).to_string(), s.estimate.to_string()]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub steps: usize,
    #[serde(default)]
    pub antithetic: bool,
    /// Keep one [`SearchStep`] per iteration.
    #[serde(default)]
    pub record_steps: bool,
}

/// Runs `cfg.steps` iterations from a uniformly drawn start. Visits count
/// the candidate held after each iteration.
pub fn search_ruler_run<O: StochasticObjective + ?Sized>(
    obj: &O,
    cfg: &SearchConfig,
    rng: &mut RngStream,
) -> Result<SearchTrace> {
    let s = obj.candidates();
    if s == 0 {
        return Err(Error::Empty("candidates"));
    }
    if cfg.steps == 0 {
        return Err(Error::ParameterOutOfRange { name: "steps", value: 0.0 });
    }
    let (alpha, beta) = obj.bounds();
    normalize_cost(alpha, alpha, beta)?;
    let mut visits = vec![0u64; s];
    let mut transitions = vec![vec![0u64; s]; s];
    let mut clamp_events = 0;
    let mut steps = Vec::new();
    let mut theta = rng.index(s);
    let mut best = theta;
    let loss = |theta: usize, rng: &mut RngStream, clamps: &mut u64| -> f64 {
        let (m, clamped) = normalize_cost(obj.sample(theta, rng), alpha, beta).expect("bounds checked");
        *clamps += u64::from(clamped);
        let u = rng.uniform();
        if cfg.antithetic {
            antithetic_loss(m, u)
        } else {
            ruler_loss(m, u)
        }
    };
    for step in 1..=cfg.steps {
        let from = theta;
        let mut moved = false;
        if s > 1 {
            let mut cand = rng.index(s - 1);
            if cand >= theta {
                cand += 1;
            }
            let here = loss(theta, rng, &mut clamp_events);
            let there = loss(cand, rng, &mut clamp_events);
            if there < here {
                theta = cand;
                moved = true;
            }
        }
        visits[theta] += 1;
        transitions[from][theta] += 1;
        if visits[theta] > visits[best] || visits[theta] == visits[best] && theta < best {
            best = theta;
        }
        if cfg.record_steps {
            steps.push(SearchStep { step, theta, moved, estimate: best });
        }
    }
    Ok(SearchTrace { visits, transitions, current: theta, estimate: best, clamp_events, steps })
}

/// Transition kernel of the search chain for normalized mean costs `m`:
/// `P_ij = m_i (1 - m_j) / (S - 1)` off the diagonal.
pub fn search_kernel(m: &[f64]) -> Vec<Vec<f64>> {
    let s = m.len();
    if s == 1 {
        return vec![vec![1.0]];
    }
    let mut p = vec![vec![0.0; s]; s];
    for i in 0..s {
        let mut out = 0.0;
        for j in 0..s {
            if i != j {
                p[i][j] = m[i] * (1.0 - m[j]) / (s - 1) as f64;
                out += p[i][j];
            }
        }
        p[i][i] = 1.0 - out;
    }
    p
}

/// `pi(theta) ∝ (1 - m_theta) prod_{j != theta} m_j`.
pub fn search_invariant(m: &[f64]) -> Result<Vec<f64>> {
    let w: Vec<f64> = (0..m.len())
        .map(|t| (1.0 - m[t]) * (0..m.len()).filter(|&j| j != t).map(|j| m[j]).product::<f64>())
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonUniqueStationary);
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}
