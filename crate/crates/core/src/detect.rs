//! Bayesian quickest change detection.
//!
//! State index 0 is the absorbing post-change state, index 1 (and above, for
//! phase-type priors) pre-change. With `L(y) = B[0][y] / B[1][y]` and
//! `p = 1 - P[1][1]`, the Shiryaev statistic `r = (1/p) pi(0) / (1 - pi(0))`
//! obeys `r_k = (r_{k-1} + 1) L(y_k) / (1 - p)`.

use serde::{Deserialize, Serialize};

use crate::csv::{num, CsvTable};
use crate::error::{Error, Result};
use crate::markov::{check_dim, Belief, ObservationMatrix, StochasticMatrix};

/// Linear statistics above this are carried as logarithms.
pub const LOG_SWITCH: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorKind {
    Shiryaev { p: f64 },
    ShiryaevRoberts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    pub kind: DetectorKind,
    /// Linear value, or `None` once the statistic has moved to log space.
    linear: Option<f64>,
    log_r: f64,
}

impl DetectorState {
    pub fn new(kind: DetectorKind, r0: f64) -> Result<Self> {
        if let DetectorKind::Shiryaev { p } = kind {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::ParameterOutOfRange { name: "p", value: p });
            }
        }
        if !(r0 >= 0.0) || !r0.is_finite() {
            return Err(Error::ParameterOutOfRange { name: "r0", value: r0 });
        }
        Ok(Self { kind, linear: Some(r0), log_r: r0.ln() })
    }

    /// Statistic value; `+inf` if it exceeds the f64 range.
    pub fn statistic(&self) -> f64 {
        self.linear.unwrap_or_else(|| self.log_r.exp())
    }

    pub fn log_statistic(&self) -> f64 {
        self.log_r
    }

    pub fn in_log_space(&self) -> bool {
        self.linear.is_none()
    }

    /// `r >= threshold`, compared in whichever space the statistic lives.
    pub fn crossed(&self, threshold: f64) -> bool {
        match self.linear {
            Some(r) => r >= threshold,
            None => threshold <= 0.0 || self.log_r >= threshold.ln(),
        }
    }

    fn from_log(kind: DetectorKind, log_r: f64) -> Self {
        let linear = if log_r <= LOG_SWITCH.ln() { Some(log_r.exp()) } else { None };
        Self { kind, linear, log_r }
    }
}

/// `L(y) = B[0][y] / B[1][y]`.
pub fn likelihood_ratio(b: &ObservationMatrix, y: usize) -> Result<f64> {
    check_dim(2, b.states())?;
    if y >= b.symbols() {
        return Err(Error::ObservationOutOfRange { y, size: b.symbols() });
    }
    let (post, pre) = (b.get(0, y), b.get(1, y));
    if pre <= 0.0 {
        return Err(Error::UndefinedLikelihoodRatio { y });
    }
    Ok(post / pre)
}

pub fn shiryaev_update(state: &DetectorState, y: usize, b: &ObservationMatrix) -> Result<DetectorState> {
    let l = likelihood_ratio(b, y)?;
    let scale = match state.kind {
        DetectorKind::Shiryaev { p } => 1.0 / (1.0 - p),
        DetectorKind::ShiryaevRoberts => 1.0,
    };
    match state.linear {
        Some(r) => {
            let next = scale * (r + 1.0) * l;
            if next.is_finite() && next <= LOG_SWITCH {
                Ok(DetectorState { kind: state.kind, linear: Some(next), log_r: next.ln() })
            } else {
                let log_next = scale.ln() + (r + 1.0).ln() + l.ln();
                Ok(DetectorState::from_log(state.kind, log_next))
            }
        }
        None => {
            // log(r + 1) = log r + log1p(1/r)
            let log_r1 = state.log_r + (-state.log_r).exp().ln_1p();
            Ok(DetectorState::from_log(state.kind, scale.ln() + log_r1 + l.ln()))
        }
    }
}

/// One-based index of the first step with `r_k >= threshold`, or
/// `ys.len() + 1` if the threshold is never crossed.
pub fn run_detector(ys: &[usize], state0: &DetectorState, b: &ObservationMatrix, threshold: f64) -> Result<usize> {
    if !(threshold >= 0.0) {
        return Err(Error::ParameterOutOfRange { name: "threshold", value: threshold });
    }
    let mut s = *state0;
    for (k, &y) in ys.iter().enumerate() {
        s = shiryaev_update(&s, y, b)?;
        if s.crossed(threshold) {
            return Ok(k + 1);
        }
    }
    Ok(ys.len() + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorTraceRow {
    pub k: usize,
    pub y: usize,
    pub statistic: f64,
    pub stopped: bool,
}

/// Full statistic path; stops after the first crossing.
pub fn detector_trace(
    ys: &[usize],
    state0: &DetectorState,
    b: &ObservationMatrix,
    threshold: f64,
) -> Result<Vec<DetectorTraceRow>> {
    let mut s = *state0;
    let mut rows = Vec::new();
    for (k, &y) in ys.iter().enumerate() {
        s = shiryaev_update(&s, y, b)?;
        let stopped = s.crossed(threshold);
        rows.push(DetectorTraceRow { k: k + 1, y, statistic: s.statistic(), stopped });
        if stopped {
            break;
        }
    }
    Ok(rows)
}

pub fn detector_trace_csv(rows: &[DetectorTraceRow]) -> CsvTable {
    let mut t = CsvTable::new(["k", "y", "statistic", "stopped"]);
    for r in rows {
        t.push(vec![r.k.to_string(), r.y.to_string(), num(r.statistic), u8::from(r.stopped).to_string()]);
    }
    t
}

/// Change-time prior as the absorption time of a chain with absorbing
/// state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseType {
    pi0: Belief,
    p: StochasticMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTypePmf {
    /// `nu_k` for `k = 0..=kmax`.
    pub pmf: Vec<f64>,
    /// Mass still pre-change after `kmax` steps.
    pub tail: f64,
}

impl PhaseType {
    pub fn new(pi0: Belief, p: StochasticMatrix) -> Result<Self> {
        check_dim(p.dim(), pi0.dim())?;
        if p.dim() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: p.dim() });
        }
        if p.get(0, 0) != 1.0 {
            return Err(Error::ParameterOutOfRange { name: "P[0][0]", value: p.get(0, 0) });
        }
        if pi0[0] != 0.0 {
            return Err(Error::InvalidBelief(format!("initial mass {} on post-change state", pi0[0])));
        }
        Ok(Self { pi0, p })
    }

    /// Two-state chain with geometric change time of parameter `p`.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ParameterOutOfRange { name: "p", value: p });
        }
        let m = StochasticMatrix::new(vec![vec![1.0, 0.0], vec![p, 1.0 - p]])?;
        Self::new(Belief::unit(2, 1), m)
    }

    pub fn transition(&self) -> &StochasticMatrix {
        &self.p
    }

    pub fn initial(&self) -> &Belief {
        &self.pi0
    }

    /// `nu_0 = pi0(0)`, `nu_k = pibar_0' Pbar^{k-1} P_under` for `k >= 1`.
    pub fn pmf(&self, kmax: usize) -> PhaseTypePmf {
        let x = self.p.dim();
        let mut transient: Vec<f64> = self.pi0.as_slice()[1..].to_vec();
        let mut pmf = Vec::with_capacity(kmax + 1);
        pmf.push(self.pi0[0]);
        for _ in 1..=kmax {
            let absorbed: f64 = transient.iter().enumerate().map(|(i, w)| w * self.p.get(i + 1, 0)).sum();
            pmf.push(absorbed);
            let mut next = vec![0.0; x - 1];
            for (i, &w) in transient.iter().enumerate() {
                if w != 0.0 {
                    for (j, n) in next.iter_mut().enumerate() {
                        *n += w * self.p.get(i + 1, j + 1);
                    }
                }
            }
            transient = next;
        }
        PhaseTypePmf { pmf, tail: transient.iter().sum() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionDpConfig {
    /// Misclassification cost `L`.
    pub misclassification: f64,
    /// Cost `C` of one more measurement.
    pub measurement: f64,
    pub grid_points: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl DetectionDpConfig {
    pub fn new(misclassification: f64, measurement: f64) -> Self {
        Self { misclassification, measurement, grid_points: 1001, tol: 1e-9, max_sweeps: 10_000 }
    }
}

/// Actions of the classical sequential test.
pub const DECLARE_0: usize = 0;
pub const DECLARE_1: usize = 1;
pub const CONTINUE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialDetection {
    /// Grid over `x = pi(1)`, the probability of the second state.
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    pub action: Vec<usize>,
    /// First and last grid points of the continue region; both equal the
    /// last declare-0 point when the region is empty.
    pub lower: f64,
    pub upper: f64,
    pub sweeps: usize,
}

impl SequentialDetection {
    pub fn continue_is_interval(&self) -> bool {
        is_single_run(&self.action, CONTINUE)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["grid", "V", "action"]);
        for i in 0..self.grid.len() {
            t.push(vec![num(self.grid[i]), num(self.value[i]), self.action[i].to_string()]);
        }
        t
    }
}

/// True when the positions holding `target` form one contiguous block
/// (an empty set counts as contiguous).
pub fn is_single_run(labels: &[usize], target: usize) -> bool {
    let idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &a)| a == target).map(|(i, _)| i).collect();
    idx.windows(2).all(|w| w[1] == w[0] + 1)
}

/// Piecewise-linear interpolation on a uniform grid over [0, 1].
pub(crate) fn interp_uniform(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let pos = x.clamp(0.0, 1.0) * n as f64;
    let i = (pos.floor() as usize).min(n - 1);
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// Value iteration for `V(x) = min{x L, (1-x) L, C + sum_y V(T(x,y)) sigma(x,y)}`
/// with `P = I`, from `V = 0` upward.
pub fn sequential_detection_dp(cfg: &DetectionDpConfig, b: &ObservationMatrix) -> Result<SequentialDetection> {
    check_dim(2, b.states())?;
    if cfg.grid_points < 100 {
        return Err(Error::GridTooCoarse { resolution: cfg.grid_points, minimum: 100 });
    }
    if !(cfg.misclassification >= 0.0) || !(cfg.measurement >= 0.0) {
        return Err(Error::ParameterOutOfRange { name: "cost", value: cfg.misclassification.min(cfg.measurement) });
    }
    let n = cfg.grid_points;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let big_l = cfg.misclassification;
    // precompute posterior positions and weights per grid point and symbol
    let moves: Vec<Vec<(f64, f64)>> = grid
        .iter()
        .map(|&x| {
            (0..b.symbols())
                .filter_map(|y| {
                    let (b0, b1) = (b.get(0, y), b.get(1, y));
                    let sigma = b0 * (1.0 - x) + b1 * x;
                    (sigma > 0.0).then(|| (b1 * x / sigma, sigma))
                })
                .collect()
        })
        .collect();
    let continuation = |v: &[f64], i: usize| -> f64 {
        cfg.measurement + moves[i].iter().map(|&(xp, s)| s * interp_uniform(v, xp)).sum::<f64>()
    };
    let mut v = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        if sweeps >= cfg.max_sweeps {
            let next: Vec<f64> = (0..n)
                .map(|i| (grid[i] * big_l).min((1.0 - grid[i]) * big_l).min(continuation(&v, i)))
                .collect();
            let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            return Err(Error::NoConvergence { sweeps, residual });
        }
        let next: Vec<f64> = (0..n)
            .map(|i| (grid[i] * big_l).min((1.0 - grid[i]) * big_l).min(continuation(&v, i)))
            .collect();
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        sweeps += 1;
        if residual <= cfg.tol {
            break;
        }
    }
    let action: Vec<usize> = (0..n)
        .map(|i| {
            let costs = [grid[i] * big_l, (1.0 - grid[i]) * big_l, continuation(&v, i)];
            argmin_first(&costs)
        })
        .collect();
    let cont: Vec<usize> = (0..n).filter(|&i| action[i] == CONTINUE).collect();
    let (lower, upper) = match (cont.first(), cont.last()) {
        (Some(&a), Some(&z)) => (grid[a], grid[z]),
        _ => {
            let last0 = (0..n).rev().find(|&i| action[i] == DECLARE_0).unwrap_or(0);
            (grid[last0], grid[last0])
        }
    };
    Ok(SequentialDetection { grid, value: v, action, lower, upper, sweeps })
}

/// Index of the smallest value, ties to the lowest index.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}
