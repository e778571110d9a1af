//! Finite-state Markov chain primitives.
//!
//! [`StochasticMatrix`] and [`Belief`] are validated value types used by every
//! other module. Rows are indexed from the current state, so one-step
//! prediction of a belief is `P' pi`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance accepted on input row sums before renormalization.
pub const INPUT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates a probability vector (sum within 1e-9, entries >= 0) and
    /// renormalizes to unit sum.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("belief"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < -1e-12 {
                return Err(Error::InvalidBelief(format!("entry {i} = {p}")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::InvalidBelief(format!("sum = {sum}")));
        }
        Ok(Self::normalized(probs, sum))
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("belief"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidBelief("negative or non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidBelief("weights sum to zero".into()));
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut probs: Vec<f64>, sum: f64) -> Self {
        for p in probs.iter_mut() {
            *p = (*p).max(0.0) / sum;
        }
        Self(probs)
    }

    pub fn unit(dim: usize, index: usize) -> Self {
        assert!(index < dim, "unit belief index {index} out of range {dim}");
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        Self(v)
    }

    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0);
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        l1_distance(&self.0, &other.0)
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn validate_rows(rows: &[Vec<f64>], square: bool) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::Empty("matrix"));
    }
    let width = if square { rows.len() } else { rows[0].len() };
    if width == 0 {
        return Err(Error::Empty("matrix row"));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            if square {
                return Err(Error::NonSquare { rows: rows.len(), row: r, len: row.len() });
            }
            return Err(Error::DimensionMismatch { expected: width, got: row.len() });
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeEntry { row: r, col: c, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::RowSumOutOfTolerance { row: r, sum });
        }
    }
    Ok(width)
}

fn renormalize_rows(rows: &mut [Vec<f64>]) {
    for row in rows.iter_mut() {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Row-stochastic square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochasticMatrix {
    rows: Vec<Vec<f64>>,
}

impl StochasticMatrix {
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_rows(&rows, true)?;
        renormalize_rows(&mut rows);
        Ok(Self { rows })
    }

    pub fn identity(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    /// Every row equal to `row`.
    pub fn rank_one(row: &Belief) -> Self {
        Self { rows: vec![row.as_slice().to_vec(); row.dim()] }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// One-step prediction `P' pi`.
    pub fn predict(&self, pi: &Belief) -> Result<Belief> {
        check_dim(self.dim(), pi.dim())?;
        Ok(Belief::from_weights(self.predict_raw(pi.as_slice()))
            .expect("prediction of a belief is a belief"))
    }

    /// `P' v` for an arbitrary vector.
    pub fn predict_raw(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let w = v[i];
            if w != 0.0 {
                for (o, p) in out.iter_mut().zip(row) {
                    *o += w * p;
                }
            }
        }
        out
    }

    /// Matrix product `self * other`.
    pub fn product(&self, other: &StochasticMatrix) -> Result<StochasticMatrix> {
        check_dim(self.dim(), other.dim())?;
        let n = self.dim();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let a = self.rows[i][k];
                if a != 0.0 {
                    for j in 0..n {
                        rows[i][j] += a * other.rows[k][j];
                    }
                }
            }
        }
        renormalize_rows(&mut rows);
        Ok(StochasticMatrix { rows })
    }

    pub fn power(&self, k: usize) -> StochasticMatrix {
        let mut acc = StochasticMatrix::identity(self.dim());
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.product(&base).expect("same dimension");
            }
            base = base.product(&base).expect("same dimension");
            e >>= 1;
        }
        acc
    }

    /// `max_i sum_j |P_ij - Q_ij|`, the smallest `eps` with
    /// `||P' pi - Q' pi||_1 <= eps` for every belief `pi`.
    pub fn perturbation_norm(&self, other: &StochasticMatrix) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| l1_distance(a, b))
            .fold(0.0, f64::max))
    }

    /// Solves `[(P - I)'; 1'] pi = [0; 1]` in the least-squares sense.
    pub fn stationary_distribution(&self) -> Result<Belief> {
        let n = self.dim();
        let mut a = DMatrix::<f64>::zeros(n + 1, n);
        for i in 0..n {
            for j in 0..n {
                // row i of (P - I)' is column i of (P - I)
                a[(i, j)] = self.rows[j][i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..n {
            a[(n, j)] = 1.0;
        }
        let mut b = nalgebra::DVector::<f64>::zeros(n + 1);
        b[n] = 1.0;
        let svd = a.svd(true, true);
        let max_sv = svd.singular_values.max();
        let min_sv = svd.singular_values.min();
        if min_sv <= 1e-10 * max_sv.max(1.0) {
            return Err(Error::NonUniqueStationary);
        }
        let x = svd.solve(&b, 1e-14).map_err(|_| Error::NonUniqueStationary)?;
        let weights: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        Belief::from_weights(weights)
    }

    /// Power iteration `pi <- P' pi` from the uniform belief.
    pub fn stationary_by_power_iteration(&self, tol: f64, max_iter: usize) -> Belief {
        let mut pi = Belief::uniform(self.dim());
        for _ in 0..max_iter {
            // averaging with the previous iterate removes periodic oscillation
            let next = self.predict(&pi).expect("same dimension");
            let avg: Vec<f64> =
                next.as_slice().iter().zip(pi.as_slice()).map(|(a, b)| 0.5 * (a + b)).collect();
            let avg = Belief::from_weights(avg).expect("average of beliefs");
            let delta = avg.l1_distance(&pi);
            pi = avg;
            if delta < tol {
                break;
            }
        }
        pi
    }

    /// Dobrushin coefficient `1 - min_{i,j} sum_l min(P_il, P_jl)`.
    pub fn dobrushin(&self) -> f64 {
        let n = self.dim();
        let mut min_overlap = 1.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let overlap: f64 =
                    self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| a.min(*b)).sum();
                min_overlap = min_overlap.min(overlap);
            }
        }
        (1.0 - min_overlap).clamp(0.0, 1.0)
    }

    /// Eigenvalue moduli, sorted descending (complex eigenvalues included).
    pub fn eigenvalue_moduli(&self) -> Vec<f64> {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| self.rows[i][j]);
        let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        moduli
    }

    /// `|lambda_2|`, the second largest eigenvalue modulus (0 for a 1x1 matrix).
    pub fn second_eigenvalue_modulus(&self) -> f64 {
        self.eigenvalue_moduli().get(1).copied().unwrap_or(0.0)
    }

    /// State path of length `n + 1` with `x_0 ~ pi0`.
    pub fn simulate(&self, pi0: &Belief, n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        check_dim(self.dim(), pi0.dim())?;
        let mut path = Vec::with_capacity(n + 1);
        let mut x = rng.categorical(pi0.as_slice());
        path.push(x);
        for _ in 0..n {
            x = rng.categorical(&self.rows[x]);
            path.push(x);
        }
        Ok(path)
    }
}

impl TryFrom<Vec<Vec<f64>>> for StochasticMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        StochasticMatrix::new(rows)
    }
}

impl From<StochasticMatrix> for Vec<Vec<f64>> {
    fn from(m: StochasticMatrix) -> Self {
        m.rows
    }
}

/// Observation likelihoods `B[i][y] = P(y | x = i)`; rows sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ObservationMatrix {
    rows: Vec<Vec<f64>>,
}

impl ObservationMatrix {
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_rows(&rows, false)?;
        renormalize_rows(&mut rows);
        Ok(Self { rows })
    }

    pub fn identity(dim: usize) -> Self {
        Self { rows: StochasticMatrix::identity(dim).rows }
    }

    pub fn uninformative(states: usize, symbols: usize) -> Self {
        Self { rows: vec![vec![1.0 / symbols as f64; symbols]; states] }
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn symbols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, i: usize, y: usize) -> f64 {
        self.rows[i][y]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Likelihood column `(B_{1y}, ..., B_{Xy})`.
    pub fn column(&self, y: usize) -> Result<Vec<f64>> {
        if y >= self.symbols() {
            return Err(Error::ObservationOutOfRange { y, size: self.symbols() });
        }
        Ok(self.rows.iter().map(|r| r[y]).collect())
    }

    pub fn sample(&self, state: usize, rng: &mut RngStream) -> usize {
        rng.categorical(&self.rows[state])
    }
}

impl TryFrom<Vec<Vec<f64>>> for ObservationMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ObservationMatrix::new(rows)
    }
}

impl From<ObservationMatrix> for Vec<Vec<f64>> {
    fn from(m: ObservationMatrix) -> Self {
        m.rows
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Flat Dirichlet draw: normalized unit-exponential variates.
pub fn sample_uniform_simplex(dim: usize, rng: &mut RngStream) -> Belief {
    assert!(dim >= 1, "simplex dimension must be positive");
    if dim == 1 {
        return Belief::unit(1, 0);
    }
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
        if let Ok(b) = Belief::from_weights(draws) {
            return b;
        }
    }
}

/// Dobrushin coefficient of the left-to-right product `P_1 P_2 ... P_n`.
pub fn dobrushin_of_product(factors: &[StochasticMatrix]) -> Result<f64> {
    let (first, rest) = factors.split_first().ok_or(Error::Empty("matrix product"))?;
    let mut acc = first.clone();
    for p in rest {
        acc = acc.product(p)?;
    }
    Ok(acc.dobrushin())
}

/// Random stochastic matrix with rows drawn uniformly from the simplex.
pub fn random_stochastic(dim: usize, rng: &mut RngStream) -> StochasticMatrix {
    let rows = (0..dim).map(|_| sample_uniform_simplex(dim, rng).into_vec()).collect();
    StochasticMatrix { rows }
}
