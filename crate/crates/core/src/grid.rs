//! Regular lattice on the belief simplex with Freudenthal interpolation.
//!
//! Points are `k / M` for nonnegative integer vectors `k` summing to
//! `M = resolution - 1`. Interpolation triangulates each lattice cell into
//! simplices, so it reproduces linear functions exactly and is a convex
//! combination of grid values.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::markov::Belief;

#[derive(Debug, Clone)]
pub struct SimplexGrid {
    dim: usize,
    m: usize,
    counts: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    /// `resolution` points along each edge of the simplex.
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("simplex grid"));
        }
        if resolution < 2 {
            return Err(Error::GridTooCoarse { resolution, minimum: 2 });
        }
        let m = resolution - 1;
        let mut counts = Vec::new();
        let mut current = vec![0u32; dim];
        enumerate(0, m as u32, &mut current, &mut counts);
        let index = counts.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(Self { dim, m, counts, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn divisions(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self, i: usize) -> &[u32] {
        &self.counts[i]
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.counts[i].iter().map(|&c| c as f64 / self.m as f64).collect()
    }

    pub fn belief(&self, i: usize) -> Belief {
        Belief::from_weights(self.point(i)).expect("lattice point is a belief")
    }

    /// Grid indices and barycentric weights of the Freudenthal simplex
    /// containing `pi`.
    pub fn weights(&self, pi: &[f64]) -> Vec<(usize, f64)> {
        let x = self.dim;
        if x == 1 {
            return vec![(0, 1.0)];
        }
        let m = self.m as f64;
        // cumulative coordinates y_i = M sum_{j >= i} pi_j, y_0 = M
        let mut y = vec![0.0; x];
        let mut acc = 0.0;
        for i in (1..x).rev() {
            acc += pi[i].max(0.0);
            y[i] = (m * acc).min(m);
        }
        y[0] = m;
        let mut base = vec![0i64; x];
        let mut frac = vec![0.0; x];
        base[0] = self.m as i64;
        for i in 1..x {
            let f = y[i].floor();
            base[i] = f as i64;
            frac[i] = y[i] - f;
        }
        // cumulative coordinates must stay nonincreasing at the base vertex
        for i in 1..x {
            if base[i] > base[i - 1] {
                base[i] = base[i - 1];
                frac[i] = 0.0;
            }
        }
        let mut order: Vec<usize> = (1..x).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
        let mut out = Vec::with_capacity(x);
        let mut vertex = base.clone();
        let first = 1.0 - frac[order[0]];
        out.push((self.vertex_index(&vertex), first));
        for (pos, &i) in order.iter().enumerate() {
            vertex[i] += 1;
            let next = order.get(pos + 1).map_or(0.0, |&j| frac[j]);
            let w = frac[i] - next;
            if w > 0.0 {
                out.push((self.vertex_index(&vertex), w));
            }
        }
        out
    }

    fn vertex_index(&self, cumulative: &[i64]) -> usize {
        let x = self.dim;
        let counts: Vec<u32> = (0..x)
            .map(|i| {
                let next = if i + 1 < x { cumulative[i + 1] } else { 0 };
                (cumulative[i] - next).max(0) as u32
            })
            .collect();
        self.index[&counts]
    }

    /// Interpolated value of grid function `values` at `pi`.
    pub fn interpolate(&self, values: &[f64], pi: &[f64]) -> f64 {
        self.weights(pi).iter().map(|&(i, w)| w * values[i]).sum()
    }

    /// Largest violation of `V(p) >= (V(p + d) + V(p - d)) / 2` over grid
    /// points `p` and lattice directions `d = e_i - e_j`.
    pub fn midpoint_concavity_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, c) in self.counts.iter().enumerate() {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    if i == j || c[j] == 0 || c[i] == 0 {
                        continue;
                    }
                    let mut plus = c.clone();
                    plus[i] += 1;
                    plus[j] -= 1;
                    let mut minus = c.clone();
                    minus[i] -= 1;
                    minus[j] += 1;
                    let (a, b) = (self.index[&plus], self.index[&minus]);
                    worst = worst.max(0.5 * (values[a] + values[b]) - values[p]);
                }
            }
        }
        worst
    }
}

fn enumerate(pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let last = current.len() - 1;
    if pos == last {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        enumerate(pos + 1, remaining - k, current, out);
    }
}
