//! Epsilon-graph construction on point clouds, graph Laplacians, discrete
//! perturbation operators, and point-cloud file ingestion.
//!
//! Edge weights follow the indicator-kernel construction: every pair within
//! Euclidean distance epsilon (closed interval, self-pairs excluded) gets
//! the constant weight alpha_d / ((d+2) N eps^{d+2}) where alpha_d is the
//! volume of the d-dimensional unit ball. The Laplacian is diag(W 1) - W.

pub mod io;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sparse::{SparseSym, UnionFind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CloudSource {
    Sampled { seed: u64 },
    File(String),
    Derived,
}

/// A point cloud in R^M, stored flat (row i occupies coords[i*dim..(i+1)*dim]).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    pub source: CloudSource,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>, source: CloudSource) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0);
        assert!(
            coords.iter().all(|c| c.is_finite()),
            "point cloud coordinates must be finite"
        );
        PointCloud {
            dim,
            coords,
            source,
        }
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Pad every point with zero coordinates up to `dim` ambient dimensions.
    pub fn pad_to_dim(&self, dim: usize) -> PointCloud {
        assert!(dim >= self.dim);
        if dim == self.dim {
            return self.clone();
        }
        let mut coords = Vec::with_capacity(self.n() * dim);
        for p in self.points() {
            coords.extend_from_slice(p);
            coords.extend(std::iter::repeat(0.0).take(dim - self.dim));
        }
        PointCloud::new(dim, coords, self.source.clone())
    }
}

/// Node signal matrix: n rows, F feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    pub values: DMatrix<f64>,
}

impl GraphSignal {
    pub fn new(values: DMatrix<f64>) -> Self {
        GraphSignal { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }
}

/// Epsilon-graph over a point cloud: uniform-weight edges on all pairs
/// within epsilon, plus the assembled Laplacian.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub cloud: PointCloud,
    pub epsilon: f64,
    /// Declared intrinsic dimension used in the weight constant; supplied by
    /// the caller, never inferred.
    pub d: usize,
    /// The single weight value shared by all edges.
    pub weight: f64,
    /// Undirected edges as (i, j) with i < j, canonically sorted.
    pub edges: Vec<(usize, usize)>,
    pub has_isolated_nodes: bool,
    pub connected: bool,
}

/// Volume of the d-dimensional Euclidean unit ball, via the recurrence
/// alpha_d = alpha_{d-2} * 2 pi / d with alpha_0 = 1, alpha_1 = 2.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Edge weight constant of the indicator kernel.
pub fn edge_weight(n: usize, d: usize, epsilon: f64) -> f64 {
    unit_ball_volume(d) / ((d + 2) as f64 * n as f64 * epsilon.powi(d as i32 + 2))
}

impl GeometricGraph {
    pub fn n(&self) -> usize {
        self.cloud.n()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n()];
        for &(i, j) in &self.edges {
            deg[i] += self.weight;
            deg[j] += self.weight;
        }
        deg
    }

    /// W as symmetric sparse matrix (zero diagonal).
    pub fn weights(&self) -> SparseSym {
        let mut entries = Vec::with_capacity(2 * self.edges.len());
        for &(i, j) in &self.edges {
            entries.push((i, j, self.weight));
            entries.push((j, i, self.weight));
        }
        SparseSym::from_entries(self.n(), entries)
    }

    /// L = diag(W 1) - W.
    pub fn laplacian(&self) -> SparseSym {
        let deg = self.degrees();
        let mut entries = Vec::with_capacity(2 * self.edges.len() + self.n());
        for (i, d) in deg.iter().enumerate() {
            entries.push((i, i, *d));
        }
        for &(i, j) in &self.edges {
            entries.push((i, j, -self.weight));
            entries.push((j, i, -self.weight));
        }
        SparseSym::from_entries(self.n(), entries)
    }

    /// Remove floor(fraction * E) undirected edges uniformly at random and
    /// rebuild the bookkeeping. Deterministic per seed.
    pub fn perturb_edges(&self, fraction: f64, seed: u64) -> Result<GeometricGraph> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config("edge removal fraction must be in [0, 1]"));
        }
        let remove = (fraction * self.edges.len() as f64).floor() as usize;
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        let mut rng = rng_from_seed(seed);
        order.shuffle(&mut rng);
        let removed: std::collections::HashSet<usize> =
            order.into_iter().take(remove).collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(idx, _)| !removed.contains(idx))
            .map(|(_, e)| *e)
            .collect();
        Ok(Self::from_edges(
            self.cloud.clone(),
            self.epsilon,
            self.d,
            self.weight,
            edges,
        ))
    }

    fn from_edges(
        cloud: PointCloud,
        epsilon: f64,
        d: usize,
        weight: f64,
        mut edges: Vec<(usize, usize)>,
    ) -> GeometricGraph {
        edges.sort_unstable();
        let n = cloud.n();
        let mut uf = UnionFind::new(n);
        let mut touched = vec![false; n];
        for &(i, j) in &edges {
            uf.union(i, j);
            touched[i] = true;
            touched[j] = true;
        }
        GeometricGraph {
            cloud,
            epsilon,
            d,
            weight,
            has_isolated_nodes: touched.iter().any(|t| !t),
            connected: uf.components() == 1,
            edges,
        }
    }
}

/// Build the epsilon-graph. Neighbor search uses a uniform spatial hash on
/// the ambient bounding box; the brute-force O(N^2) scan kept in the test
/// suite is the correctness oracle. Isolated nodes are flagged, not
/// repaired.
pub fn build_graph(cloud: &PointCloud, epsilon: f64, d: usize) -> Result<GeometricGraph> {
    if epsilon <= 0.0 {
        return Err(Error::config("epsilon must be positive"));
    }
    if d < 1 {
        return Err(Error::config("intrinsic dimension must be >= 1"));
    }
    let n = cloud.n();
    let dim = cloud.dim();
    let weight = edge_weight(n, d, epsilon);

    // hash grid with cell size epsilon
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let key = |p: &[f64]| -> Vec<i64> {
        p.iter().map(|c| (c / epsilon).floor() as i64).collect()
    };
    for i in 0..n {
        cells.entry(key(cloud.point(i))).or_default().push(i);
    }
    let eps2 = epsilon * epsilon;
    let mut edges = Vec::new();
    let mut neighbor_offsets = vec![vec![0i64; dim]];
    for axis in 0..dim {
        let mut extended = Vec::new();
        for off in &neighbor_offsets {
            for delta in [-1i64, 0, 1] {
                let mut o = off.clone();
                o[axis] = delta;
                extended.push(o);
            }
        }
        neighbor_offsets = extended;
    }
    for (cell, members) in &cells {
        for off in &neighbor_offsets {
            let ncell: Vec<i64> = cell.iter().zip(off).map(|(c, o)| c + o).collect();
            if ncell < *cell {
                continue; // visit each unordered cell pair once
            }
            let same_cell = ncell == *cell;
            if let Some(others) = cells.get(&ncell) {
                for (ai, &i) in members.iter().enumerate() {
                    let start = if same_cell { ai + 1 } else { 0 };
                    for &j in &others[start..] {
                        let dist2: f64 = cloud
                            .point(i)
                            .iter()
                            .zip(cloud.point(j))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        // closed interval: distance exactly epsilon included
                        if dist2 > 0.0 && dist2 <= eps2 {
                            edges.push((i.min(j), i.max(j)));
                        }
                    }
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(GeometricGraph::from_edges(
        cloud.clone(),
        epsilon,
        d,
        weight,
        edges,
    ))
}

/// Theorem-style epsilon rule: scale * (log(c/delta) / n)^{1/(d+4)}.
pub fn default_epsilon(n: usize, d: usize, delta: f64, c: f64, scale: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::config("delta must be in (0, 1)"));
    }
    if n < 2 {
        return Err(Error::config("need at least 2 nodes"));
    }
    if c <= 0.0 {
        return Err(Error::config("constant c must be positive"));
    }
    Ok(scale * ((c / delta).ln() / n as f64).powf(1.0 / (d as f64 + 4.0)))
}

/// Zero a uniformly random subset of floor(fraction * F) feature channels
/// across all nodes. Deterministic per seed.
pub fn perturb_features(x: &GraphSignal, fraction: f64, seed: u64) -> Result<GraphSignal> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("feature fraction must be in [0, 1]"));
    }
    let f = x.channels();
    let zero_count = (fraction * f as f64).floor() as usize;
    let mut order: Vec<usize> = (0..f).collect();
    let mut rng = rng_from_seed(seed);
    order.shuffle(&mut rng);
    let mut values = x.values.clone();
    for &c in order.iter().take(zero_count) {
        values.column_mut(c).fill(0.0);
    }
    Ok(GraphSignal::new(values))
}

/// Shift each coordinate of each point by an independent draw from
/// Normal(mean = gamma, variance = 2 gamma).
pub fn gaussian_jitter(cloud: &PointCloud, gamma: f64, seed: u64) -> Result<PointCloud> {
    if gamma < 0.0 {
        return Err(Error::config("jitter gamma must be nonnegative"));
    }
    if gamma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(gamma, (2.0 * gamma).sqrt())
        .map_err(|e| Error::Numeric(format!("invalid jitter distribution: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let coords = cloud
        .points()
        .flat_map(|p| {
            p.iter()
                .map(|c| c + normal.sample(&mut rng))
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(PointCloud::new(cloud.dim(), coords, CloudSource::Derived))
}

/// Draw n vertices uniformly without replacement.
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n > cloud.n() {
        return Err(Error::config(format!(
            "cannot subsample {n} points from a cloud of {}",
            cloud.n()
        )));
    }
    let mut order: Vec<usize> = (0..cloud.n()).collect();
    let mut rng = rng_from_seed(seed);
    // partial Fisher-Yates: only the first n slots are needed
    for i in 0..n {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
    }
    let mut coords = Vec::with_capacity(n * cloud.dim());
    for &idx in order.iter().take(n) {
        coords.extend_from_slice(cloud.point(idx));
    }
    Ok(PointCloud::new(cloud.dim(), coords, CloudSource::Derived))
}
