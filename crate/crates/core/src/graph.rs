//! k-nearest-neighbor adjacency and heat-kernel weights.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::sparse::SparseSym;

/// Sorted neighbor lists, truncated at `k_max`.
///
/// Neighbors of each point are ordered by `(squared distance, index)`, so the
/// lower index wins a tie at the k-th rank. Building once at the largest `k`
/// of a sweep gives every smaller `k` by truncation.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    k_max: usize,
    /// `neighbors[i]` holds `(index, squared distance)`.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborTable {
    pub fn build(points: &PointCloud, k_max: usize) -> Result<Self> {
        let m = points.len();
        if k_max == 0 || k_max >= m {
            return Err(Error::invalid(format!("k must satisfy 1 <= k < m (k={k_max}, m={m})")));
        }
        let neighbors = (0..m)
            .into_par_iter()
            .map(|i| {
                let xi = points.row(i);
                let mut cand: Vec<(usize, f64)> = (0..m)
                    .filter(|&j| j != i)
                    .map(|j| (j, crate::data::sq_dist(xi, points.row(j))))
                    .collect();
                let by_rank = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
                if k_max < cand.len() {
                    cand.select_nth_unstable_by(k_max - 1, by_rank);
                    cand.truncate(k_max);
                }
                cand.sort_unstable_by(by_rank);
                cand
            })
            .collect();
        Ok(Self { k_max, neighbors })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// The `k` nearest neighbors of `i`, nearest first.
    pub fn nearest(&self, i: usize, k: usize) -> &[(usize, f64)] {
        &self.neighbors[i][..k.min(self.k_max)]
    }

    /// Union-symmetrized kNN edges for `k <= k_max`.
    pub fn edges(&self, k: usize) -> Result<EdgeSet> {
        if k == 0 || k > self.k_max {
            return Err(Error::invalid(format!("k={k} outside 1..={}", self.k_max)));
        }
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(self.len() * k);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &(j, _) in &nb[..k] {
                pairs.push(if i < j { (i, j) } else { (j, i) });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(EdgeSet {
            n_nodes: self.len(),
            k,
            pairs,
        })
    }
}

/// Undirected edges `{i, j}` stored as `(i, j)` with `i < j`, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub n_nodes: usize,
    pub k: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.binary_search(&key).is_ok()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Edge `{i, j}` is present iff `x_i` is among the `k` nearest neighbors of
/// `x_j` or vice versa (Euclidean metric, a point is not its own neighbor).
pub fn knn_graph(points: &PointCloud, k: usize) -> Result<EdgeSet> {
    NeighborTable::build(points, k)?.edges(k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub weights: SparseSym,
    pub degrees: Vec<f64>,
    pub k: usize,
    pub sigma: f64,
}

impl WeightedGraph {
    pub fn n_nodes(&self) -> usize {
        self.degrees.len()
    }

    /// Writes `i j weight` lines, one per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, w) in self.weights.upper_entries() {
            if i != j {
                writeln!(out, "{i} {j} {w:.17e}")?;
            }
        }
        Ok(())
    }
}

/// `W_ij = exp(-‖x_i - x_j‖² / σ)` on every edge, zero elsewhere.
///
/// Fails when a node ends up with zero degree (possible only if every
/// incident weight underflows), since `D^{-1/2}` is then undefined.
pub fn heat_weights(edges: &EdgeSet, points: &PointCloud, sigma: f64) -> Result<WeightedGraph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    if edges.n_nodes != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: edges.n_nodes,
        });
    }
    let triplets = edges
        .pairs
        .iter()
        .map(|&(i, j)| (i, j, (-points.sq_dist(i, j) / sigma).exp()));
    let weights = SparseSym::from_triplets(points.len(), triplets)?;
    let degrees = weights.row_sums();
    if let Some(node) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::ZeroDegree { node });
    }
    Ok(WeightedGraph {
        weights,
        degrees,
        k: edges.k,
        sigma,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub labels: Vec<usize>,
    pub count: usize,
}

/// Connected components over nonzero off-diagonal entries of `W`, labeled
/// in order of their smallest node.
pub fn connected_components(weights: &SparseSym) -> Components {
    let n = weights.dim();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for (v, w) in weights.row(u) {
                if v != u && w != 0.0 && labels[v] == usize::MAX {
                    labels[v] = count;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    Components { labels, count }
}
