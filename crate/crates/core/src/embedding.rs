//! Laplacian and Schroedinger eigenmaps pipelines.
//!
//! Both solve for the `n + 1` smallest eigenpairs of
//! `D^{-1/2}(L + αV)D^{-1/2}`, discard the first eigenvector `w` and map the
//! next `n` back through `y = D^{-1/2} z`, so that `yᵀDy = I` and
//! `zᵀw = 0`. Laplacian eigenmaps is the `α = 0` case.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::PointCloud;
use crate::eigensolve::{smallest_eigs_with, EigenResult, Method, SolverOptions};
use crate::error::{Error, Result};
use crate::graph::{connected_components, heat_weights, NeighborTable, WeightedGraph};
use crate::operator::{laplacian, normalize, schroedinger, Potential, SchroedingerParams};

/// Eigenvalue gap below which two eigenpairs count as one cluster.
pub const CLUSTER_GAP: f64 = 1e-10;

pub const EMBEDDING_FORMAT: &str = "seigmap-embedding";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub potential_hash: String,
    pub n: usize,
    pub seed: u64,
    pub method: Method,
    pub max_residual: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Discarded leading eigenpair of the normalized operator, in `z`-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// `m × n`; row `i` is `y_i`.
    pub coords: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub skipped: Skipped,
    pub degrees: Vec<f64>,
    pub params: Provenance,
}

/// Parameters shared by both pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub k: usize,
    pub sigma: f64,
    #[serde(default)]
    pub alpha: f64,
    pub n: usize,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl EmbedParams {
    pub fn new(k: usize, sigma: f64, n: usize) -> Self {
        Self {
            k,
            sigma,
            alpha: 0.0,
            n,
            potential: Potential::zero(),
            solver: SolverOptions::default(),
        }
    }

    pub fn with_potential(mut self, potential: Potential, alpha: f64) -> Self {
        self.potential = potential;
        self.alpha = alpha;
        self
    }

    /// Checks every argument against `m` points without running anything.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k == 0 || self.k >= m {
            return Err(Error::invalid(format!("k must satisfy 1 <= k < m (k={}, m={m})", self.k)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive and finite, got {}", self.sigma)));
        }
        if self.n == 0 || self.n + 1 > m {
            return Err(Error::invalid(format!("n must satisfy 1 <= n < m (n={}, m={m})", self.n)));
        }
        SchroedingerParams::new(self.alpha, self.n)?;
        self.potential.validate(m)
    }
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords.row(i).iter().copied().collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.coords.row(i).norm()).collect()
    }

    /// `z = D^{1/2} y`
    pub fn z(&self) -> DMatrix<f64> {
        let mut z = self.coords.clone();
        for (i, d) in self.degrees.iter().enumerate() {
            z.row_mut(i).scale_mut(d.sqrt());
        }
        z
    }

    /// `max |yᵀDy - I|`
    pub fn constraint_defect(&self) -> f64 {
        let z = self.z();
        (z.transpose() * &z - DMatrix::identity(self.dim(), self.dim())).abs().max()
    }

    /// `max |zᵀw|` against the skipped vector.
    pub fn skip_defect(&self) -> f64 {
        let z = self.z();
        let w = nalgebra::DVector::from_column_slice(&self.skipped.vector);
        (z.transpose() * w).abs().max()
    }

    /// SHA-256 over shape, coordinate bits and eigenvalue bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for v in self.row_major() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in &self.eigenvalues {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dim());
        for i in 0..self.len() {
            out.extend(self.coords.row(i).iter());
        }
        out
    }

    pub fn to_wire(&self) -> EmbeddingFile {
        EmbeddingFile {
            format: EMBEDDING_FORMAT.to_string(),
            version: EMBEDDING_VERSION,
            shape: [self.len(), self.dim()],
            coords: self.row_major(),
            eigenvalues: self.eigenvalues.clone(),
            skipped: self.skipped.clone(),
            degrees: self.degrees.clone(),
            provenance: self.params.clone(),
            hash: self.content_hash(),
        }
    }

    pub fn from_wire(file: EmbeddingFile) -> Result<Self> {
        if file.format != EMBEDDING_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported embedding version {}", file.version)));
        }
        let [m, n] = file.shape;
        if file.coords.len() != m * n {
            return Err(Error::ShapeMismatch(format!(
                "shape {m}x{n} needs {} coordinates, found {}",
                m * n,
                file.coords.len()
            )));
        }
        if file.eigenvalues.len() != n || file.degrees.len() != m || file.skipped.vector.len() != m {
            return Err(Error::ShapeMismatch("eigenvalues, degrees or skipped vector disagree with shape".into()));
        }
        let e = Self {
            coords: DMatrix::from_row_slice(m, n, &file.coords),
            eigenvalues: file.eigenvalues,
            skipped: file.skipped,
            degrees: file.degrees,
            params: file.provenance,
        };
        if e.content_hash() != file.hash {
            return Err(Error::Format("embedding hash does not match its contents".into()));
        }
        Ok(e)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("embedding serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_wire(serde_json::from_str(text)?)
    }
}

/// Versioned wire form: coordinates flattened row-major under a shape header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub format: String,
    pub version: u32,
    pub shape: [usize; 2],
    pub coords: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub skipped: Skipped,
    pub degrees: Vec<f64>,
    pub provenance: Provenance,
    pub hash: String,
}

/// Heat-kernel graph on the `k` nearest neighbors.
pub fn build_graph(points: &PointCloud, k: usize, sigma: f64) -> Result<WeightedGraph> {
    let table = NeighborTable::build(points, k)?;
    heat_weights(&table.edges(k)?, points, sigma)
}

pub fn laplacian_eigenmaps(points: &PointCloud, k: usize, sigma: f64, n: usize) -> Result<Embedding> {
    embed(points, &EmbedParams::new(k, sigma, n))
}

pub fn schroedinger_eigenmaps(
    points: &PointCloud,
    potential: &Potential,
    alpha: f64,
    k: usize,
    sigma: f64,
    n: usize,
) -> Result<Embedding> {
    embed(points, &EmbedParams::new(k, sigma, n).with_potential(potential.clone(), alpha))
}

pub fn embed(points: &PointCloud, params: &EmbedParams) -> Result<Embedding> {
    params.validate(points.len())?;
    let graph = build_graph(points, params.k, params.sigma)?;
    embed_graph(&graph, &params.potential, params.alpha, params.n, &params.solver)
}

/// Runs the eigen step on a prebuilt graph. The graph must be connected.
pub fn embed_graph(
    graph: &WeightedGraph,
    potential: &Potential,
    alpha: f64,
    n: usize,
    solver: &SolverOptions,
) -> Result<Embedding> {
    let m = graph.n_nodes();
    SchroedingerParams::new(alpha, n)?;
    if n + 1 > m {
        return Err(Error::invalid(format!("n must satisfy 1 <= n < m (n={n}, m={m})")));
    }
    potential.validate(m)?;
    let comps = connected_components(&graph.weights);
    if comps.count > 1 {
        return Err(Error::DisconnectedGraph { components: comps.count });
    }
    let op = normalize(&schroedinger(&laplacian(graph), potential, alpha)?, &graph.degrees)?;
    let result = solve_with_fallback(&op, (n + 2).min(m), solver)?;
    Ok(assemble(graph, potential, alpha, n, solver.seed, result))
}

fn solve_with_fallback(op: &crate::sparse::SparseSym, count: usize, solver: &SolverOptions) -> Result<EigenResult> {
    match smallest_eigs_with(op, count, solver) {
        Err(Error::NoConvergence { .. }) if solver.method != Method::Dense && op.dim() <= 4 * crate::eigensolve::DENSE_MAX_DIM => {
            smallest_eigs_with(
                op,
                count,
                &SolverOptions {
                    method: Method::Dense,
                    ..*solver
                },
            )
        }
        other => other,
    }
}

fn assemble(graph: &WeightedGraph, potential: &Potential, alpha: f64, n: usize, seed: u64, r: EigenResult) -> Embedding {
    let m = graph.n_nodes();
    let mut warnings = Vec::new();
    let ev = &r.eigenvalues;
    if ev.len() > 1 && (ev[1] - ev[0]).abs() < CLUSTER_GAP {
        warnings.push(format!(
            "skipped eigenvalue {:.3e} is clustered with the next one; the skipped direction is not unique",
            ev[0]
        ));
    }
    if ev.len() > n + 1 && (ev[n + 1] - ev[n]).abs() < CLUSTER_GAP {
        warnings.push(format!(
            "retained eigenvalue {} ({:.3e}) is clustered with the first discarded one; columns truncated in solver order",
            n, ev[n]
        ));
    }
    let inv_sqrt: Vec<f64> = graph.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut coords = DMatrix::zeros(m, n);
    for j in 0..n {
        let col = r.eigenvectors.column(j + 1);
        for i in 0..m {
            coords[(i, j)] = col[i] * inv_sqrt[i];
        }
    }
    Embedding {
        coords,
        eigenvalues: ev[1..=n].to_vec(),
        skipped: Skipped {
            eigenvalue: ev[0],
            vector: r.eigenvectors.column(0).iter().copied().collect(),
        },
        degrees: graph.degrees.clone(),
        params: Provenance {
            k: graph.k,
            sigma: graph.sigma,
            alpha,
            potential_hash: potential.content_hash(),
            n,
            seed,
            method: r.method,
            max_residual: r.max_residual(),
            warnings,
        },
    }
}

/// `trace(yᵀVy)`.
pub fn potential_energy(e: &Embedding, potential: &Potential) -> Result<f64> {
    let m = e.len();
    potential.validate(m).map_err(|_| Error::DimensionMismatch {
        expected: m,
        found: potential.max_index().map_or(0, |i| i + 1),
    })?;
    let v = potential.realize(m)?;
    Ok((0..e.dim())
        .map(|j| v.quadratic_form(e.coords.column(j).as_slice()))
        .sum::<f64>()
        .max(0.0))
}

/// `Σ_{i ∉ labeled} D_ii ‖y_i‖²`.
pub fn nullmass(e: &Embedding, labeled: &[usize]) -> Result<f64> {
    let m = e.len();
    let mut mask = vec![false; m];
    for &i in labeled {
        if i >= m {
            return Err(Error::IndexOutOfRange { index: i, len: m });
        }
        mask[i] = true;
    }
    Ok((0..m)
        .filter(|&i| !mask[i])
        .map(|i| e.degrees[i] * e.coords.row(i).norm_squared())
        .sum())
}
