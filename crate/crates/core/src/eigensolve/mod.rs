//! Smallest eigenpairs of sparse symmetric PSD matrices.
//!
//! Two paths share one contract: a dense tridiagonal solver for moderate
//! sizes and a restarted Lanczos iteration on the folded operator `cI - A`
//! above [`DENSE_MAX_DIM`]. Both return ascending eigenvalues, orthonormal
//! eigenvectors and residuals recomputed against the sparse input.

mod dense;
mod lanczos;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseSym;

pub const DENSE_MAX_DIM: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0x5EED_0001;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on each residual `‖A v - λ v‖₂`.
    pub tol: f64,
    /// Restart cap for Lanczos; `None` means `50 * count`.
    pub max_iter: Option<usize>,
    pub method: Method,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            method: Method::Auto,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// One column per eigenvalue.
    pub eigenvectors: DMatrix<f64>,
    /// `‖A v - λ v‖₂` per pair, recomputed from the sparse input.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
}

impl EigenResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &r| m.max(r))
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// The `count` algebraically smallest eigenpairs of `a`, with the default
/// seed and automatic path selection.
pub fn smallest_eigs(a: &SparseSym, count: usize, tol: f64, max_iter: usize) -> Result<EigenResult> {
    smallest_eigs_with(
        a,
        count,
        &SolverOptions {
            tol,
            max_iter: Some(max_iter),
            ..SolverOptions::default()
        },
    )
}

pub fn smallest_eigs_with(a: &SparseSym, count: usize, opts: &SolverOptions) -> Result<EigenResult> {
    let m = a.dim();
    if count == 0 || count > m {
        return Err(Error::invalid(format!("count must satisfy 1 <= count <= m (count={count}, m={m})")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let method = match opts.method {
        Method::Auto if m <= DENSE_MAX_DIM => Method::Dense,
        Method::Auto => Method::Lanczos,
        other => other,
    };
    let tol = opts.tol;
    let (values, vectors, iterations, lanczos_ok) = match method {
        Method::Dense => {
            let order = grading_order(a);
            let (vals, vecs) = dense::smallest_pairs(a.to_dense_lower_rows(&order), m, count, opts.seed)?;
            let vecs = vecs
                .into_iter()
                .map(|v| {
                    let mut out = vec![0.0; m];
                    for (r, &i) in order.iter().enumerate() {
                        out[i] = v[r];
                    }
                    out
                })
                .collect();
            (vals, vecs, 1, true)
        }
        _ => {
            let max_iter = opts.max_iter.unwrap_or(50 * count).max(1);
            let out = lanczos::smallest_pairs(a, count, tol, max_iter, opts.seed)?;
            // Rayleigh quotients on A, not Ritz values of the folded operator.
            let values = out.vectors.iter().map(|v| lanczos::dot(v, &a.matvec(v))).collect();
            (values, out.vectors, out.restarts, out.converged)
        }
    };
    let mut result = finish(a, values, vectors, iterations, method);
    result.converged = lanczos_ok && result.residuals.iter().all(|&r| r <= tol);
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NoConvergence {
            result: Box::new(result),
        })
    }
}

/// Row order by decreasing diagonal magnitude, for graded operators.
fn grading_order(a: &SparseSym) -> Vec<usize> {
    let d = a.diagonal();
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| d[j].abs().total_cmp(&d[i].abs()).then(i.cmp(&j)));
    order
}

/// Sorts ascending, fixes signs and recomputes residuals.
fn finish(a: &SparseSym, values: Vec<f64>, vectors: Vec<Vec<f64>>, iterations: usize, method: Method) -> EigenResult {
    let m = a.dim();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = DMatrix::zeros(m, order.len());
    for (col, &i) in order.iter().enumerate() {
        let mut v = vectors[i].clone();
        canonical_sign(&mut v);
        eigenvectors.set_column(col, &nalgebra::DVector::from_vec(v));
    }
    let residuals = residuals(a, &eigenvalues, &eigenvectors);
    EigenResult {
        eigenvalues,
        eigenvectors,
        residuals,
        iterations,
        converged: true,
        method,
    }
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `‖A v_j - λ_j v_j‖₂` for every column.
pub fn residuals(a: &SparseSym, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let v = vectors.column(j);
            let av = a.matvec(v.as_slice());
            av.iter()
                .zip(v.iter())
                .map(|(x, y)| (x - l * y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
