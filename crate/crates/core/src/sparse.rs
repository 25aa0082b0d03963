//! Compressed storage for real symmetric matrices.
//!
//! Entries are accepted only through the upper triangle (`i <= j`) and are
//! mirrored on construction, so `A = Aᵀ` holds structurally: every stored
//! off-diagonal value has a bit-identical partner. Rows are stored in full
//! CSR form, which keeps the matvec a plain row-dot loop.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row count above which [`SparseSym::matvec`] splits work over rayon.
const PAR_MATVEC_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Builds a matrix from upper-triangle triplets. Entries with `i > j` are
    /// swapped into the upper triangle, duplicates are summed and explicit
    /// zeros are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut upper: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= dim {
                return Err(Error::IndexOutOfRange { index: i, len: dim });
            }
            if j >= dim {
                return Err(Error::IndexOutOfRange { index: j, len: dim });
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
            }
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            upper.push((a, b, v));
        }
        upper.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(upper.len());
        for (i, j, v) in upper {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != 0.0);

        let mut counts = vec![0usize; dim];
        for &(i, j, _) in &merged {
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        for c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let nnz = *row_ptr.last().unwrap();
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = row_ptr[..dim].to_vec();
        // Merged entries are sorted by (row, col) with row <= col, so pushing
        // mirrored entries in this order leaves each row's columns sorted.
        for &(i, j, v) in &merged {
            if i != j {
                let p = fill[j];
                col_idx[p] = i;
                values[p] = v;
                fill[j] += 1;
            }
        }
        for &(i, j, v) in &merged {
            let p = fill[i];
            col_idx[p] = j;
            values[p] = v;
            fill[i] += 1;
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .expect("diagonal indices are in range")
    }

    /// Symmetrizes a dense matrix from its upper triangle.
    pub fn from_dense_upper(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                t.push((i, j, a[(i, j)]));
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Upper-triangle entries `(i, j, v)` with `i <= j`, in row order.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).filter(move |&(j, _)| j >= i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row = |i: usize| -> f64 {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum()
        };
        if self.dim >= PAR_MATVEC_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.matvec(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, other: &SparseSym, alpha: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let entries = self
            .upper_entries()
            .chain(other.upper_entries().map(|(i, j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.dim, entries)
    }

    /// `diag(s) A diag(s)`
    pub fn scale_symmetric(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: s.len(),
            });
        }
        let mut out = self.clone();
        for i in 0..self.dim {
            for p in out.row_ptr[i]..out.row_ptr[i + 1] {
                let j = out.col_idx[p];
                out.values[p] *= s[i] * s[j];
            }
        }
        Ok(out)
    }

    /// Upper bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                self.row(i)
                    .map(|(j, v)| if j == i { v } else { v.abs() })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Row-major dense copy of the lower triangle including the diagonal.
    /// Dense row-major lower triangle of `P A Pᵀ`, where row `r` of the
    /// result is row `order[r]` of `A`.
    pub(crate) fn to_dense_lower_rows(&self, order: &[usize]) -> Vec<f64> {
        let n = self.dim;
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let ri = rank[i];
            for (j, v) in self.row(i) {
                let rj = rank[j];
                if rj <= ri {
                    a[ri * n + rj] = v;
                }
            }
        }
        a
    }

    /// SHA-256 over the dimension and the upper-triangle entries.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (i, j, v) in self.upper_entries() {
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrors_and_merges() {
        let a = SparseSym::from_triplets(3, [(0, 1, 2.0), (1, 0, 1.0), (2, 2, 5.0), (1, 2, 0.0)]).unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(2, 2), 5.0);
        assert_eq!(a.get(1, 2), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = SparseSym::from_triplets(2, [(0, 2, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, len: 2 }));
    }

    #[test]
    fn matvec_matches_dense() {
        let a = SparseSym::from_triplets(3, [(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (1, 2, 0.5)]).unwrap();
        let x = [1.0, -2.0, 4.0];
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        let y = a.matvec(&x);
        for i in 0..3 {
            assert!((y[i] - dense[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_are_column_sorted() {
        let a = SparseSym::from_triplets(4, [(2, 3, 1.0), (0, 3, 1.0), (1, 3, 1.0), (3, 3, 1.0)]).unwrap();
        let cols: Vec<usize> = a.row(3).map(|(j, _)| j).collect();
        assert_eq!(cols, vec![0, 1, 2, 3]);
    }

    #[test]
    fn scale_and_add() {
        let a = SparseSym::from_triplets(2, [(0, 0, 1.0), (0, 1, -1.0), (1, 1, 1.0)]).unwrap();
        let b = SparseSym::identity(2);
        let c = a.add_scaled(&b, 2.0).unwrap();
        assert_eq!(c.get(0, 0), 3.0);
        let s = c.scale_symmetric(&[2.0, 0.5]).unwrap();
        assert_eq!(s.get(0, 0), 12.0);
        assert_eq!(s.get(0, 1), -1.0);
        assert_eq!(s.get(1, 1), 0.75);
    }

    #[test]
    fn gershgorin_bounds_spectrum() {
        let a = SparseSym::from_triplets(3, [(0, 0, 1.0), (0, 1, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 2, 1.0)]).unwrap();
        assert_eq!(a.gershgorin_upper(), 4.0);
    }
}
