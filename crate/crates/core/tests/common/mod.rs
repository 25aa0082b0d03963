//! Independent dense oracles for integration and acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use seigmap::data::{seeded_rng, PointCloud, SeededRng};
use seigmap::graph::{connected_components, heat_weights, knn_graph, WeightedGraph};

/// Cyclic Jacobi rotations on a dense symmetric matrix. Returns ascending
/// eigenvalues and the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &v.column(i));
    }
    (values, vecs)
}

/// Random symmetric PSD matrix `BᵀB` of size `m` with rank at most `rank`.
pub fn random_psd(m: usize, rank: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, m, |_, _| rng.random_range(-1.0..1.0));
    let a = b.transpose() * b;
    (&a + a.transpose()) * 0.5
}

/// Largest principal angle between the column spans of `a` and `b`
/// (both column-orthonormal).
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = (a.transpose() * b).singular_values();
    let smallest = s.iter().copied().fold(f64::INFINITY, f64::min);
    smallest.clamp(-1.0, 1.0).acos()
}

pub fn random_cloud(m: usize, dim: usize, rng: &mut SeededRng) -> PointCloud {
    let data = (0..m * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    PointCloud::new(m, dim, data).unwrap()
}

/// Smallest `k` that gives a connected heat-kernel graph.
pub fn connected_graph(points: &PointCloud, sigma: f64) -> WeightedGraph {
    for k in 1..points.len() {
        let g = heat_weights(&knn_graph(points, k).unwrap(), points, sigma).unwrap();
        if connected_components(&g.weights).count == 1 {
            return g;
        }
    }
    unreachable!("the complete graph is connected")
}

pub fn rng(seed: u64) -> SeededRng {
    seeded_rng(seed)
}

/// Orthonormal basis of the null space of a symmetric PSD matrix.
pub fn null_space(v: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(v);
    let cols: Vec<DVector<f64>> = vals
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.abs() <= tol)
        .map(|(i, _)| vecs.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Sum of the `count` smallest eigenvalues of `P ᵀ 𝓛 P`, where `P` spans the
/// null space of `𝒱`: the smallest value of `trace(zᵀ𝓛z)` over orthonormal
/// `count`-frames that the potential does not see.
pub fn constrained_minimum(normalized_l: &DMatrix<f64>, normalized_v: &DMatrix<f64>, count: usize) -> Option<f64> {
    let scale = normalized_v.abs().max().max(1.0);
    let p = null_space(normalized_v, 1e-10 * scale);
    if p.ncols() < count {
        return None;
    }
    let reduced = p.transpose() * normalized_l * &p;
    let (vals, _) = jacobi_eigen(&((&reduced + reduced.transpose()) * 0.5));
    Some(vals[..count].iter().sum())
}

/// `D^{-1/2} A D^{-1/2}` as a dense matrix.
pub fn dense_normalized(a: &DMatrix<f64>, degrees: &[f64]) -> DMatrix<f64> {
    let s = DVector::from_iterator(degrees.len(), degrees.iter().map(|d| 1.0 / d.sqrt()));
    let sd = DMatrix::from_diagonal(&s);
    &sd * a * &sd
}

#[test]
fn jacobi_diagonalizes() {
    let mut r = rng(1);
    let a = random_psd(7, 7, &mut r);
    let (vals, vecs) = jacobi_eigen(&a);
    let recon = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals.clone())) * vecs.transpose();
    assert!((recon - a).abs().max() < 1e-12);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
}
