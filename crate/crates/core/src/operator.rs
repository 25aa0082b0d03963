//! Graph Laplacian, barrier potentials and the Schroedinger operator
//! `E = L + αV` together with its degree normalization.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::sparse::SparseSym;

/// A symmetric positive semi-definite barrier potential, kept symbolic
/// until [`Potential::realize`] is called.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    /// `V_ii = v` for each `(i, v)`; every `v >= 0`.
    Diagonal(Vec<(usize, f64)>),
    /// Sum of `V^(i,j)`: ones on `(i,i)` and `(j,j)`, minus one on `(i,j)` and
    /// `(j,i)`. Its quadratic form is `Σ ‖y_i - y_j‖²`.
    Pairwise(Vec<(usize, usize)>),
    /// `Σ_t V^(i_t, i_{t+1})` over consecutive entries of the list.
    Chain(Vec<usize>),
    /// Nonnegative combination of potentials.
    Sum(Vec<(f64, Potential)>),
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Sum(Vec::new())
    }
}

impl Potential {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Unit diagonal entries on `indices`.
    pub fn diagonal_ones(indices: &[usize]) -> Self {
        Potential::Diagonal(indices.iter().map(|&i| (i, 1.0)).collect())
    }

    pub fn pair(i: usize, j: usize) -> Self {
        Potential::Pairwise(vec![(i, j)])
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Diagonal(d) => d.iter().all(|&(_, v)| v == 0.0),
            Potential::Pairwise(p) => p.is_empty(),
            Potential::Chain(c) => c.len() < 2,
            Potential::Sum(terms) => terms.iter().all(|(c, p)| *c == 0.0 || p.is_zero()),
        }
    }

    /// Checks index ranges and sign constraints against dimension `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        let check = |i: usize| {
            if i < m {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange { index: i, len: m })
            }
        };
        match self {
            Potential::Diagonal(d) => {
                for &(i, v) in d {
                    check(i)?;
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::invalid(format!("diagonal potential value {v} at {i} must be finite and >= 0")));
                    }
                }
            }
            Potential::Pairwise(p) => {
                for &(i, j) in p {
                    check(i)?;
                    check(j)?;
                    if i == j {
                        return Err(Error::invalid(format!("pairwise potential needs distinct indices, got ({i}, {j})")));
                    }
                }
            }
            Potential::Chain(c) => {
                for &i in c {
                    check(i)?;
                }
                if let Some(w) = c.windows(2).find(|w| w[0] == w[1]) {
                    return Err(Error::invalid(format!("chain potential repeats index {} consecutively", w[0])));
                }
            }
            Potential::Sum(terms) => {
                for (c, p) in terms {
                    if !(*c >= 0.0 && c.is_finite()) {
                        return Err(Error::invalid(format!("potential coefficient {c} must be finite and >= 0")));
                    }
                    p.validate(m)?;
                }
            }
        }
        Ok(())
    }

    fn push_triplets(&self, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        let mut pair = |i: usize, j: usize| {
            out.push((i, i, scale));
            out.push((j, j, scale));
            out.push((i, j, -scale));
        };
        match self {
            Potential::Diagonal(d) => out.extend(d.iter().map(|&(i, v)| (i, i, scale * v))),
            Potential::Pairwise(p) => p.iter().for_each(|&(i, j)| pair(i, j)),
            Potential::Chain(c) => c.windows(2).for_each(|w| pair(w[0], w[1])),
            Potential::Sum(terms) => {
                for (c, p) in terms {
                    p.push_triplets(scale * c, out);
                }
            }
        }
    }

    /// The explicit `m × m` matrix.
    pub fn realize(&self, m: usize) -> Result<SparseSym> {
        self.validate(m)?;
        let mut t = Vec::new();
        self.push_triplets(1.0, &mut t);
        SparseSym::from_triplets(m, t)
    }

    /// Indices carrying a positive diagonal term, sorted.
    pub fn diagonal_support(&self) -> Vec<usize> {
        fn walk(p: &Potential, scale: f64, out: &mut Vec<usize>) {
            match p {
                Potential::Diagonal(d) => out.extend(d.iter().filter(|&&(_, v)| v * scale > 0.0).map(|&(i, _)| i)),
                Potential::Sum(terms) => terms.iter().for_each(|(c, q)| walk(q, scale * c, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, 1.0, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Largest index referenced anywhere in the potential.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            Potential::Diagonal(d) => d.iter().map(|&(i, _)| i).max(),
            Potential::Pairwise(p) => p.iter().map(|&(i, j)| i.max(j)).max(),
            Potential::Chain(c) => c.iter().copied().max(),
            Potential::Sum(terms) => terms.iter().filter_map(|(_, p)| p.max_index()).max(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("potential serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// One entry of the textual potential format shared by the CLI and the
/// HTTP service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialTerm {
    /// Diagonal entry `value` on every listed index.
    Diag {
        indices: Vec<usize>,
        #[serde(default = "one")]
        value: f64,
    },
    /// `value · V^(i,j)` for `indices = [i, j]`.
    Pair {
        indices: [usize; 2],
        #[serde(default = "one")]
        value: f64,
    },
    /// `value · Σ V^(i_t, i_{t+1})`.
    Chain {
        indices: Vec<usize>,
        #[serde(default = "one")]
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A list of [`PotentialTerm`]s, summed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PotentialSpec(pub Vec<PotentialTerm>);

impl PotentialSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn to_potential(&self) -> Potential {
        let terms = self
            .0
            .iter()
            .map(|t| match t {
                PotentialTerm::Diag { indices, value } => {
                    (1.0, Potential::Diagonal(indices.iter().map(|&i| (i, *value)).collect()))
                }
                PotentialTerm::Pair { indices, value } => (*value, Potential::Pairwise(vec![(indices[0], indices[1])])),
                PotentialTerm::Chain { indices, value } => (*value, Potential::Chain(indices.clone())),
            })
            .collect();
        Potential::Sum(terms)
    }
}

/// Parameters of a Schroedinger eigenmap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchroedingerParams {
    pub alpha: f64,
    pub n_components: usize,
    /// Leading eigenvectors discarded before the retained block.
    pub skip: usize,
}

impl SchroedingerParams {
    pub fn new(alpha: f64, n_components: usize) -> Result<Self> {
        let p = Self {
            alpha,
            n_components,
            skip: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.n_components == 0 {
            return Err(Error::invalid("n_components must be >= 1"));
        }
        if self.skip == 0 {
            return Err(Error::invalid("skip must be >= 1"));
        }
        Ok(())
    }
}

/// `L = D - W`
pub fn laplacian(graph: &WeightedGraph) -> SparseSym {
    let m = graph.n_nodes();
    let diag = graph.degrees.iter().enumerate().map(|(i, &d)| (i, i, d));
    let off = graph
        .weights
        .upper_entries()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, w)| (i, j, -w));
    SparseSym::from_triplets(m, diag.chain(off)).expect("graph indices are in range")
}

/// `E = L + α·V`
pub fn schroedinger(laplacian: &SparseSym, potential: &Potential, alpha: f64) -> Result<SparseSym> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let v = potential.realize(laplacian.dim())?;
    laplacian.add_scaled(&v, alpha)
}

/// `D^{-1/2} E D^{-1/2}`
pub fn normalize(e: &SparseSym, degrees: &[f64]) -> Result<SparseSym> {
    if degrees.len() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            found: degrees.len(),
        });
    }
    if let Some(node) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree { node });
    }
    let s: Vec<f64> = degrees.iter().map(|d| d.sqrt().recip()).collect();
    e.scale_symmetric(&s)
}

/// Size-dependent starting value for `α`:
/// `σ_m = 4·m^{-1/(n+2+s)}` and `α = (1/C)·m / (π σ_m)^{-(n+2)/2}`,
/// where `n` is an intrinsic-dimension estimate.
pub fn alpha_heuristic(m: usize, n: usize, s: f64, c: f64) -> Result<f64> {
    if m == 0 || n == 0 || !(s > 0.0) || !(c > 0.0) {
        return Err(Error::invalid(format!(
            "alpha heuristic needs m, n >= 1 and s, C > 0 (m={m}, n={n}, s={s}, C={c})"
        )));
    }
    let (m, n) = (m as f64, n as f64);
    let sigma_m = 4.0 * m.powf(-1.0 / (n + 2.0 + s));
    Ok(m / (c * (PI * sigma_m).powf(-(n + 2.0) / 2.0)))
}

/// Normalized operators keyed by `(graph, potential, α)` content hash, so
/// repeated requests on the same inputs assemble once.
#[derive(Debug, Default)]
pub struct OperatorCache {
    entries: Mutex<HashMap<String, Arc<SparseSym>>>,
}

impl OperatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(graph: &WeightedGraph, potential: &Potential, alpha: f64) -> String {
        let mut h = Sha256::new();
        h.update(graph.weights.content_hash().as_bytes());
        h.update(potential.content_hash().as_bytes());
        h.update(alpha.to_bits().to_le_bytes());
        hex::encode(h.finalize())
    }

    /// The normalized operator `D^{-1/2}(L + αV)D^{-1/2}`, assembled on miss.
    pub fn normalized(&self, graph: &WeightedGraph, potential: &Potential, alpha: f64) -> Result<Arc<SparseSym>> {
        let key = Self::key(graph, potential, alpha);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let e = schroedinger(&laplacian(graph), potential, alpha)?;
        let n = Arc::new(normalize(&e, &graph.degrees)?);
        self.entries.lock().unwrap().insert(key, Arc::clone(&n));
        Ok(n)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn path3() -> SparseSym {
        SparseSym::from_triplets(3, [(0, 0, 1.0), (1, 1, 2.0), (2, 2, 1.0), (0, 1, -1.0), (1, 2, -1.0)]).unwrap()
    }

    fn eigenvalues(a: &SparseSym) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(a.to_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn pair_potential_matrix() {
        let v = Potential::pair(0, 1).realize(2).unwrap().to_dense();
        assert_eq!(v.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let y = [0.3, -1.2];
        let q = Potential::pair(0, 1).realize(2).unwrap().quadratic_form(&y);
        assert!((q - (0.3f64 + 1.2).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn diagonal_potential_matrix() {
        let v = Potential::diagonal_ones(&[1]).realize(3).unwrap();
        assert_eq!(v.diagonal(), vec![0.0, 1.0, 0.0]);
        assert_eq!(v.nnz(), 1);
    }

    #[test]
    fn chain_potential_is_path_laplacian() {
        let v = Potential::Chain(vec![0, 1, 2]).realize(3).unwrap();
        assert_eq!(v, path3());
    }

    #[test]
    fn chain_eigenvectors_are_dct2() {
        // DCT-II basis: u_k(t) = cos(π k (t + 1/2) / r), eigenvalue 2 - 2cos(π k / r)
        let r = 7;
        let chain: Vec<usize> = (0..r).collect();
        let v = Potential::Chain(chain).realize(r).unwrap();
        for k in 0..r {
            let u: Vec<f64> = (0..r)
                .map(|t| (PI * k as f64 * (t as f64 + 0.5) / r as f64).cos())
                .collect();
            let lambda = 2.0 - 2.0 * (PI * k as f64 / r as f64).cos();
            let vu = v.matvec(&u);
            for t in 0..r {
                assert!((vu[t] - lambda * u[t]).abs() < 1e-12, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn index_out_of_range() {
        assert!(matches!(
            Potential::pair(0, 3).realize(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(Potential::pair(1, 1).realize(3).is_err());
        assert!(Potential::Diagonal(vec![(0, -1.0)]).realize(3).is_err());
    }

    #[test]
    fn path_laplacian_eigenvalues() {
        let ev = eigenvalues(&path3());
        for (a, b) in ev.iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_is_laplacian() {
        let l = path3();
        let e = schroedinger(&l, &Potential::diagonal_ones(&[0]), 0.0).unwrap();
        assert_eq!(e, l);
    }

    #[test]
    fn diagonal_removes_zero_eigenvalue() {
        let e = schroedinger(&path3(), &Potential::diagonal_ones(&[0]), 1.0).unwrap();
        assert!(eigenvalues(&e)[0] > 1e-3);
    }

    #[test]
    fn pairwise_keeps_constant_null_vector() {
        for alpha in [0.1, 1.0, 100.0] {
            let e = schroedinger(&path3(), &Potential::pair(0, 2), alpha).unwrap();
            let r = e.matvec(&[1.0, 1.0, 1.0]);
            assert!(r.iter().all(|v| v.abs() < 1e-12));
            assert!(eigenvalues(&e)[0].abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_path_has_unit_diagonal() {
        let n = normalize(&path3(), &[1.0, 2.0, 1.0]).unwrap();
        assert!(n.diagonal().iter().all(|d| (d - 1.0).abs() < 1e-15));
        assert!(normalize(&path3(), &[1.0, 0.0, 1.0]).is_err());
        assert_eq!(normalize(&path3(), &[1.0; 3]).unwrap(), path3());
    }

    #[test]
    fn heuristic_closed_form() {
        // σ_m = 4·1000^{-1/5}, α = 1000·(π σ_m)^2
        let sigma_m = 4.0 * 1000f64.powf(-0.2);
        let expected = 1000.0 * (PI * sigma_m).powi(2);
        let got = alpha_heuristic(1000, 2, 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
        assert!((got - 9_963.679_014_370_191).abs() < 1e-8);
        let half = alpha_heuristic(1000, 2, 1.0, 2.0).unwrap();
        assert!((half - got / 2.0).abs() < 1e-9 * got);
        let mut prev = 0.0;
        for m in [1, 2, 10, 100, 1000, 10_000] {
            let a = alpha_heuristic(m, 3, 0.5, 1.0).unwrap();
            assert!(a > prev);
            prev = a;
        }
        assert!(alpha_heuristic(0, 2, 1.0, 1.0).is_err());
        assert!(alpha_heuristic(10, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let text = r#"[{"type":"diag","indices":[0,4],"value":1.0},{"type":"pair","indices":[1,2]},{"type":"chain","indices":[3,5,6],"value":0.5}]"#;
        let spec = PotentialSpec::from_json(text).unwrap();
        let again = PotentialSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
        let v = spec.to_potential().realize(7).unwrap();
        assert_eq!(v.get(0, 0), 1.0);
        assert_eq!(v.get(1, 2), -1.0);
        assert_eq!(v.get(5, 5), 1.0);
        assert_eq!(v.get(3, 5), -0.5);
        assert!(PotentialSpec::from_json(r#"[{"type":"ring","indices":[1]}]"#).is_err());
    }

    #[test]
    fn cache_hits() {
        use crate::data::PointCloud;
        use crate::graph::{heat_weights, knn_graph};
        let p = PointCloud::from_rows(&[[0.0], [1.0], [2.0], [4.0]]).unwrap();
        let g = heat_weights(&knn_graph(&p, 1).unwrap(), &p, 1.0).unwrap();
        let cache = OperatorCache::new();
        let v = Potential::diagonal_ones(&[0]);
        let a = cache.normalized(&g, &v, 2.0).unwrap();
        let b = cache.normalized(&g, &v, 2.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.normalized(&g, &v, 3.0).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
