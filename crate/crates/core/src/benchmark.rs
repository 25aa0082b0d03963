//! Semi-supervised error-rate protocol on labeled tables.
//!
//! Each repetition draws a training split, builds a potential from the
//! training labels, embeds the full dataset and classifies every point.
//! Schroedinger eigenmaps classify by norm (below the threshold means the
//! negative class); Laplacian eigenmaps use vector angle classification
//! seeded from the training-class means. Training points keep their true
//! labels in both. Grid points are chosen by mean error over repetitions,
//! and an honest variant picks them on a held-out half of the training set.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_rows, fit_seeds_rows, Label};
use crate::data::{sample_indices, seeded_rng, standardize, LabeledDataset, Manifest};
use crate::eigensolve::SolverOptions;
use crate::embedding::embed_graph;
use crate::error::{Error, Result};
use crate::graph::{heat_weights, NeighborTable, WeightedGraph};
use crate::operator::{alpha_heuristic, Potential};

/// Class id of the negative (benign, absence) class.
pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

/// How training labels become a potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Unit diagonal on training negatives.
    NegativeDiagonal,
    /// Unit diagonal on training negatives plus a chain through the training
    /// positives, in index order.
    NegativeDiagonalPositiveChain,
}

impl Design {
    pub fn potential(&self, truth: &[usize], train: &[usize]) -> Potential {
        let neg: Vec<usize> = train.iter().copied().filter(|&i| truth[i] == NEGATIVE).collect();
        let diag = Potential::diagonal_ones(&neg);
        match self {
            Design::NegativeDiagonal => diag,
            Design::NegativeDiagonalPositiveChain => {
                let pos: Vec<usize> = train.iter().copied().filter(|&i| truth[i] != NEGATIVE).collect();
                Potential::Sum(vec![(1.0, diag), (1.0, Potential::Chain(pos))])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AlphaGrid {
    Explicit { values: Vec<f64> },
    /// `points` values spaced by the factor `ratio`, centred on
    /// `alpha_heuristic(m, intrinsic_dim, s, c)`.
    Heuristic {
        points: usize,
        ratio: f64,
        intrinsic_dim: usize,
        s: f64,
        c: f64,
    },
}

impl AlphaGrid {
    pub fn resolve(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            AlphaGrid::Explicit { values } => Ok(values.clone()),
            AlphaGrid::Heuristic {
                points,
                ratio,
                intrinsic_dim,
                s,
                c,
            } => {
                let centre = alpha_heuristic(m, *intrinsic_dim, *s, *c)?;
                let mid = (*points as f64 - 1.0) / 2.0;
                Ok((0..*points).map(|j| centre * ratio.powf(j as f64 - mid)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: String,
    pub train_sizes: Vec<usize>,
    pub reps: usize,
    pub k_grid: Vec<usize>,
    pub sigma_grid: Vec<f64>,
    pub alpha_grid: AlphaGrid,
    /// Quantiles of the embedded norms tried as the threshold.
    pub delta_quantiles: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub standardize: bool,
    pub design: Design,
    pub run_le: bool,
    pub run_se: bool,
    pub honest: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl BenchConfig {
    /// Defaults for `wbcd`, `chdd` and `mmd`; unknown ids get the diagonal
    /// design and σ = 1.
    pub fn for_dataset(id: &str) -> Self {
        let lower = id.to_ascii_lowercase();
        let (sigma, design, sizes) = match lower.as_str() {
            "wbcd" => (0.5, Design::NegativeDiagonal, vec![40, 100, 200, 400, 600]),
            "chdd" => (1.0, Design::NegativeDiagonalPositiveChain, vec![40, 100, 200, 297]),
            "mmd" => (2.0, Design::NegativeDiagonal, vec![20, 30, 40, 100, 200, 800]),
            _ => (1.0, Design::NegativeDiagonal, vec![40]),
        };
        Self {
            dataset: lower,
            train_sizes: sizes,
            reps: 100,
            k_grid: vec![6, 8, 10, 12, 14, 17, 20],
            sigma_grid: vec![sigma],
            alpha_grid: AlphaGrid::Heuristic {
                points: 8,
                ratio: 10.0,
                intrinsic_dim: 2,
                s: 1.0,
                c: 1.0,
            },
            delta_quantiles: (2..=38).map(|i| i as f64 * 0.025).collect(),
            n: 6,
            seed: 7,
            standardize: true,
            design,
            run_le: true,
            run_se: true,
            honest: true,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("bench config: {what}")));
        if self.train_sizes.is_empty() || self.k_grid.is_empty() || self.sigma_grid.is_empty() {
            return bad("grids and training sizes must be nonempty");
        }
        if self.delta_quantiles.is_empty() || self.delta_quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return bad("threshold quantiles must be nonempty and within [0, 1]");
        }
        if let Some(t) = self.train_sizes.iter().find(|&&t| t == 0 || t > m) {
            return Err(Error::invalid(format!("bench config: training size {t} outside 1..={m}")));
        }
        if self.reps == 0 {
            return bad("reps must be positive");
        }
        if self.n == 0 || self.n + 1 >= m {
            return bad("n must satisfy 1 <= n < m - 1");
        }
        if let Some(k) = self.k_grid.iter().find(|&&k| k == 0 || k >= m) {
            return Err(Error::invalid(format!("bench config: k={k} outside 1..{m}")));
        }
        if self.sigma_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("sigma values must be positive");
        }
        let alphas = self.alpha_grid.resolve(m)?;
        if alphas.is_empty() || alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("alpha grid must be nonempty, finite and nonnegative");
        }
        if !self.run_le && !self.run_se {
            return bad("nothing to run");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    Le,
    Se,
    LeHonest,
    SeHonest,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::Le => "LE",
            BenchMethod::Se => "SE",
            BenchMethod::LeHonest => "LE honest",
            BenchMethod::SeHonest => "SE honest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub sigma: f64,
    pub alpha: Option<f64>,
    pub quantile: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub train_size: usize,
    pub method: BenchMethod,
    pub mean: f64,
    pub sd: f64,
    pub best: GridPoint,
    /// Error of each successful repetition at `best`, in repetition order.
    pub per_rep: Vec<f64>,
    /// `(repetition, message)` for repetitions that failed.
    pub failures: Vec<(usize, String)>,
    /// Distinct grid-point errors, which leave those points out of the
    /// selection.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub cells: Vec<CellResult>,
}

impl BenchResult {
    pub fn cell(&self, dataset: &str, train: usize, method: BenchMethod) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.dataset.eq_ignore_ascii_case(dataset) && c.train_size == train && c.method == method)
    }
}

/// Published reference error rates (percent). `None` marks an empty cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub dataset: &'static str,
    pub train: usize,
    pub le: Option<f64>,
    pub svm_linear: f64,
    pub svm_gauss: f64,
    pub se: f64,
}

const fn r(dataset: &'static str, train: usize, le: Option<f64>, svm_linear: f64, svm_gauss: f64, se: f64) -> Reference {
    Reference {
        dataset,
        train,
        le,
        svm_linear,
        svm_gauss,
        se,
    }
}

pub const REFERENCE: &[Reference] = &[
    r("wbcd", 40, Some(14.0), 5.0, 5.0, 4.0),
    r("wbcd", 100, Some(9.0), 4.0, 4.0, 3.0),
    r("wbcd", 200, None, 4.0, 3.0, 3.0),
    r("wbcd", 400, None, 4.0, 2.0, 3.0),
    r("wbcd", 600, None, 4.0, 2.0, 3.0),
    r("chdd", 40, Some(42.0), 21.0, 19.0, 15.0),
    r("chdd", 100, None, 17.0, 15.0, 12.0),
    r("chdd", 200, None, 16.0, 11.0, 12.0),
    r("chdd", 297, None, 15.0, 9.0, 11.0),
    r("mmd", 20, Some(45.0), 24.0, 24.0, 22.0),
    r("mmd", 30, Some(40.0), 22.0, 22.0, 21.0),
    r("mmd", 40, Some(38.0), 22.0, 21.0, 20.0),
    r("mmd", 100, None, 21.0, 20.0, 20.0),
    r("mmd", 200, None, 20.0, 19.0, 20.0),
    r("mmd", 800, None, 20.0, 18.0, 20.0),
];

pub fn reference(dataset: &str, train: usize) -> Option<&'static Reference> {
    REFERENCE
        .iter()
        .find(|r| r.dataset.eq_ignore_ascii_case(dataset) && r.train == train)
}

/// Loads a manifest dataset, checks it is binary and optionally standardizes.
pub fn load_benchmark_dataset(manifest: &Manifest, id: &str, standardize_features: bool) -> Result<LabeledDataset> {
    let (ds, _) = manifest.open(id)?;
    prepare(ds, standardize_features)
}

fn prepare(ds: LabeledDataset, standardize_features: bool) -> Result<LabeledDataset> {
    if ds.class_names.len() != 2 {
        return Err(Error::invalid(format!(
            "benchmark needs two classes, {} has {:?}",
            ds.source, ds.class_names
        )));
    }
    if ds.labels.iter().any(Option::is_none) {
        return Err(Error::invalid(format!("{} has unlabeled rows", ds.source)));
    }
    Ok(if standardize_features {
        LabeledDataset {
            points: standardize(&ds.points),
            ..ds
        }
    } else {
        ds
    })
}

/// Independent 64-bit seed per (master, stream, index).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Split {
    train: Vec<usize>,
    /// Halves of `train` for the honest variant.
    fit: Vec<usize>,
    hold: Vec<usize>,
}

fn draw_split(m: usize, size: usize, seed: u64) -> Result<Split> {
    let train = sample_indices(m, size, seed)?.train_indices;
    let mut shuffled = train.clone();
    shuffled.shuffle(&mut seeded_rng(derive_seed(seed, 1, 0)));
    let half = shuffled.len().div_ceil(2);
    let mut fit = shuffled[..half].to_vec();
    let mut hold = shuffled[half..].to_vec();
    fit.sort_unstable();
    hold.sort_unstable();
    Ok(Split { train, fit, hold })
}

/// Errors for every threshold quantile, counting over `eval` points. When
/// `forced` is given those points count as correct.
fn threshold_errors(norms: &[f64], truth: &[usize], quantiles: &[f64], eval: Option<&[usize]>, forced: &[usize]) -> Vec<f64> {
    let m = norms.len();
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut is_forced = vec![false; m];
    forced.iter().for_each(|&i| is_forced[i] = true);
    let all: Vec<usize>;
    let eval = match eval {
        Some(e) => e,
        None => {
            all = (0..m).collect();
            &all
        }
    };
    quantiles
        .iter()
        .map(|&q| {
            let pos = ((q * m as f64).floor() as usize).min(m - 1);
            let delta = sorted[pos];
            let wrong = eval
                .iter()
                .filter(|&&i| !is_forced[i])
                .filter(|&&i| {
                    let predicted = if norms[i] < delta { NEGATIVE } else { POSITIVE };
                    predicted != truth[i]
                })
                .count();
            wrong as f64 / eval.len().max(1) as f64
        })
        .collect()
}

fn angle_errors(coords: &nalgebra::DMatrix<f64>, truth: &[usize], seeds_from: &[usize], eval: Option<&[usize]>, forced: &[usize]) -> Result<f64> {
    let groups: Vec<(String, Vec<usize>)> = [NEGATIVE, POSITIVE]
        .iter()
        .map(|&c| (format!("class{c}"), seeds_from.iter().copied().filter(|&i| truth[i] == c).collect()))
        .collect();
    let model = fit_seeds_rows(coords, &groups)?;
    let labels = classify_rows(coords, &model)?;
    let m = truth.len();
    let mut is_forced = vec![false; m];
    forced.iter().for_each(|&i| is_forced[i] = true);
    let all: Vec<usize> = (0..m).collect();
    let eval = eval.unwrap_or(&all);
    let wrong = eval
        .iter()
        .filter(|&&i| !is_forced[i] && labels[i] != Label::Class(truth[i]))
        .count();
    Ok(wrong as f64 / eval.len().max(1) as f64)
}

/// Per-repetition error vectors over the flattened grid.
/// Grid points that fail (a disconnected graph, say) hold NaN.
struct RepOutcome {
    full: Vec<f64>,
    hold: Vec<f64>,
    notes: Vec<String>,
}

struct Graphs {
    items: Vec<(usize, f64, WeightedGraph)>,
}

fn build_graphs(ds: &LabeledDataset, cfg: &BenchConfig) -> Result<Graphs> {
    let k_max = *cfg.k_grid.iter().max().expect("validated nonempty");
    let table = NeighborTable::build(&ds.points, k_max)?;
    let mut items = Vec::new();
    for &k in &cfg.k_grid {
        let edges = table.edges(k)?;
        for &sigma in &cfg.sigma_grid {
            items.push((k, sigma, heat_weights(&edges, &ds.points, sigma)?));
        }
    }
    Ok(Graphs { items })
}

fn summarize(
    dataset: &str,
    train: usize,
    method: BenchMethod,
    outcomes: &[std::result::Result<RepOutcome, String>],
    select_on_hold: bool,
    point: impl Fn(usize) -> GridPoint,
) -> CellResult {
    let ok: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures: Vec<(usize, String)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(r, o)| o.as_ref().err().map(|e| (r, e.clone())))
        .collect();
    let width = ok.first().map_or(0, |o| o.full.len());
    let mean_at = |idx: usize, hold: bool| -> f64 {
        ok.iter().map(|o| if hold { o.hold[idx] } else { o.full[idx] }).sum::<f64>() / ok.len() as f64
    };
    let mut notes: Vec<String> = Vec::new();
    for o in &ok {
        for n in &o.notes {
            if !notes.contains(n) {
                notes.push(n.clone());
            }
        }
    }
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for idx in 0..width {
        let s = mean_at(idx, select_on_hold);
        if s < best_score {
            best_score = s;
            best = idx;
        }
    }
    let per_rep: Vec<f64> = ok.iter().map(|o| o.full.get(best).copied().unwrap_or(f64::NAN)).collect();
    let (mean, sd) = mean_sd(&per_rep);
    CellResult {
        dataset: dataset.to_string(),
        train_size: train,
        method,
        mean,
        sd,
        best: point(best),
        per_rep,
        failures,
        notes,
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs every configured cell on a prepared (binary, cleaned) dataset.
pub fn run_on_dataset(ds: &LabeledDataset, cfg: &BenchConfig) -> Result<BenchResult> {
    let m = ds.len();
    cfg.validate(m)?;
    let truth: Vec<usize> = ds
        .labels
        .iter()
        .map(|l| l.ok_or_else(|| Error::invalid("benchmark rows must be labeled")))
        .collect::<Result<_>>()?;
    let graphs = build_graphs(ds, cfg)?;
    let alphas = cfg.alpha_grid.resolve(m)?;
    let nq = cfg.delta_quantiles.len();
    let mut cells = Vec::new();

    let le_embeddings: Vec<std::result::Result<nalgebra::DMatrix<f64>, String>> = if cfg.run_le {
        graphs
            .items
            .iter()
            .map(|(_, _, g)| {
                embed_graph(g, &Potential::zero(), 0.0, cfg.n, &cfg.solver)
                    .map(|e| e.coords)
                    .map_err(|e| e.to_string())
            })
            .collect()
    } else {
        Vec::new()
    };

    for (t_idx, &train) in cfg.train_sizes.iter().enumerate() {
        let rep_seed = |r: usize| derive_seed(cfg.seed, t_idx as u64 + 1, r as u64);

        if cfg.run_le {
            let outcomes: Vec<std::result::Result<RepOutcome, String>> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let split = draw_split(m, train, rep_seed(r)).map_err(|e| e.to_string())?;
                    let mut out = RepOutcome {
                        full: Vec::with_capacity(graphs.items.len()),
                        hold: Vec::with_capacity(graphs.items.len()),
                        notes: Vec::new(),
                    };
                    for ((k, sigma, _), emb) in graphs.items.iter().zip(&le_embeddings) {
                        let coords = match emb {
                            Ok(c) => c,
                            Err(e) => {
                                out.notes.push(format!("k={k} sigma={sigma}: {e}"));
                                out.full.push(f64::NAN);
                                out.hold.push(f64::NAN);
                                continue;
                            }
                        };
                        out.full.push(angle_errors(coords, &truth, &split.train, None, &split.train).map_err(|e| e.to_string())?);
                        // a degenerate half-split seed scores as all wrong
                        let h = angle_errors(coords, &truth, &split.fit, Some(&split.hold), &[]);
                        out.hold.push(h.unwrap_or(1.0));
                    }
                    Ok(out)
                })
                .collect();
            let point = |idx: usize| {
                let (k, sigma, _) = &graphs.items[idx];
                GridPoint {
                    k: *k,
                    sigma: *sigma,
                    alpha: None,
                    quantile: None,
                }
            };
            cells.push(summarize(&cfg.dataset, train, BenchMethod::Le, &outcomes, false, point));
            if cfg.honest {
                cells.push(summarize(&cfg.dataset, train, BenchMethod::LeHonest, &outcomes, true, point));
            }
        }

        if cfg.run_se {
            let outcomes: Vec<std::result::Result<RepOutcome, String>> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let split = draw_split(m, train, rep_seed(r)).map_err(|e| e.to_string())?;
                    let potential = cfg.design.potential(&truth, &split.train);
                    let fit_potential = cfg.design.potential(&truth, &split.fit);
                    let mut out = RepOutcome {
                        full: Vec::with_capacity(graphs.items.len() * alphas.len() * nq),
                        hold: Vec::new(),
                        notes: Vec::new(),
                    };
                    for (k, sigma, g) in &graphs.items {
                        for &alpha in &alphas {
                            match embed_graph(g, &potential, alpha, cfg.n, &cfg.solver) {
                                Ok(e) => out.full.extend(threshold_errors(&e.norms(), &truth, &cfg.delta_quantiles, None, &split.train)),
                                Err(e) => {
                                    out.notes.push(format!("k={k} sigma={sigma}: {e}"));
                                    out.full.extend(std::iter::repeat(f64::NAN).take(nq));
                                }
                            }
                            if cfg.honest {
                                match embed_graph(g, &fit_potential, alpha, cfg.n, &cfg.solver) {
                                    Ok(e) => out.hold.extend(threshold_errors(&e.norms(), &truth, &cfg.delta_quantiles, Some(&split.hold), &[])),
                                    Err(_) => out.hold.extend(std::iter::repeat(f64::NAN).take(nq)),
                                }
                            }
                        }
                    }
                    Ok(out)
                })
                .collect();
            let point = |idx: usize| {
                let q = idx % nq;
                let a = (idx / nq) % alphas.len();
                let (k, sigma, _) = &graphs.items[idx / nq / alphas.len()];
                GridPoint {
                    k: *k,
                    sigma: *sigma,
                    alpha: Some(alphas[a]),
                    quantile: Some(cfg.delta_quantiles[q]),
                }
            };
            cells.push(summarize(&cfg.dataset, train, BenchMethod::Se, &outcomes, false, point));
            if cfg.honest {
                cells.push(summarize(&cfg.dataset, train, BenchMethod::SeHonest, &outcomes, true, point));
            }
        }
    }
    Ok(BenchResult { cells })
}

/// Loads `cfg.dataset` from the manifest and runs the protocol.
pub fn run_protocol(manifest: &Manifest, cfg: &BenchConfig) -> Result<BenchResult> {
    let ds = load_benchmark_dataset(manifest, &cfg.dataset, cfg.standardize)?;
    run_on_dataset(&ds, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Csv,
}

const REF_NOTE: &str = "reference columns: published values, not reproduced here";

fn pct(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{:.1}", 100.0 * v),
        _ => "-".to_string(),
    }
}

fn ref_pct(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.0}"))
}

fn describe(p: &GridPoint) -> String {
    let mut s = format!("k={} sigma={}", p.k, p.sigma);
    if let Some(a) = p.alpha {
        let _ = write!(s, " alpha={a:.4e}");
    }
    if let Some(q) = p.quantile {
        let _ = write!(s, " q={q:.3}");
    }
    s
}

/// One row per (dataset, training size), our errors beside the published
/// reference values. Error rates are in percent.
pub fn emit_table(result: &BenchResult, format: TableFormat) -> String {
    let mut rows: Vec<(String, usize)> = Vec::new();
    for c in &result.cells {
        let key = (c.dataset.clone(), c.train_size);
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let headers = [
        "dataset",
        "train",
        "LE",
        "LE sd",
        "SE",
        "SE sd",
        "LE honest",
        "SE honest",
        "ref LE",
        "ref SVM lin",
        "ref SVM gauss",
        "ref SE",
        "LE grid",
        "SE grid",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(d, t)| {
            let get = |m: BenchMethod| result.cell(d, *t, m);
            let mean = |m| get(m).map(|c| c.mean);
            let sd = |m| get(m).map(|c| c.sd);
            let rf = reference(d, *t);
            vec![
                d.clone(),
                t.to_string(),
                pct(mean(BenchMethod::Le)),
                pct(sd(BenchMethod::Le)),
                pct(mean(BenchMethod::Se)),
                pct(sd(BenchMethod::Se)),
                pct(mean(BenchMethod::LeHonest)),
                pct(mean(BenchMethod::SeHonest)),
                ref_pct(rf.and_then(|r| r.le)),
                ref_pct(rf.map(|r| r.svm_linear)),
                ref_pct(rf.map(|r| r.svm_gauss)),
                ref_pct(rf.map(|r| r.se)),
                get(BenchMethod::Le).map_or("-".into(), |c| describe(&c.best)),
                get(BenchMethod::Se).map_or("-".into(), |c| describe(&c.best)),
            ]
        })
        .collect();

    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(headers).expect("in-memory write");
            for row in &body {
                w.write_record(row).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        }
        TableFormat::Text => {
            let _ = writeln!(out, "# error rates in percent; {REF_NOTE}");
            let widths: Vec<usize> = (0..headers.len())
                .map(|j| body.iter().map(|r| r[j].len()).chain([headers[j].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| -> String {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let _ = writeln!(out, "{}", line(headers.to_vec()));
            for row in &body {
                let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}
