//! Dataset ingestion, cleaning, synthetic generators and training splits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Portable seeded generator used everywhere randomness enters a result.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `m` points in `ℝᴺ`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    n_points: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(n_points: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_points * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot form {n_points}x{dim}",
                data.len()
            )));
        }
        Ok(Self { n_points, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::ShapeMismatch(format!("row {i} has {} values, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_points: rows.len(),
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.n_points)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_points: rows.len(),
            dim: self.dim,
            data,
        }
    }

    /// Removes the listed columns.
    pub fn drop_columns(&self, cols: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.dim).filter(|j| !cols.contains(j)).collect();
        let mut data = Vec::with_capacity(self.n_points * keep.len());
        for r in self.rows() {
            data.extend(keep.iter().map(|&j| r[j]));
        }
        Self {
            n_points: self.n_points,
            dim: keep.len(),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: PointCloud,
    /// Class id per point, `None` for unlabeled points.
    pub labels: Vec<Option<usize>>,
    pub class_names: Vec<String>,
    pub source: String,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Indices of points carrying class `class`.
    pub fn members(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == Some(class)).collect()
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            points: self.points.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            source: self.source.clone(),
        }
    }

    /// Merges classes: every label in `groups[g]` becomes class `g`, named
    /// `names[g]`. Labels not listed become unlabeled.
    pub fn relabel(&self, groups: &[&[usize]], names: &[&str]) -> Result<Self> {
        if groups.len() != names.len() {
            return Err(Error::LengthMismatch {
                left: groups.len(),
                right: names.len(),
            });
        }
        let labels = self
            .labels
            .iter()
            .map(|l| l.and_then(|c| groups.iter().position(|g| g.contains(&c))))
            .collect();
        Ok(Self {
            points: self.points.clone(),
            labels,
            class_names: names.iter().map(|s| s.to_string()).collect(),
            source: self.source.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Comma when the first data line contains one, whitespace otherwise.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

/// How to read a delimited numeric table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Column holding the class label; `None` for unlabeled tables.
    pub label_column: Option<usize>,
    /// Columns ignored entirely (ids and the like), in raw file coordinates.
    #[serde(default)]
    pub drop_columns: Vec<usize>,
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default = "default_missing")]
    pub missing_markers: Vec<String>,
    #[serde(default)]
    pub has_header: bool,
    /// Raw label value to class name. When absent, class names are the
    /// sorted distinct raw labels.
    #[serde(default)]
    pub class_map: Option<BTreeMap<String, String>>,
    /// Class id order. Defaults to the sorted distinct class names.
    #[serde(default)]
    pub class_order: Option<Vec<String>>,
    /// Keep rows with missing values as NaN instead of dropping them.
    #[serde(default)]
    pub keep_missing: bool,
}

fn default_missing() -> Vec<String> {
    vec!["?".to_string(), String::new()]
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: None,
            drop_columns: Vec::new(),
            delimiter: Delimiter::Auto,
            missing_markers: default_missing(),
            has_header: false,
            class_map: None,
            class_order: None,
            keep_missing: false,
        }
    }
}

impl CsvOptions {
    pub fn labeled(label_column: usize) -> Self {
        Self {
            label_column: Some(label_column),
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<(LabeledDataset, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, opts, &path.display().to_string())
}

fn split_fields(text: &str, delimiter: Delimiter) -> Result<Vec<(usize, Vec<String>)>> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = match delimiter {
        Delimiter::Auto if first.contains(',') => Delimiter::Comma,
        Delimiter::Auto => Delimiter::Whitespace,
        d => d,
    };
    let mut rows = Vec::new();
    match delimiter {
        Delimiter::Comma => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            for (i, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| Error::Parse {
                    row: e.position().map_or(i, |p| p.line() as usize),
                    column: 0,
                    message: e.to_string(),
                })?;
                let line = rec.position().map_or(i + 1, |p| p.line() as usize);
                if rec.len() == 1 && rec[0].is_empty() {
                    continue;
                }
                rows.push((line, rec.iter().map(str::to_string).collect()));
            }
        }
        _ => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                rows.push((i + 1, line.split_whitespace().map(str::to_string).collect()));
            }
        }
    }
    Ok(rows)
}

/// Parses a delimited table held in memory. Rows with a missing marker in
/// any used column are dropped (or kept as NaN with `keep_missing`).
pub fn parse_csv(text: &str, opts: &CsvOptions, source: &str) -> Result<(LabeledDataset, LoadReport)> {
    let mut rows = split_fields(text, opts.delimiter)?;
    if opts.has_header && !rows.is_empty() {
        rows.remove(0);
    }
    let width = rows.first().map_or(0, |r| r.1.len());
    if let Some(lc) = opts.label_column {
        if width > 0 && lc >= width {
            return Err(Error::IndexOutOfRange { index: lc, len: width });
        }
    }
    let feature_cols: Vec<usize> = (0..width)
        .filter(|j| Some(*j) != opts.label_column && !opts.drop_columns.contains(j))
        .collect();
    let is_missing = |s: &str| opts.missing_markers.iter().any(|m| m == s);

    let mut report = LoadReport::default();
    let mut data = Vec::new();
    let mut raw_labels: Vec<Option<String>> = Vec::new();
    for (line, fields) in &rows {
        report.rows_read += 1;
        if fields.len() != width {
            return Err(Error::Parse {
                row: *line,
                column: fields.len().min(width),
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        let mut missing = false;
        for &j in &feature_cols {
            let f = fields[j].as_str();
            if is_missing(f) {
                missing = true;
                row.push(f64::NAN);
                continue;
            }
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row: *line,
                column: j,
                message: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: *line,
                    column: j,
                    message: format!("non-finite value {f:?}"),
                });
            }
            row.push(v);
        }
        let label = opts.label_column.map(|lc| fields[lc].clone());
        if let Some(l) = &label {
            if is_missing(l) {
                missing = true;
            }
        }
        if missing && !opts.keep_missing {
            report.rows_dropped += 1;
            continue;
        }
        data.extend(row);
        raw_labels.push(label.filter(|l| !is_missing(l)));
    }

    let (labels, class_names) = resolve_labels(&raw_labels, opts, &rows)?;
    let points = PointCloud::new(raw_labels.len(), feature_cols.len(), data)?;
    Ok((
        LabeledDataset {
            points,
            labels,
            class_names,
            source: source.to_string(),
        },
        report,
    ))
}

fn resolve_labels(
    raw: &[Option<String>],
    opts: &CsvOptions,
    rows: &[(usize, Vec<String>)],
) -> Result<(Vec<Option<usize>>, Vec<String>)> {
    let mut named: Vec<Option<String>> = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let name = match (r, &opts.class_map) {
            (None, _) => None,
            (Some(v), None) => Some(v.clone()),
            (Some(v), Some(map)) => match map.get(v) {
                Some(n) => Some(n.clone()),
                None => {
                    return Err(Error::Parse {
                        row: rows.get(i).map_or(i, |r| r.0),
                        column: opts.label_column.unwrap_or(0),
                        message: format!("label {v:?} not in class map"),
                    })
                }
            },
        };
        named.push(name);
    }
    let class_names: Vec<String> = match &opts.class_order {
        Some(order) => order.clone(),
        None => {
            let mut names: Vec<String> = match &opts.class_map {
                Some(map) => map.values().cloned().collect(),
                None => named.iter().flatten().cloned().collect(),
            };
            names.sort();
            names.dedup();
            names
        }
    };
    let labels = named
        .iter()
        .map(|n| match n {
            None => Ok(None),
            Some(n) => class_names
                .iter()
                .position(|c| c == n)
                .map(Some)
                .ok_or_else(|| Error::Format(format!("class {n:?} missing from class order"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, class_names))
}

/// Drops every row holding a non-finite feature. Returns the number removed.
pub fn drop_incomplete(ds: &LabeledDataset) -> (LabeledDataset, usize) {
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.points.row(i).iter().all(|v| v.is_finite()))
        .collect();
    let dropped = ds.len() - keep.len();
    (ds.select_rows(&keep), dropped)
}

pub const MMD_RAW_ROWS: usize = 961;
pub const MMD_RAW_ATTRIBUTES: usize = 5;

/// Cleans the raw Mammographic Mass table: removes incomplete rows and the
/// BI-RADS assessment column (attribute 0), which is itself a physician
/// rating of malignancy.
pub fn mmd_clean(raw: &LabeledDataset) -> Result<LabeledDataset> {
    if raw.len() != MMD_RAW_ROWS || raw.points.dim() != MMD_RAW_ATTRIBUTES || raw.labels.len() != raw.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected raw mammographic table {MMD_RAW_ROWS}x{MMD_RAW_ATTRIBUTES} plus label, got {}x{}",
            raw.len(),
            raw.points.dim()
        )));
    }
    let (clean, _) = drop_incomplete(raw);
    Ok(LabeledDataset {
        points: clean.points.drop_columns(&[0]),
        ..clean
    })
}

/// Scales each column to zero mean and unit sample variance (divisor
/// `m - 1`). Columns with zero variance pass through unchanged.
pub fn standardize(points: &PointCloud) -> PointCloud {
    let m = points.len();
    if m < 2 {
        return points.clone();
    }
    let dim = points.dim();
    let mut out = points.clone();
    for j in 0..dim {
        let col = points.column(j);
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        if var <= 0.0 || !var.is_finite() {
            continue;
        }
        let sd = var.sqrt();
        for i in 0..m {
            out.data[i * dim + j] = (col[i] - mean) / sd;
        }
    }
    out
}

/// Geometry of the synthetic arc strip produced by [`make_arc`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcShape {
    pub radius: f64,
    /// Angular extent of the strip.
    pub sweep: f64,
    pub height: f64,
    pub width: usize,
    pub columns: usize,
}

impl ArcShape {
    pub const SWEEP: f64 = 5.0 * PI / 3.0;
    /// Lattice step along and across the strip.
    pub const SPACING: f64 = 1.5;

    pub fn new(m: usize, width: usize) -> Self {
        let columns = m.div_ceil(width);
        let radius = Self::SPACING * (columns.max(2) - 1) as f64 / Self::SWEEP;
        Self {
            radius,
            sweep: Self::SWEEP,
            height: Self::SPACING * (width - 1) as f64,
            width,
            columns,
        }
    }

    /// Surface point of lattice index `t`: column `t / width` along the arc,
    /// row `t % width` across the strip.
    pub fn lattice_point(&self, t: usize) -> [f64; 3] {
        let col = t / self.width;
        let row = t % self.width;
        let theta = self.sweep * col as f64 / (self.columns.max(2) - 1) as f64;
        let h = self.height * row as f64 / (self.width - 1) as f64;
        [self.radius * theta.cos(), self.radius * theta.sin(), h]
    }

    /// Distance from `p` to the (unbounded) cylinder carrying the strip.
    pub fn surface_residual(&self, p: &[f64]) -> f64 {
        ((p[0] * p[0] + p[1] * p[1]).sqrt() - self.radius).abs()
    }

    pub fn arc_length(&self) -> f64 {
        self.radius * self.sweep
    }
}

/// Samples an open cylindrical band sweeping 300° as an `m`-point lattice of
/// `width` points across. Indices run column by column, so the first and
/// last `width` indices form the two end rims.
pub fn make_arc(m: usize, width: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    if width < 2 || m < width {
        return Err(Error::invalid(format!("make_arc needs m >= width >= 2 (m={m}, width={width})")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be finite and nonnegative, got {noise}")));
    }
    let shape = ArcShape::new(m, width);
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = Vec::with_capacity(3 * m);
    for t in 0..m {
        let p = shape.lattice_point(t);
        for c in p {
            let e = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            data.push(c + e);
        }
    }
    PointCloud::new(m, 3, data)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub train_indices: Vec<usize>,
    pub seed: u64,
}

/// Uniform sample of `count` distinct indices out of `m`, sorted.
pub fn sample_indices(m: usize, count: usize, seed: u64) -> Result<TrainSplit> {
    if count > m {
        return Err(Error::invalid(format!("cannot sample {count} of {m} points")));
    }
    let mut rng = seeded_rng(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m, count).into_vec();
    idx.sort_unstable();
    Ok(TrainSplit {
        train_indices: idx,
        seed,
    })
}

pub fn sample_train(dataset: &LabeledDataset, count: usize, seed: u64) -> Result<TrainSplit> {
    sample_indices(dataset.len(), count, seed)
}

/// Post-load cleaning step named in a manifest entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanStep {
    #[default]
    None,
    /// [`mmd_clean`] on the raw 961-row table.
    Mmd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(flatten)]
    pub csv: CsvOptions,
    #[serde(default)]
    pub clean: CleanStep,
    /// Feature columns (after `drop_columns` and label removal) to remove
    /// once loaded.
    #[serde(default)]
    pub drop_features: Vec<usize>,
}

/// A small TOML file naming dataset files and how to read them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.datasets.iter().find(|d| d.id.eq_ignore_ascii_case(id))
    }

    /// Loads and cleans dataset `id`.
    pub fn open(&self, id: &str) -> Result<(LabeledDataset, LoadReport)> {
        let entry = self
            .entry(id)
            .ok_or_else(|| Error::invalid(format!("dataset {id:?} not in manifest")))?;
        let mut opts = entry.csv.clone();
        if entry.clean == CleanStep::Mmd {
            opts.keep_missing = true;
        }
        let (ds, mut report) = load_csv(self.base_dir.join(&entry.path), &opts)?;
        let ds = match entry.clean {
            CleanStep::None => ds,
            CleanStep::Mmd => {
                let clean = mmd_clean(&ds)?;
                report.rows_dropped = ds.len() - clean.len();
                clean
            }
        };
        let ds = if entry.drop_features.is_empty() {
            ds
        } else {
            LabeledDataset {
                points: ds.points.drop_columns(&entry.drop_features),
                ..ds
            }
        };
        Ok((ds, report))
    }
}
