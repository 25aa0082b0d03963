//! Vector angle classification with a norm threshold.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub const ZERO_CLASS: &str = "zero-class";

/// Output of [`vac_classify`] for one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// Norm below the threshold.
    Zero,
    Class(usize),
    /// No seed within its tightness bound.
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VacModel {
    pub seeds: Vec<Vec<f64>>,
    /// Per-class angle bound in radians, in `(0, π]`.
    pub tightness: Vec<f64>,
    pub norm_threshold: f64,
    pub class_names: Vec<String>,
}

impl VacModel {
    pub fn new(seeds: Vec<Vec<f64>>, class_names: Vec<String>, norm_threshold: f64) -> Result<Self> {
        let tightness = vec![PI; seeds.len()];
        let model = Self {
            seeds,
            tightness,
            norm_threshold,
            class_names,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.seeds.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.seeds.len();
        if s == 0 {
            return Err(Error::invalid("model needs at least one seed"));
        }
        if self.tightness.len() != s || self.class_names.len() != s {
            return Err(Error::invalid(format!(
                "{s} seeds but {} tightness values and {} class names",
                self.tightness.len(),
                self.class_names.len()
            )));
        }
        if self.class_names.iter().any(|n| n == ZERO_CLASS) {
            return Err(Error::invalid(format!("class name {ZERO_CLASS:?} is reserved")));
        }
        let dim = self.dim();
        for (c, a) in self.seeds.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                });
            }
            if !a.iter().all(|x| x.is_finite()) || norm(a) == 0.0 {
                return Err(Error::DegenerateSeed {
                    class: self.class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                });
            }
        }
        for i in 0..s {
            for j in i + 1..s {
                if angle(&self.seeds[i], &self.seeds[j]) < 1e-12 {
                    return Err(Error::invalid(format!("seeds {i} and {j} are parallel")));
                }
            }
        }
        if let Some(t) = self.tightness.iter().find(|t| !(**t > 0.0 && **t <= PI)) {
            return Err(Error::invalid(format!("tightness {t} outside (0, π]")));
        }
        if !(self.norm_threshold >= 0.0 && self.norm_threshold.is_finite()) {
            return Err(Error::invalid(format!("norm threshold {} must be finite and >= 0", self.norm_threshold)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// Name for a label; the zero-class and unclassified get reserved names.
    pub fn label_name(&self, label: Label) -> &str {
        match label {
            Label::Zero => ZERO_CLASS,
            Label::Class(c) => &self.class_names[c],
            Label::Unclassified => "unclassified",
        }
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle in `[0, π]` via the clipped normalized inner product.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

/// Seed per class as the mean of its members' coordinates, in the order of
/// `groups`. Tightness defaults to `π` and the threshold to zero.
pub fn fit_seeds(e: &Embedding, groups: &[(String, Vec<usize>)]) -> Result<VacModel> {
    fit_seeds_rows(&e.coords, groups)
}

pub fn fit_seeds_rows(coords: &DMatrix<f64>, groups: &[(String, Vec<usize>)]) -> Result<VacModel> {
    let (m, n) = coords.shape();
    let mut seeds = Vec::with_capacity(groups.len());
    for (c, (name, members)) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::invalid(format!("group {c} is empty")));
        }
        let mut mean = vec![0.0; n];
        let mut scale: f64 = 0.0;
        for &i in members {
            if i >= m {
                return Err(Error::IndexOutOfRange { index: i, len: m });
            }
            let row = coords.row(i);
            scale = scale.max(row.norm());
            mean.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|a| *a /= members.len() as f64);
        if norm(&mean) <= 1e-12 * scale || norm(&mean) == 0.0 {
            return Err(Error::DegenerateSeed { class: name.clone() });
        }
        seeds.push(mean);
    }
    VacModel::new(seeds, groups.iter().map(|(n, _)| n.clone()).collect(), 0.0)
}

/// Labels one vector: zero-class below the norm threshold, else the seed of
/// smallest angle among those within their tightness bound (lowest index on
/// ties), else unclassified.
pub fn classify_point(y: &[f64], model: &VacModel) -> Label {
    let r = norm(y);
    if r < model.norm_threshold || r == 0.0 {
        return Label::Zero;
    }
    let mut best: Option<(f64, usize)> = None;
    for (j, a) in model.seeds.iter().enumerate() {
        let t = angle(y, a);
        if t <= model.tightness[j] && best.map_or(true, |(b, _)| t < b) {
            best = Some((t, j));
        }
    }
    best.map_or(Label::Unclassified, |(_, j)| Label::Class(j))
}

pub fn vac_classify(e: &Embedding, model: &VacModel) -> Result<Vec<Label>> {
    classify_rows(&e.coords, model)
}

pub fn classify_rows(coords: &DMatrix<f64>, model: &VacModel) -> Result<Vec<Label>> {
    if coords.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: coords.ncols(),
        });
    }
    Ok((0..coords.nrows())
        .map(|i| {
            let y: Vec<f64> = coords.row(i).iter().copied().collect();
            classify_point(&y, model)
        })
        .collect())
}

/// How non-class labels count when scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreMap {
    /// Class the zero-class stands for; `None` counts it as an error.
    pub zero_class: Option<usize>,
    /// Class unclassified points stand for; `None` counts them as errors.
    pub unclassified: Option<usize>,
}

impl ScoreMap {
    pub fn zero_as(class: usize) -> Self {
        Self {
            zero_class: Some(class),
            unclassified: None,
        }
    }

    pub fn resolve(&self, label: Label) -> Option<usize> {
        match label {
            Label::Class(c) => Some(c),
            Label::Zero => self.zero_class,
            Label::Unclassified => self.unclassified,
        }
    }
}

/// Fraction of points whose resolved label differs from the truth.
pub fn error_rate(predicted: &[Label], truth: &[usize], map: &ScoreMap) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = predicted
        .iter()
        .zip(truth)
        .filter(|&(&p, &t)| map.resolve(p) != Some(t))
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Counts per label, in the order zero-class, classes, unclassified.
pub fn label_counts(labels: &[Label], n_classes: usize) -> (usize, Vec<usize>, usize) {
    let mut zero = 0;
    let mut per = vec![0; n_classes];
    let mut open = 0;
    for l in labels {
        match *l {
            Label::Zero => zero += 1,
            Label::Class(c) if c < n_classes => per[c] += 1,
            _ => open += 1,
        }
    }
    (zero, per, open)
}
