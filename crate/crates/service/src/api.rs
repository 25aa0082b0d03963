//! Request and response bodies. Every body is JSON except dataset uploads,
//! which may also be CSV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use seigmap::eigensolve::SolverOptions;
use seigmap::{PotentialSpec, VacModel};

/// JSON dataset upload. `labels[i]` indexes `class_names`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetUpload {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Option<Vec<Option<usize>>>,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

/// Query string for CSV uploads.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct CsvQuery {
    pub label_column: Option<usize>,
    #[serde(default)]
    pub has_header: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub m: usize,
    #[serde(rename = "N")]
    pub dim: usize,
    pub class_names: Vec<String>,
    pub labeled: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub dataset: String,
    pub k: usize,
    pub sigma: f64,
    #[serde(default)]
    pub alpha: f64,
    pub n: usize,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_final(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub submitted_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub state: JobState,
    /// SHA-256 of the canonical request.
    pub request_hash: String,
    pub request: EmbedRequest,
    /// Content hash of the finished embedding.
    pub embedding: Option<String>,
    pub error: Option<String>,
    pub timing: Timing,
}

/// Seeds fitted server-side from index groups of the job's embedding.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub groups: Vec<(String, Vec<usize>)>,
    #[serde(default)]
    pub norm_threshold: f64,
}

/// Exactly one of `model` and `fit` must be given.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub job: String,
    #[serde(default)]
    pub model: Option<VacModel>,
    #[serde(default)]
    pub fit: Option<FitSpec>,
    /// Dataset class the zero-class counts as when scoring.
    #[serde(default)]
    pub zero_as: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub labels: Vec<String>,
    pub counts: BTreeMap<String, usize>,
    pub model: VacModel,
    /// Over the dataset's labeled points, when every model class names a
    /// dataset class.
    pub error_rate: Option<f64>,
    pub scored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub jobs: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
