use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use seigmap::classify::{classify_rows, error_rate, fit_seeds, label_counts, Label, ScoreMap};
use seigmap::data::{parse_csv, CsvOptions};
use seigmap::embedding::{EmbedParams, Embedding, EmbeddingFile};
use seigmap::{LabeledDataset, PointCloud};
use sha2::{Digest, Sha256};

use crate::api::{ClassifyRequest, ClassifyResponse, CsvQuery, DatasetInfo, DatasetUpload, EmbedRequest, ErrorBody, Health, JobState};
use crate::store::Kind;
use crate::AppState;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r.status() {
            StatusCode::PAYLOAD_TOO_LARGE => ApiError::TooLarge(r.body_text()),
            // well-formed JSON of the wrong shape is still a parse failure here
            _ => ApiError::BadRequest(r.body_text()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let counts = state.job_counts();
    let jobs = [JobState::Queued, JobState::Running, JobState::Done, JobState::Failed]
        .into_iter()
        .map(|s| {
            let name = serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            (name, counts.get(&s).copied().unwrap_or(0))
        })
        .collect();
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        jobs,
    })
}

/// SHA-256 over the canonical JSON of points, labels and class names.
fn dataset_id(ds: &LabeledDataset) -> String {
    let canonical = serde_json::to_vec(&(&ds.points, &ds.labels, &ds.class_names)).expect("dataset serializes");
    hex::encode(Sha256::digest(canonical))
}

fn info(id: &str, ds: &LabeledDataset) -> DatasetInfo {
    let mut class_counts = vec![0; ds.class_names.len()];
    ds.labels.iter().flatten().for_each(|&c| class_counts[c] += 1);
    DatasetInfo {
        id: id.to_string(),
        m: ds.len(),
        dim: ds.points.dim(),
        class_names: ds.class_names.clone(),
        labeled: ds.labels.iter().flatten().count(),
        class_counts,
    }
}

fn from_json_upload(body: &[u8]) -> ApiResult<LabeledDataset> {
    let up: DatasetUpload = serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("dataset JSON: {e}")))?;
    let m = up.points.len();
    let points = PointCloud::from_rows(&up.points).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let labels = up.labels.unwrap_or_else(|| vec![None; m]);
    if labels.len() != m {
        return Err(ApiError::BadRequest(format!("{} labels for {m} points", labels.len())));
    }
    let n_classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let class_names = up
        .class_names
        .unwrap_or_else(|| (0..n_classes).map(|c| c.to_string()).collect());
    if n_classes > class_names.len() {
        return Err(ApiError::BadRequest(format!(
            "label {} has no class name ({} given)",
            n_classes - 1,
            class_names.len()
        )));
    }
    Ok(LabeledDataset {
        points,
        labels,
        class_names,
        source: "upload".into(),
    })
}

fn from_csv_upload(body: &[u8], q: &CsvQuery) -> ApiResult<LabeledDataset> {
    let text = std::str::from_utf8(body).map_err(|e| ApiError::BadRequest(format!("CSV is not UTF-8: {e}")))?;
    let opts = CsvOptions {
        label_column: q.label_column,
        has_header: q.has_header,
        ..CsvOptions::default()
    };
    let (mut ds, _) = parse_csv(text, &opts, "upload").map_err(|e| ApiError::BadRequest(e.to_string()))?;
    ds.source = "upload".into();
    Ok(ds)
}

pub async fn post_dataset(
    State(state): State<Arc<AppState>>,
    Query(q): Query<CsvQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let ds = if is_json {
        from_json_upload(&body)?
    } else {
        from_csv_upload(&body, &q)?
    };
    if ds.is_empty() {
        return Err(ApiError::BadRequest("dataset has no rows".into()));
    }
    if ds.points.dim() == 0 {
        return Err(ApiError::BadRequest("dataset has no feature columns".into()));
    }
    if !ds.points.as_slice().iter().all(|v| v.is_finite()) {
        return Err(ApiError::BadRequest("dataset contains non-finite values".into()));
    }
    if ds.len() > state.config.point_cap {
        return Err(ApiError::TooLarge(format!("{} points exceed the cap of {}", ds.len(), state.config.point_cap)));
    }
    let id = dataset_id(&ds);
    let existed = state.store.contains(Kind::Dataset, &id);
    let ds = state.insert_dataset(&id, ds)?;
    let status = if existed { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(info(&id, &ds))))
}

pub async fn get_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<DatasetInfo>> {
    let ds = state
        .dataset(&id)?
        .ok_or_else(|| ApiError::NotFound(format!("unknown dataset {id}")))?;
    Ok(Json(info(&id, &ds)))
}

pub async fn post_embed(
    State(state): State<Arc<AppState>>,
    req: Result<Json<EmbedRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<crate::api::JobRecord>)> {
    let Json(req) = req?;
    let ds = state
        .dataset(&req.dataset)?
        .ok_or_else(|| ApiError::NotFound(format!("unknown dataset {}", req.dataset)))?;
    let params = EmbedParams {
        k: req.k,
        sigma: req.sigma,
        alpha: req.alpha,
        n: req.n,
        potential: req.potential.to_potential(),
        solver: req.solver,
    };
    params
        .validate(ds.len())
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    if !(req.solver.tol > 0.0) {
        return Err(ApiError::Unprocessable(format!("solver tolerance must be positive, got {}", req.solver.tol)));
    }
    let job = state.submit(req, ds);
    let status = if job.state == JobState::Done {
        StatusCode::OK
    } else {
        StatusCode::ACCEPTED
    };
    Ok((status, Json(job)))
}

pub async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<crate::api::JobRecord>> {
    state
        .job(&id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
}

pub async fn get_embedding(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = state
        .store
        .get_raw(Kind::Embedding, &id)?
        .ok_or_else(|| ApiError::NotFound(format!("unknown embedding {id}")))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

pub async fn post_classify(
    State(state): State<Arc<AppState>>,
    req: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<Json<ClassifyResponse>> {
    let Json(req) = req?;
    let job = state
        .job(&req.job)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {}", req.job)))?;
    let hash = match (job.state, &job.embedding) {
        (JobState::Done, Some(h)) => h.clone(),
        (s, _) => return Err(ApiError::Conflict(format!("job {} is {s:?}, not done", job.id).to_lowercase())),
    };
    let file: EmbeddingFile = state
        .store
        .get(Kind::Embedding, &hash)?
        .ok_or_else(|| ApiError::Internal(format!("embedding {hash} missing from the store")))?;
    let e = Embedding::from_wire(file).map_err(|err| ApiError::Internal(err.to_string()))?;
    let unprocessable = |err: seigmap::Error| ApiError::Unprocessable(err.to_string());
    let model = match (req.model, req.fit) {
        (Some(model), None) => {
            model.validate().map_err(unprocessable)?;
            model
        }
        (None, Some(fit)) => {
            let mut model = fit_seeds(&e, &fit.groups).map_err(unprocessable)?;
            model.norm_threshold = fit.norm_threshold;
            model.validate().map_err(unprocessable)?;
            model
        }
        _ => return Err(ApiError::Unprocessable("give exactly one of `model` and `fit`".into())),
    };
    let labels = classify_rows(&e.coords, &model).map_err(unprocessable)?;
    let (zero, per, open) = label_counts(&labels, model.n_classes());
    let mut counts = BTreeMap::new();
    counts.insert(model.label_name(Label::Zero).to_string(), zero);
    counts.insert(model.label_name(Label::Unclassified).to_string(), open);
    for (c, n) in per.into_iter().enumerate() {
        counts.insert(model.class_names[c].clone(), n);
    }

    let ds = state
        .dataset(&job.request.dataset)?
        .ok_or_else(|| ApiError::Internal(format!("dataset {} missing from the store", job.request.dataset)))?;
    let class_of = |name: &str| ds.class_names.iter().position(|n| n == name);
    let mapping: Option<Vec<usize>> = model.class_names.iter().map(|n| class_of(n)).collect();
    let zero_class = match &req.zero_as {
        Some(name) => Some(class_of(name).ok_or_else(|| ApiError::Unprocessable(format!("zero_as names unknown class {name:?}")))?),
        None => None,
    };
    let labeled: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i].is_some()).collect();
    let error_rate = match mapping {
        Some(map) if !labeled.is_empty() => {
            let predicted: Vec<Label> = labeled
                .iter()
                .map(|&i| match labels[i] {
                    Label::Class(c) => Label::Class(map[c]),
                    other => other,
                })
                .collect();
            let truth: Vec<usize> = labeled.iter().map(|&i| ds.labels[i].expect("filtered")).collect();
            let score = ScoreMap {
                zero_class,
                unclassified: None,
            };
            Some(error_rate(&predicted, &truth, &score).map_err(unprocessable)?)
        }
        _ => None,
    };
    Ok(Json(ClassifyResponse {
        labels: labels.iter().map(|&l| model.label_name(l).to_string()).collect(),
        counts,
        model,
        error_rate,
        scored: if error_rate.is_some() { labeled.len() } else { 0 },
    }))
}
