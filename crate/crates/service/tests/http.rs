use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use seigmap::data::make_arc;
use seigmap::embedding::{embed, EmbedParams, Embedding};
use seigmap::PotentialSpec;
use seigmap_service::api::{ClassifyResponse, DatasetInfo, JobRecord, JobState};
use seigmap_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    dir: TempDir,
    app: Router,
}

fn config(dir: &TempDir, workers: usize) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.path().to_path_buf(),
        workers,
        point_cap: 1000,
        ..ServiceConfig::default()
    }
}

impl Harness {
    fn new(workers: usize) -> Self {
        let dir = TempDir::new().unwrap();
        let app = router(AppState::open(config(&dir, workers)).unwrap());
        Self { dir, app }
    }

    fn reopen(self, workers: usize) -> Self {
        let app = router(AppState::open(config(&self.dir, workers)).unwrap());
        Self { dir: self.dir, app }
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn post_json(&self, path: &str, body: &Value) -> (StatusCode, Value) {
        let req = Request::post(path)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, b) = self.send(req).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    async fn post_csv(&self, path: &str, body: &str) -> (StatusCode, Value) {
        let req = Request::post(path)
            .header(header::CONTENT_TYPE, "text/csv")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, b) = self.send(req).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    async fn get(&self, path: &str) -> (StatusCode, Vec<u8>) {
        self.send(Request::get(path).body(Body::empty()).unwrap()).await
    }

    async fn get_json(&self, path: &str) -> (StatusCode, Value) {
        let (s, b) = self.get(path).await;
        (s, serde_json::from_slice(&b).unwrap())
    }

    async fn upload(&self, body: &Value) -> DatasetInfo {
        let (s, v) = self.post_json("/datasets", body).await;
        assert!(s.is_success(), "{s}: {v}");
        serde_json::from_value(v).unwrap()
    }

    async fn wait(&self, id: &str) -> JobRecord {
        for _ in 0..6000 {
            let (s, v) = self.get_json(&format!("/jobs/{id}")).await;
            assert_eq!(s, StatusCode::OK);
            let job: JobRecord = serde_json::from_value(v).unwrap();
            if job.state.is_final() {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {id} did not finish");
    }

    async fn embed_done(&self, body: &Value) -> JobRecord {
        let (s, v) = self.post_json("/embed", body).await;
        assert!(s == StatusCode::ACCEPTED || s == StatusCode::OK, "{s}: {v}");
        let job: JobRecord = serde_json::from_value(v).unwrap();
        let job = self.wait(&job.id).await;
        assert_eq!(job.state, JobState::Done, "{:?}", job.error);
        job
    }

    async fn embedding(&self, job: &JobRecord) -> Embedding {
        let (s, b) = self.get(&format!("/embeddings/{}", job.embedding.as_ref().unwrap())).await;
        assert_eq!(s, StatusCode::OK);
        Embedding::from_json(std::str::from_utf8(&b).unwrap()).unwrap()
    }
}

const RIM: usize = 10;

fn arc_rows() -> Vec<Vec<f64>> {
    make_arc(400, RIM, 0.01, 11).unwrap().rows().map(<[f64]>::to_vec).collect()
}

/// Arc with its two end rims labeled "head" and "tail".
fn arc_payload() -> Value {
    let labels: Vec<Option<usize>> = (0..400)
        .map(|i| match i {
            i if i < RIM => Some(0),
            i if i >= 400 - RIM => Some(1),
            _ => None,
        })
        .collect();
    json!({"points": arc_rows(), "labels": labels, "class_names": ["head", "tail"]})
}

fn embed_body(dataset: &str, alpha: f64, potential: Value) -> Value {
    json!({"dataset": dataset, "k": 10, "sigma": 1.0, "alpha": alpha, "n": 2, "potential": potential})
}

#[tokio::test]
async fn health_reports_ok() {
    let h = Harness::new(1);
    let (s, v) = h.get_json("/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["jobs"]["done"], 0);
}

#[tokio::test]
async fn same_bytes_give_same_id() {
    let h = Harness::new(1);
    let (s1, a) = h.post_json("/datasets", &arc_payload()).await;
    let (s2, b) = h.post_json("/datasets", &arc_payload()).await;
    assert_eq!(s1, StatusCode::CREATED);
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(a["id"], b["id"]);

    let csv = "1,2,a\n3,4,b\n5,6,a\n";
    let (_, c1) = h.post_csv("/datasets?label_column=2", csv).await;
    let (_, c2) = h.post_csv("/datasets?label_column=2", csv).await;
    assert_eq!(c1["id"], c2["id"]);
    assert_ne!(c1["id"], a["id"]);
}

#[tokio::test]
async fn csv_and_json_of_same_data_share_an_id() {
    let h = Harness::new(1);
    let (_, c) = h.post_csv("/datasets", "1,2\n3,4\n").await;
    let (_, j) = h.post_json("/datasets", &json!({"points": [[1.0, 2.0], [3.0, 4.0]]})).await;
    assert_eq!(c["id"], j["id"]);
}

#[tokio::test]
async fn empty_and_malformed_uploads_are_400() {
    let h = Harness::new(1);
    for (status, body) in [
        h.post_json("/datasets", &json!({"points": []})).await,
        h.post_csv("/datasets", "").await,
        h.post_csv("/datasets?has_header=true", "x,y\n").await,
        h.post_json("/datasets", &json!({"points": [[1.0, 2.0], [3.0]]})).await,
        h.post_json("/datasets", &json!({"points": [[1.0]], "labels": [null, null]})).await,
        h.post_json("/datasets", &json!({"points": [[1.0]], "labels": [3], "class_names": ["a"]})).await,
        h.post_csv("/datasets", "1,2\nfoo,4\n").await,
    ] {
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(body["error"].is_string());
    }
    let req = Request::post("/datasets")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(h.send(req).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn over_cap_is_413() {
    let h = Harness::new(1);
    let rows: Vec<[f64; 1]> = (0..1001).map(|i| [i as f64]).collect();
    let (s, v) = h.post_json("/datasets", &json!({"points": rows})).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE, "{v}");
    let rows: Vec<[f64; 1]> = (0..1000).map(|i| [i as f64]).collect();
    assert_eq!(h.post_json("/datasets", &json!({"points": rows})).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn arc_metadata_round_trips() {
    let h = Harness::new(1);
    let info = h.upload(&arc_payload()).await;
    let (s, v) = h.get_json(&format!("/datasets/{}", info.id)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["m"], 400);
    assert_eq!(v["N"], 3);
    assert_eq!(v["labeled"], 2 * RIM);
    assert_eq!(v["class_counts"], json!([RIM, RIM]));
    assert_eq!(h.get("/datasets/0123abcd").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn embed_rejects_unknown_dataset_and_bad_params() {
    let h = Harness::new(1);
    let (s, _) = h.post_json("/embed", &embed_body("feed", 0.0, json!([]))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = h.upload(&arc_payload()).await.id;
    let bad = [
        embed_body(&id, 1.0, json!([{"type": "diag", "indices": [400]}])),
        embed_body(&id, 1.0, json!([{"type": "pair", "indices": [0, 999]}])),
        embed_body(&id, -1.0, json!([])),
        json!({"dataset": id, "k": 400, "sigma": 1.0, "n": 2}),
        json!({"dataset": id, "k": 10, "sigma": 0.0, "n": 2}),
        json!({"dataset": id, "k": 10, "sigma": 1.0, "n": 0}),
    ];
    for body in bad {
        let (s, v) = h.post_json("/embed", &body).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
    }
    let (s, _) = h.post_json("/embed", &json!({"dataset": id, "k": "ten"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn alpha_zero_matches_laplacian_eigenmaps() {
    let h = Harness::new(2);
    let id = h.upload(&arc_payload()).await.id;
    let le = h.embed_done(&embed_body(&id, 0.0, json!([]))).await;
    let se = h
        .embed_done(&embed_body(&id, 0.0, json!([{"type": "pair", "indices": [0, 399]}])))
        .await;
    assert_ne!(le.id, se.id);
    assert_eq!(le.embedding, se.embedding);
}

#[tokio::test]
async fn resubmission_is_a_cache_hit() {
    let h = Harness::new(1);
    let id = h.upload(&arc_payload()).await.id;
    let body = embed_body(&id, 1.0, json!([{"type": "diag", "indices": [205]}]));
    let first = h.embed_done(&body).await;
    let (s, v) = h.post_json("/embed", &body).await;
    assert_eq!(s, StatusCode::OK);
    let again: JobRecord = serde_json::from_value(v).unwrap();
    assert_eq!(again.state, JobState::Done);
    assert_eq!(again, first);
}

#[tokio::test]
async fn embedding_wire_form_matches_direct_run() {
    let h = Harness::new(1);
    let id = h.upload(&arc_payload()).await.id;
    let job = h.embed_done(&embed_body(&id, 0.1, json!([{"type": "pair", "indices": [0, 399]}]))).await;
    let (_, raw) = h.get(&format!("/embeddings/{}", job.embedding.as_ref().unwrap())).await;
    let v: Value = serde_json::from_slice(&raw).unwrap();
    assert_eq!(v["shape"], json!([400, 2]));
    assert_eq!(v["coords"].as_array().unwrap().len(), 800);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 2);

    let e = h.embedding(&job).await;
    assert_eq!(Some(e.content_hash()), job.embedding);
    assert_eq!(h.get("/embeddings/ffff").await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.get("/jobs/ffff-1").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn alpha_sweep_reproduces_direct_arc_embeddings() {
    let h = Harness::new(2);
    let id = h.upload(&arc_payload()).await.id;
    let points = make_arc(400, RIM, 0.01, 11).unwrap();
    let potential = json!([{"type": "pair", "indices": [0, 399]}]);
    let spec: PotentialSpec = serde_json::from_value(potential.clone()).unwrap();
    let mut last = f64::INFINITY;
    for alpha in [0.01, 0.05, 0.1, 1.0] {
        let job = h.embed_done(&embed_body(&id, alpha, potential.clone())).await;
        let direct = embed(&points, &EmbedParams::new(10, 1.0, 2).with_potential(spec.to_potential(), alpha)).unwrap();
        assert_eq!(job.embedding, Some(direct.content_hash()), "alpha {alpha}");
        let e = h.embedding(&job).await;
        let gap = (e.coords.row(0) - e.coords.row(399)).norm();
        assert!(gap < last, "alpha {alpha}: {gap} >= {last}");
        last = gap;
    }
}

#[tokio::test]
async fn failed_job_surfaces_pipeline_error() {
    let h = Harness::new(1);
    // two far-apart clusters: the kNN graph is disconnected
    let mut rows: Vec<[f64; 1]> = (0..5).map(|i| [i as f64]).collect();
    rows.extend((0..5).map(|i| [1e6 + i as f64]));
    let id = h.upload(&json!({"points": rows})).await.id;
    let (_, v) = h
        .post_json("/embed", &json!({"dataset": id, "k": 2, "sigma": 1.0, "n": 1}))
        .await;
    let job: JobRecord = serde_json::from_value(v).unwrap();
    let job = h.wait(&job.id).await;
    assert_eq!(job.state, JobState::Failed);
    assert!(job.error.as_deref().is_some_and(|e| !e.is_empty()));
    assert!(job.embedding.is_none());
    let (s, _) = h.post_json("/classify", &json!({"job": job.id, "fit": {"groups": [["a", [0]]]}})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn classify_before_done_is_409() {
    let h = Harness::new(0);
    let id = h.upload(&arc_payload()).await.id;
    let (s, v) = h.post_json("/embed", &embed_body(&id, 0.0, json!([]))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["state"], "queued");
    let (s, v) = h
        .post_json("/classify", &json!({"job": v["id"], "fit": {"groups": [["head", [0]]]}}))
        .await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, _) = h.post_json("/classify", &json!({"job": "abc-1", "fit": {"groups": []}})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

async fn arc_job(h: &Harness) -> JobRecord {
    let id = h.upload(&arc_payload()).await.id;
    h.embed_done(&embed_body(&id, 0.0, json!([]))).await
}

fn rims() -> Value {
    let head: Vec<usize> = (0..RIM).collect();
    let tail: Vec<usize> = (400 - RIM..400).collect();
    json!([["head", head], ["tail", tail]])
}

#[tokio::test]
async fn classify_rejects_bad_models() {
    let h = Harness::new(1);
    let job = arc_job(&h).await.id;
    let pi = std::f64::consts::PI;
    let bad = [
        json!({"job": job}),
        json!({"job": job, "fit": {"groups": rims()}, "model": {"seeds": [[1.0, 0.0]], "tightness": [1.0], "norm_threshold": 0.0, "class_names": ["a"]}}),
        json!({"job": job, "model": {"seeds": [[1.0, 0.0, 0.0]], "tightness": [pi], "norm_threshold": 0.0, "class_names": ["a"]}}),
        json!({"job": job, "model": {"seeds": [[0.0, 0.0]], "tightness": [pi], "norm_threshold": 0.0, "class_names": ["a"]}}),
        json!({"job": job, "model": {"seeds": [[1.0, 0.0]], "tightness": [4.0], "norm_threshold": 0.0, "class_names": ["a"]}}),
        json!({"job": job, "model": {"seeds": [[1.0, 0.0]], "tightness": [pi], "norm_threshold": -1.0, "class_names": ["a"]}}),
        json!({"job": job, "model": {"seeds": [[1.0, 0.0], [2.0, 0.0]], "tightness": [pi, pi], "norm_threshold": 0.0, "class_names": ["a", "b"]}}),
        json!({"job": job, "fit": {"groups": [["a", [400]]]}}),
        json!({"job": job, "fit": {"groups": rims()}, "zero_as": "nope"}),
    ];
    for body in bad {
        let (s, v) = h.post_json("/classify", &body).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
    }
}

#[tokio::test]
async fn classify_identity_and_flip() {
    let h = Harness::new(1);
    let job = arc_job(&h).await.id;
    let (s, v) = h.post_json("/classify", &json!({"job": job, "fit": {"groups": rims()}})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let fitted: ClassifyResponse = serde_json::from_value(v).unwrap();
    assert_eq!(fitted.labels.len(), 400);
    assert_eq!(fitted.scored, 2 * RIM);
    assert_eq!(fitted.error_rate, Some(0.0));
    assert!(fitted.labels[..RIM].iter().all(|l| l == "head"));
    assert!(fitted.labels[400 - RIM..].iter().all(|l| l == "tail"));
    assert_eq!(fitted.counts.values().sum::<usize>(), 400);

    let mut flipped = fitted.model.clone();
    flipped.class_names.reverse();
    let (s, v) = h.post_json("/classify", &json!({"job": job, "model": flipped})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: ClassifyResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.error_rate, Some(1.0));

    // class names the dataset does not know leave the rate undefined
    let mut renamed = fitted.model.clone();
    renamed.class_names = vec!["x".into(), "y".into()];
    let (_, v) = h.post_json("/classify", &json!({"job": job, "model": renamed})).await;
    let r: ClassifyResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.error_rate, None);
    assert_eq!(r.scored, 0);
}

#[tokio::test]
async fn zero_class_grows_with_threshold() {
    let h = Harness::new(1);
    let job = arc_job(&h).await.id;
    let mut last = 0;
    for delta in [0.0, 0.01, 0.03, 0.05, 0.08, 0.12, 1.0] {
        let body = json!({"job": job, "fit": {"groups": rims(), "norm_threshold": delta}, "zero_as": "head"});
        let (s, v) = h.post_json("/classify", &body).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let r: ClassifyResponse = serde_json::from_value(v).unwrap();
        let zero = r.counts["zero-class"];
        assert!(zero >= last, "delta {delta}: {zero} < {last}");
        last = zero;
    }
    assert_eq!(last, 400);
}

#[tokio::test]
async fn state_survives_restart() {
    let h = Harness::new(1);
    let id = h.upload(&arc_payload()).await.id;
    let body = embed_body(&id, 0.05, json!([{"type": "chain", "indices": [0, 200, 399]}]));
    let done = h.embed_done(&body).await;
    let before = h.embedding(&done).await;

    let h = h.reopen(1);
    let (s, v) = h.get_json(&format!("/datasets/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["m"], 400);
    let (s, v) = h.post_json("/embed", &body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_value::<JobRecord>(v).unwrap(), done);
    assert_eq!(h.embedding(&done).await, before);
}

#[tokio::test]
async fn interrupted_jobs_fail_and_can_be_retried() {
    let h = Harness::new(0);
    let id = h.upload(&arc_payload()).await.id;
    let body = embed_body(&id, 0.0, json!([]));
    let (_, v) = h.post_json("/embed", &body).await;
    let queued: JobRecord = serde_json::from_value(v).unwrap();
    assert_eq!(queued.state, JobState::Queued);

    let h = h.reopen(1);
    let (_, v) = h.get_json(&format!("/jobs/{}", queued.id)).await;
    let stale: JobRecord = serde_json::from_value(v).unwrap();
    assert_eq!(stale.state, JobState::Failed);
    assert!(stale.error.unwrap().contains("interrupted"));

    let retry = h.embed_done(&body).await;
    assert_ne!(retry.id, queued.id);
    assert_eq!(retry.request_hash, queued.request_hash);
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let dir = TempDir::new().unwrap();
    let cfg = ServiceConfig {
        cors_origin: Some("http://localhost:5173".into()),
        ..config(&dir, 1)
    };
    let app = router(AppState::open(cfg).unwrap());
    let req = Request::get("/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://localhost:5173"
    );
}

#[test]
fn config_reads_environment() {
    // the only test in this binary touching these variables
    std::env::set_var("SEIGMAP_PORT", "9123");
    std::env::set_var("SEIGMAP_WORKERS", "3");
    let c = ServiceConfig::from_env().unwrap();
    assert_eq!((c.port, c.workers), (9123, 3));
    std::env::set_var("SEIGMAP_PORT", "nope");
    assert!(ServiceConfig::from_env().is_err());
    std::env::remove_var("SEIGMAP_PORT");
    std::env::remove_var("SEIGMAP_WORKERS");
}
