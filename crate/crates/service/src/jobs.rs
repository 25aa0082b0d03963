//! Shared state and the embedding job queue.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use seigmap::embedding::{embed, EmbedParams};
use seigmap::LabeledDataset;
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::api::{EmbedRequest, JobRecord, JobState, Timing};
use crate::store::{Kind, Store};
use crate::ServiceConfig;

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    jobs: Mutex<HashMap<String, JobRecord>>,
    /// Request hash to its most recent job id.
    latest: Mutex<HashMap<String, String>>,
    datasets: RwLock<HashMap<String, Arc<LabeledDataset>>>,
    permits: Arc<Semaphore>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub(crate) fn request_hash(req: &EmbedRequest) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(req).expect("request serializes")))
}

fn attempt_of(id: &str) -> u64 {
    id.rsplit_once('-').and_then(|(_, n)| n.parse().ok()).unwrap_or(0)
}

impl AppState {
    /// Opens the store and reloads job records. Jobs that were queued or
    /// running when the previous process stopped are marked failed.
    pub fn open(config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let store = Store::open(&config.data_dir)?;
        let mut jobs = HashMap::new();
        let mut latest: HashMap<String, String> = HashMap::new();
        for mut job in store.list::<JobRecord>(Kind::Job)? {
            if !job.state.is_final() {
                job.state = JobState::Failed;
                job.error = Some("interrupted before completion".into());
                job.timing.finished_ms = Some(now_ms());
                store.put(Kind::Job, &job.id, &job)?;
            }
            let newer = latest
                .get(&job.request_hash)
                .is_none_or(|cur| attempt_of(cur) < attempt_of(&job.id));
            if newer {
                latest.insert(job.request_hash.clone(), job.id.clone());
            }
            jobs.insert(job.id.clone(), job);
        }
        let permits = Arc::new(Semaphore::new(config.workers));
        Ok(Arc::new(Self {
            config,
            store,
            jobs: Mutex::new(jobs),
            latest: Mutex::new(latest),
            datasets: RwLock::new(HashMap::new()),
            permits,
        }))
    }

    pub fn dataset(&self, id: &str) -> std::io::Result<Option<Arc<LabeledDataset>>> {
        if let Some(ds) = self.datasets.read().unwrap().get(id) {
            return Ok(Some(ds.clone()));
        }
        let Some(ds) = self.store.get::<LabeledDataset>(Kind::Dataset, id)? else {
            return Ok(None);
        };
        let ds = Arc::new(ds);
        self.datasets.write().unwrap().insert(id.to_string(), ds.clone());
        Ok(Some(ds))
    }

    pub fn insert_dataset(&self, id: &str, ds: LabeledDataset) -> std::io::Result<Arc<LabeledDataset>> {
        self.store.put_once(Kind::Dataset, id, &ds)?;
        let ds = Arc::new(ds);
        self.datasets.write().unwrap().insert(id.to_string(), ds.clone());
        Ok(ds)
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn job_counts(&self) -> HashMap<JobState, usize> {
        let mut out = HashMap::new();
        for j in self.jobs.lock().unwrap().values() {
            *out.entry(j.state).or_insert(0) += 1;
        }
        out
    }

    fn save(&self, job: &JobRecord) {
        if let Err(e) = self.store.put(Kind::Job, &job.id, job) {
            tracing::error!("persisting job {}: {e}", job.id);
        }
        self.jobs.lock().unwrap().insert(job.id.clone(), job.clone());
    }

    /// Returns the live job for an identical request, or queues a new one.
    /// Failed jobs do not block a retry.
    pub fn submit(self: &Arc<Self>, req: EmbedRequest, dataset: Arc<LabeledDataset>) -> JobRecord {
        let hash = request_hash(&req);
        let mut latest = self.latest.lock().unwrap();
        let previous = latest.get(&hash).and_then(|id| self.job(id));
        if let Some(job) = &previous {
            if job.state != JobState::Failed {
                return job.clone();
            }
        }
        let attempt = previous.as_ref().map_or(1, |j| attempt_of(&j.id) + 1);
        let job = JobRecord {
            id: format!("{}-{attempt}", &hash[..16]),
            state: JobState::Queued,
            request_hash: hash.clone(),
            request: req,
            embedding: None,
            error: None,
            timing: Timing {
                submitted_ms: now_ms(),
                ..Timing::default()
            },
        };
        latest.insert(hash, job.id.clone());
        self.save(&job);
        drop(latest);
        let state = self.clone();
        let id = job.id.clone();
        tokio::spawn(async move { state.run(id, dataset).await });
        job
    }

    async fn run(self: Arc<Self>, id: String, dataset: Arc<LabeledDataset>) {
        let Ok(_permit) = self.permits.clone().acquire_owned().await else {
            return;
        };
        let Some(mut job) = self.job(&id) else {
            return;
        };
        job.state = JobState::Running;
        job.timing.started_ms = Some(now_ms());
        self.save(&job);
        let params = EmbedParams {
            k: job.request.k,
            sigma: job.request.sigma,
            alpha: job.request.alpha,
            n: job.request.n,
            potential: job.request.potential.to_potential(),
            solver: job.request.solver,
        };
        let result = tokio::task::spawn_blocking(move || embed(&dataset.points, &params)).await;
        let stored = match result {
            Ok(Ok(e)) => {
                let hash = e.content_hash();
                self.store
                    .put_once(Kind::Embedding, &hash, &e.to_wire())
                    .map(|_| hash)
                    .map_err(|err| format!("storing embedding: {err}"))
            }
            Ok(Err(e)) => Err(e.to_string()),
            Err(e) => Err(format!("worker panicked: {e}")),
        };
        match stored {
            Ok(hash) => {
                job.state = JobState::Done;
                job.embedding = Some(hash);
            }
            Err(msg) => {
                job.state = JobState::Failed;
                job.error = Some(msg);
            }
        }
        job.timing.finished_ms = Some(now_ms());
        self.save(&job);
    }
}
