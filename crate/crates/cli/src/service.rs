//! HTTP API behind the sketching UI. Reads are served concurrently;
//! training jobs run one at a time from a queue.

use std::fs;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use paint_core::data::Dataset;
use paint_core::harness::EvalConfig;
use paint_core::reward::{LabelSet, SketchLabel};
use paint_core::{Error, STEP_MIN};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::commands::{self, Ctx, Report};
use crate::error::{CliError, CliResult};

/// Which artifacts the service works on.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub dataset: String,
    /// The priori bundle tune jobs start from.
    pub bundle: String,
    /// Name under which sketched labels, the reward model and tuned bundles
    /// are stored.
    pub session: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JobKind {
    TrainReward { seed: u64 },
    Tune { lambda: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: usize,
    #[serde(flatten)]
    pub kind: JobKind,
    pub status: JobStatus,
    pub result: Option<Value>,
    pub error: Option<Value>,
}

pub struct AppState {
    ctx: Ctx,
    cfg: ServiceConfig,
    dataset: Dataset,
    labels: RwLock<LabelSet>,
    jobs: RwLock<Vec<Job>>,
    queue: mpsc::UnboundedSender<usize>,
}

pub type SharedState = Arc<AppState>;

/// Error body with a status derived from the error kind.
pub struct ApiError(CliError);

impl<E: Into<CliError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.exit_code() {
            2 => StatusCode::BAD_REQUEST,
            3 => StatusCode::NOT_FOUND,
            4 => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Loads the dataset and any stored session labels, starts the job worker
/// and returns the router. Must be called inside a tokio runtime.
pub fn build(ctx: Ctx, cfg: ServiceConfig) -> CliResult<(Router, SharedState)> {
    let dataset = ctx.store.load_dataset(&cfg.dataset)?;
    let labels = match ctx.store.load_labels(&cfg.session) {
        Ok(l) => l,
        Err(Error::MissingArtifact(_)) => LabelSet::new(),
        Err(e) => return Err(e.into()),
    };
    labels.validate_against(&dataset)?;
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState {
        ctx,
        cfg,
        dataset,
        labels: RwLock::new(labels),
        jobs: RwLock::new(Vec::new()),
        queue: tx,
    });
    tokio::spawn(worker(state.clone(), rx));
    Ok((router(state.clone()), state))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/episodes", get(list_episodes))
        .route("/episodes/{id}", get(episode))
        .route("/labels", get(get_labels).post(post_labels))
        .route("/jobs/train-reward", post(post_train_reward))
        .route("/jobs/tune", post(post_tune))
        .route("/jobs/{id}", get(get_job))
        .route("/reports/{bundle}", get(get_report))
        .with_state(state)
}

async fn worker(state: SharedState, mut rx: mpsc::UnboundedReceiver<usize>) {
    while let Some(id) = rx.recv().await {
        let kind = {
            let mut jobs = state.jobs.write().expect("job table poisoned");
            jobs[id].status = JobStatus::Running;
            jobs[id].kind
        };
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || run_job(&st, id, kind))
            .await
            .map_err(|e| CliError::Server(e.to_string()))
            .and_then(|r| r);
        let mut jobs = state.jobs.write().expect("job table poisoned");
        match outcome {
            Ok(v) => {
                jobs[id].status = JobStatus::Done;
                jobs[id].result = Some(v);
            }
            Err(e) => {
                log::warn!("job {id} failed: {e}");
                jobs[id].status = JobStatus::Failed;
                jobs[id].error = Some(json!({ "error": e.kind(), "message": e.to_string() }));
            }
        }
    }
}

fn run_job(state: &AppState, id: usize, kind: JobKind) -> CliResult<Value> {
    let (ctx, cfg) = (&state.ctx, &state.cfg);
    match kind {
        JobKind::TrainReward { seed } => {
            let labels = state.labels.read().expect("labels poisoned").clone();
            Ok(commands::train_reward(ctx, &cfg.dataset, &labels, seed, &cfg.session)?)
        }
        JobKind::Tune { lambda, seed } => {
            let out = format!("{}-tune-{id}", cfg.session);
            let mut v = commands::tune(
                ctx,
                &cfg.bundle,
                &cfg.dataset,
                &cfg.session,
                Some("sketch".into()),
                lambda,
                seed,
                &out,
            )?;
            let report = cached_report(state, &out)?;
            v["name"] = json!(out);
            v["report"] = serde_json::to_value(report)?;
            Ok(v)
        }
    }
}

fn default_eval(ctx: &Ctx) -> EvalConfig {
    EvalConfig::new(ctx.profile.eval_days, ctx.profile.eval_repeats, 0)
}

/// The bundle's `report.json`, computed and written on first request.
fn cached_report(state: &AppState, name: &str) -> CliResult<Report> {
    let dir = state.ctx.store.bundle_dir(name);
    let path = dir.join("report.json");
    if let Ok(text) = fs::read_to_string(&path) {
        return Ok(serde_json::from_str(&text)?);
    }
    let bundle = state.ctx.store.load_bundle(name)?;
    let report = commands::report(&state.ctx, name, &bundle, &default_eval(&state.ctx))?;
    fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EpisodeInfo {
    pub id: u64,
    pub patient: String,
    pub samples: usize,
    pub days: f64,
    pub start_clock: f64,
    pub terminated: bool,
}

async fn list_episodes(State(state): State<SharedState>) -> Json<Vec<EpisodeInfo>> {
    Json(
        state
            .dataset
            .episodes
            .iter()
            .map(|e| EpisodeInfo {
                id: e.episode_id,
                patient: e.patient_id.clone(),
                samples: e.len(),
                days: e.len() as f64 * STEP_MIN / 1440.0,
                start_clock: e.start_clock,
                terminated: e.terminated,
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
pub struct TraceQuery {
    /// Keep every n-th sample.
    pub every: Option<usize>,
    /// Downsample to at most this many points.
    pub points: Option<usize>,
}

/// A display trace. Glucose and basal are the kept samples; bolus and carbs
/// are summed over each kept sample's window so no dose disappears.
#[derive(Debug, Serialize, Deserialize)]
pub struct Trace {
    pub id: u64,
    pub every: usize,
    pub t: Vec<f64>,
    pub glucose: Vec<f64>,
    pub basal: Vec<f64>,
    pub bolus: Vec<f64>,
    pub carbs: Vec<f64>,
}

async fn episode(
    State(state): State<SharedState>,
    Path(id): Path<u64>,
    Query(q): Query<TraceQuery>,
) -> ApiResult<Json<Trace>> {
    let ep = state
        .dataset
        .episode(id)
        .ok_or_else(|| Error::MissingArtifact(format!("episode {id}")))?;
    let n = ep.len();
    let every = match (q.every, q.points) {
        (Some(0), _) | (_, Some(0)) => {
            return Err(Error::InvalidParameter("downsample factor must be positive".into()).into())
        }
        (Some(k), _) => k,
        (None, Some(p)) => n.div_ceil(p).max(1),
        (None, None) => 1,
    };
    let mut tr = Trace {
        id,
        every,
        t: Vec::new(),
        glucose: Vec::new(),
        basal: Vec::new(),
        bolus: Vec::new(),
        carbs: Vec::new(),
    };
    for start in (0..n).step_by(every) {
        let end = (start + every).min(n);
        tr.t.push(ep.t[start]);
        tr.glucose.push(ep.glucose[start]);
        tr.basal.push(ep.basal[start]);
        tr.bolus.push(ep.bolus[start..end].iter().sum());
        tr.carbs.push(ep.carbs[start..end].iter().sum());
    }
    Ok(Json(tr))
}

#[derive(Debug, Deserialize)]
pub struct LabelQuery {
    pub episode_id: Option<u64>,
}

async fn get_labels(State(state): State<SharedState>, Query(q): Query<LabelQuery>) -> Json<Value> {
    let labels = state.labels.read().expect("labels poisoned");
    let sel: Vec<&SketchLabel> = labels
        .labels()
        .iter()
        .filter(|l| q.episode_id.is_none_or(|e| l.episode_id == e))
        .collect();
    Json(json!({ "count": sel.len(), "labels": sel }))
}

#[derive(Debug, Deserialize)]
pub struct LabelBatch {
    pub labels: Vec<SketchLabel>,
}

/// Adds a batch atomically: out-of-range rewards and unknown samples are
/// 400, a different reward for an already labelled sample is 409.
async fn post_labels(State(state): State<SharedState>, Json(batch): Json<LabelBatch>) -> ApiResult<Json<Value>> {
    let checked = batch
        .labels
        .iter()
        .map(|l| SketchLabel::new(l.episode_id, l.t, l.reward))
        .collect::<paint_core::Result<Vec<_>>>()?;
    LabelSet::from_labels(checked.iter().copied())?.validate_against(&state.dataset)?;
    let (added, total) = {
        let mut labels = state.labels.write().expect("labels poisoned");
        let mut staged = labels.clone();
        let added = staged.extend(checked)?;
        state.ctx.store.save_labels(&state.cfg.session, &staged)?;
        *labels = staged;
        (added, labels.len())
    };
    Ok(Json(json!({ "added": added, "total": total })))
}

fn enqueue(state: &AppState, kind: JobKind) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = {
        let mut jobs = state.jobs.write().expect("job table poisoned");
        let id = jobs.len();
        jobs.push(Job {
            id,
            kind,
            status: JobStatus::Queued,
            result: None,
            error: None,
        });
        id
    };
    state
        .queue
        .send(id)
        .map_err(|_| CliError::Server("job worker stopped".into()))?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "status": JobStatus::Queued }))))
}

#[derive(Debug, Default, Deserialize)]
pub struct TrainRewardRequest {
    #[serde(default)]
    pub seed: u64,
}

async fn post_train_reward(
    State(state): State<SharedState>,
    body: Option<Json<TrainRewardRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let seed = body.map(|b| b.seed).unwrap_or_default();
    enqueue(&state, JobKind::TrainReward { seed })
}

#[derive(Debug, Deserialize)]
pub struct TuneRequest {
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

async fn post_tune(State(state): State<SharedState>, Json(req): Json<TuneRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    if !(req.lambda >= 0.0 && req.lambda.is_finite()) {
        return Err(Error::NegativeLambda(req.lambda).into());
    }
    enqueue(
        &state,
        JobKind::Tune {
            lambda: req.lambda,
            seed: req.seed,
        },
    )
}

async fn get_job(State(state): State<SharedState>, Path(id): Path<usize>) -> ApiResult<Json<Job>> {
    let jobs = state.jobs.read().expect("job table poisoned");
    let job = jobs
        .get(id)
        .cloned()
        .ok_or_else(|| Error::MissingArtifact(format!("job {id}")))?;
    Ok(Json(job))
}

async fn get_report(State(state): State<SharedState>, Path(name): Path<String>) -> ApiResult<Json<Report>> {
    if name.contains("..") || name.contains('\\') {
        return Err(Error::InvalidParameter(format!("bad bundle name {name:?}")).into());
    }
    let report = tokio::task::spawn_blocking(move || cached_report(&state, &name))
        .await
        .map_err(|e| CliError::Server(e.to_string()))??;
    Ok(Json(report))
}
