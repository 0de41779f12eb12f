use std::path::PathBuf;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use workbench_core::data::{data_quality, summarize, TaskKind};
use workbench_core::experiment::ops::{self, render_json};
use workbench_core::experiment::{
    emit_report, AnalysisRequest, DatasetInfo, Instance, ModelInfo, ModelOrigin, ResultEntry, ResultKey,
};
use workbench_core::models::{self, ScoreTable};
use workbench_core::Error;

use crate::error::{ApiError, ErrorBody, JsonBody};
use crate::openapi;
use crate::state::{AppState, JobOutcome, Shared};

type ApiResult<T = Response> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/spec", get(spec))
        .route("/api/experiment", get(experiment))
        .route("/api/data/load", post(load_data))
        .route("/api/data/prepare", post(prepare))
        .route("/api/data/summary", get(summary))
        .route("/api/data/quality", get(quality))
        .route("/api/models", get(list_models))
        .route("/api/models/train", post(train))
        .route("/api/models/register", post(register))
        .route("/api/interpret", post(interpret))
        .route("/api/explain", post(explain))
        .route("/api/diagnose/{test}", post(diagnose))
        .route("/api/compare", post(compare))
        .route("/api/jobs/{id}", get(job))
        .route("/api/jobs/{id}/result", get(job_result))
        .route("/api/report", get(report))
        .with_state(state)
}

fn json_text(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn respond<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_text(StatusCode::OK, render_json(value)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobRef {
    pub job_id: u64,
}

fn accepted(job_id: u64) -> ApiResult {
    Ok((StatusCode::ACCEPTED, Json(JobRef { job_id })).into_response())
}

async fn spec() -> ApiResult {
    respond(&openapi::document())
}

#[derive(Serialize)]
struct ResultSummary<'a> {
    #[serde(flatten)]
    key: &'a ResultKey,
    status: &'static str,
}

#[derive(Serialize)]
struct ExperimentView<'a> {
    schema_version: u32,
    seed: u64,
    data: Option<DatasetInfo>,
    models: Vec<ModelInfo>,
    results: Vec<ResultSummary<'a>>,
}

async fn experiment(State(state): State<Shared>) -> ApiResult {
    let exp = state.read();
    let view = ExperimentView {
        schema_version: exp.schema_version,
        seed: exp.seed,
        data: exp.data.as_ref().map(DatasetInfo::of),
        models: exp.models.iter().map(ModelInfo::of).collect(),
        results: exp
            .results
            .iter()
            .map(|r| ResultSummary { key: &r.key, status: if r.error().is_some() { "error" } else { "ok" } })
            .collect(),
    };
    respond(&view)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadBody {
    path: PathBuf,
    target: String,
    task: TaskKind,
}

async fn load_data(State(state): State<Shared>, JsonBody(body): JsonBody<LoadBody>) -> ApiResult {
    let _writer = state.claim_writer()?;
    let info = state.mutate(|exp| {
        exp.load_data(&body.path, &body.target, body.task)?;
        Ok(DatasetInfo::of(exp.data.as_ref().expect("just loaded")))
    })?;
    respond(&info)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrepareBody {
    test_ratio: f64,
}

async fn prepare(State(state): State<Shared>, JsonBody(body): JsonBody<PrepareBody>) -> ApiResult {
    let _writer = state.claim_writer()?;
    let info = state.mutate(|exp| {
        exp.prepare(body.test_ratio)?;
        Ok(DatasetInfo::of(exp.data.as_ref().expect("prepared")))
    })?;
    respond(&info)
}

async fn summary(State(state): State<Shared>) -> ApiResult {
    let exp = state.read();
    respond(&summarize(exp.dataset()?))
}

async fn quality(State(state): State<Shared>) -> ApiResult {
    let exp = state.read();
    respond(&data_quality(exp.dataset()?))
}

async fn list_models(State(state): State<Shared>) -> ApiResult {
    let exp = state.read();
    respond(&exp.models.iter().map(ModelInfo::of).collect::<Vec<_>>())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainBody {
    family: String,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    id: Option<String>,
}

async fn train(State(state): State<Shared>, JsonBody(body): JsonBody<TrainBody>) -> ApiResult {
    let spec = ops::model_spec(&body.family, body.params).map_err(|e| match e {
        Error::InvalidParameter { name, reason } if name == "model" => Error::InvalidParameter { name: "family".into(), reason },
        other => other,
    })?;
    let writer = state.claim_writer()?;
    {
        let exp = state.read();
        exp.dataset()?;
        if let Some(id) = &body.id {
            if exp.model_entry(id).is_some() {
                return Err(Error::Conflict(format!("a model with id `{id}` already exists")).into());
            }
        }
    }
    let id = body.id;
    let job = state.spawn_job("train", Some(writer), move |st| {
        let run = || -> workbench_core::Result<String> {
            let model = {
                let exp = st.read();
                models::train(exp.dataset()?, &spec, exp.seed)?
            };
            let info = st.mutate(|exp| {
                let id = id.unwrap_or_else(|| exp.next_model_id(spec.family().as_str()));
                let seed = exp.seed;
                exp.add_model(id.clone(), ModelOrigin::Trained { spec, seed }, model)?;
                Ok(ModelInfo::of(exp.model_entry(&id).expect("just added")))
            })?;
            render_json(&info)
        };
        match run() {
            Ok(rendered) => JobOutcome::Done(rendered),
            Err(e) => JobOutcome::Failed(ApiError::from(e).body()),
        }
    });
    accepted(job)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterBody {
    scores: PathBuf,
    #[serde(default)]
    id: Option<String>,
}

async fn register(State(state): State<Shared>, JsonBody(body): JsonBody<RegisterBody>) -> ApiResult {
    let _writer = state.claim_writer()?;
    let info = state.mutate(|exp| {
        let table = ScoreTable::load(exp.dataset()?, &body.scores)?;
        let id = exp.register_scores(body.id, table, body.scores.display().to_string())?;
        Ok(ModelInfo::of(exp.model_entry(&id).expect("just added")))
    })?;
    respond(&info)
}

/// Check synchronously, then compute on the pool unless an identical
/// request is already stored.
fn analysis(state: &Shared, kind: &'static str, request: AnalysisRequest) -> ApiResult {
    let (request, key, stored) = {
        let exp = state.read();
        exp.check(&request)?;
        let (request, key) = exp.resolve(request);
        let stored = exp.find_result(&key).cloned();
        (request, key, stored)
    };
    let job = state.spawn_job(kind, None, move |st| {
        let entry = match stored {
            Some(entry) => Ok(entry),
            None => compute(st, request, key),
        };
        match entry.and_then(|e| Ok((render_json(&e)?, e))) {
            Ok((rendered, entry)) => match entry.outcome {
                workbench_core::experiment::Outcome::Ok { .. } => JobOutcome::Done(rendered),
                workbench_core::experiment::Outcome::Error { class, message } => {
                    JobOutcome::Stored { rendered, error: ErrorBody::new(class, message) }
                }
            },
            Err(e) => JobOutcome::Failed(ApiError::from(e).body()),
        }
    });
    accepted(job)
}

fn compute(st: &AppState, request: AnalysisRequest, key: ResultKey) -> workbench_core::Result<ResultEntry> {
    let entry = st.read().compute(request, key)?;
    st.mutate(|exp| Ok(exp.insert(entry).clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpretBody {
    model: String,
    #[serde(default)]
    instance: Option<Instance>,
}

async fn interpret(State(state): State<Shared>, JsonBody(body): JsonBody<InterpretBody>) -> ApiResult {
    analysis(&state, "interpret", AnalysisRequest::Interpret { model: body.model, instance: body.instance })
}

/// `{"model": ..., "method": ..., <method parameters>}`.
#[derive(Deserialize)]
struct ExplainBody {
    model: String,
    #[serde(flatten)]
    params: Map<String, Value>,
}

async fn explain(State(state): State<Shared>, JsonBody(body): JsonBody<ExplainBody>) -> ApiResult {
    let request = ops::explain_request(body.params)?;
    analysis(&state, "explain", AnalysisRequest::Explain { model: body.model, request })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseBody {
    model: String,
    #[serde(default)]
    config: Value,
}

async fn diagnose(
    State(state): State<Shared>,
    Path(test): Path<String>,
    JsonBody(body): JsonBody<DiagnoseBody>,
) -> ApiResult {
    let diagnostic = ops::diagnostic(&test, body.config)?;
    analysis(&state, "diagnose", AnalysisRequest::Diagnose { model: body.model, diagnostic })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareTest {
    test: String,
    #[serde(default)]
    config: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareBody {
    models: Vec<String>,
    #[serde(default)]
    tests: Vec<CompareTest>,
}

async fn compare(State(state): State<Shared>, JsonBody(body): JsonBody<CompareBody>) -> ApiResult {
    let tests = body
        .tests
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            ops::diagnostic(&t.test, t.config).map_err(|e| match e {
                Error::InvalidConfig { path, reason } => Error::InvalidConfig { path: format!("tests[{i}].{path}"), reason },
                Error::InvalidParameter { name, reason } => Error::InvalidConfig { path: format!("tests[{i}].{name}"), reason },
                other => other,
            })
        })
        .collect::<workbench_core::Result<Vec<_>>>()?;
    analysis(&state, "compare", AnalysisRequest::Compare { models: body.models, tests })
}

async fn job(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    respond(&state.job(id)?)
}

async fn job_result(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult {
    Ok(json_text(StatusCode::OK, state.job_result(id)?))
}

async fn report(State(state): State<Shared>) -> ApiResult {
    let bundle = emit_report(&state.read())?;
    Ok(json_text(StatusCode::OK, bundle.to_json()?))
}
