//! JSON API under `/api/v1`, backing the authoring UI.
//!
//! The service reads the corpus once at startup. The only write it ever
//! performs is appending a saved question to a lecture's `quiz.jsonl`, and
//! those appends are serialized.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lectureqg_core::context::{build_context, ContextBundle, ContextError, ContextStrategy};
use lectureqg_core::corpus::{read_jsonl, CorpusError, to_jsonl, Keyframe, Lecture, QuizItem, QuizRecord, TranscriptSegment, QUIZ_FILE};
use lectureqg_core::metrics::{score_question_set, ItemScores};
use lectureqg_core::qgen::{generate_questions, QgenError, QuestionSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::engine::Engine;
use crate::run::RUN_MANIFEST;

/// Seconds a client should wait before retrying after a provider failure.
pub const RETRY_AFTER_S: u64 = 5;
pub const DEFAULT_STRATEGY: &str = "transcript/cot+rewrite";

pub struct AppState {
    pub engine: Engine,
    pub corpus_root: PathBuf,
    /// Directory whose subdirectories are run outputs.
    pub runs_root: Option<PathBuf>,
    save_lock: Mutex<()>,
}

impl AppState {
    pub fn new(engine: Engine, corpus_root: PathBuf, runs_root: Option<PathBuf>) -> Self {
        AppState {
            engine,
            corpus_root,
            runs_root,
            save_lock: Mutex::new(()),
        }
    }

    fn lecture(&self, id: &str) -> Result<&Lecture, ApiError> {
        self.engine
            .corpus
            .lecture(id)
            .map(|e| &e.lecture)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no lecture {id:?}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn provider(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let retryable = self.status == StatusCode::BAD_GATEWAY;
        let mut body = json!({ "error": self.message, "retryable": retryable });
        if retryable {
            body["retry_after_s"] = json!(RETRY_AFTER_S);
        }
        let mut resp = (self.status, Json(body)).into_response();
        if retryable {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_S));
        }
        resp
    }
}

#[derive(Serialize)]
struct LectureSummary<'a> {
    id: &'a str,
    course: &'a str,
    duration_s: f64,
    segments: usize,
    keyframes: usize,
    items: usize,
}

async fn list_lectures(State(state): State<Arc<AppState>>) -> Json<Vec<Value>> {
    let out = state
        .engine
        .corpus
        .entries
        .iter()
        .map(|e| {
            json!(LectureSummary {
                id: &e.lecture.id,
                course: &e.lecture.course,
                duration_s: e.lecture.duration_s,
                segments: e.lecture.segments.len(),
                keyframes: e.lecture.keyframes.len(),
                items: e.items.len(),
            })
        })
        .collect();
    Json(out)
}

#[derive(Serialize)]
struct KeyframeView<'a> {
    #[serde(flatten)]
    keyframe: &'a Keyframe,
    image_url: String,
    /// Segments shown while this keyframe is on screen.
    segments: &'a [usize],
}

#[derive(Serialize)]
struct LectureDetail<'a> {
    id: &'a str,
    course: &'a str,
    duration_s: f64,
    segments: &'a [TranscriptSegment],
    keyframes: Vec<KeyframeView<'a>>,
}

async fn lecture_detail(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let lecture = state.lecture(&id)?;
    let dir_name = lecture
        .dir
        .strip_prefix(&state.corpus_root)
        .map(|p| p.to_string_lossy().replace('\\', "/"))
        .unwrap_or_else(|_| lecture.id.clone());
    let keyframes = lecture
        .keyframes
        .iter()
        .map(|k| KeyframeView {
            keyframe: k,
            image_url: format!("/api/v1/files/{dir_name}/{}", k.image_ref),
            segments: lecture.alignment.get(&k.index).map_or(&[][..], Vec::as_slice),
        })
        .collect();
    Ok(Json(json!(LectureDetail {
        id: &lecture.id,
        course: &lecture.course,
        duration_s: lecture.duration_s,
        segments: &lecture.segments,
        keyframes,
    })))
}

fn quiz_path(lecture: &Lecture) -> PathBuf {
    lecture.dir.join(QUIZ_FILE)
}

fn read_records(lecture: &Lecture) -> Result<Vec<QuizRecord>, ApiError> {
    let path = quiz_path(lecture);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl(&path, &lecture.id, QUIZ_FILE).map_err(|e| ApiError::internal(e.to_string()))
}

async fn lecture_questions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Vec<QuizRecord>>, ApiError> {
    let lecture = state.lecture(&id)?;
    Ok(Json(read_records(lecture)?))
}

#[derive(Debug, Deserialize)]
pub struct GenerateRequest {
    pub lecture_id: String,
    pub timestamp_s: f64,
    pub answer: String,
    #[serde(default)]
    pub strategy: Option<String>,
    /// Enables reference-based scores when given.
    #[serde(default)]
    pub reference_question: Option<String>,
    /// Generator name; defaults to the first configured generator.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub item: QuizItem,
    pub model: String,
    pub bundle: ContextBundle,
    pub questions: QuestionSet,
    pub scores: ItemScores,
}

/// Rephrases a quiz validation error in terms of the request fields.
fn request_error(e: CorpusError) -> ApiError {
    let field = |f: &str| {
        let rest = f.split_once(':').map_or(f, |(_, r)| r);
        rest.split_once('.').map_or("request", |(_, name)| name).to_string()
    };
    ApiError::bad_request(match e {
        CorpusError::Schema { field: f, message, .. } => format!("{}: {message}", field(&f)),
        CorpusError::TimestampOutOfRange {
            field: f,
            timestamp_s,
            duration_s,
            ..
        } => format!("{}: {timestamp_s}s is outside the lecture duration [0, {duration_s}]", field(&f)),
        CorpusError::BannedAnswer { field: f, answer, .. } => {
            format!("{}: {answer:?} is not allowed (yes / no / none of the above)", field(&f))
        }
        other => other.to_string(),
    })
}

/// Validates a timestamp and answer against a lecture the same way quiz
/// files are validated.
fn adhoc_item(lecture: &Lecture, timestamp_s: f64, answer: &str, reference: &str) -> Result<QuizItem, ApiError> {
    let record = QuizRecord {
        id: "request".into(),
        lecture_id: Some(lecture.id.clone()),
        timestamp_s: Some(timestamp_s),
        segment_id: None,
        answer: answer.to_string(),
        reference_question: reference.to_string(),
        distractors: Vec::new(),
        choice_count: None,
    };
    record.resolve(lecture, 1).map_err(request_error)
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let lecture = state.lecture(&req.lecture_id)?;
    if !req.timestamp_s.is_finite() {
        return Err(ApiError::bad_request("timestamp_s must be a finite number"));
    }
    let item = adhoc_item(lecture, req.timestamp_s, &req.answer, req.reference_question.as_deref().unwrap_or(""))?;
    let strategy: ContextStrategy = req
        .strategy
        .as_deref()
        .unwrap_or(DEFAULT_STRATEGY)
        .parse()
        .map_err(|e| ApiError::bad_request(format!("strategy: {e}")))?;
    let engine = &state.engine;
    let generator = match &req.model {
        None => engine.generators.first(),
        Some(name) => engine.generators.iter().find(|g| &g.name == name),
    }
    .ok_or_else(|| ApiError::bad_request("unknown or missing generator"))?;
    let settings = engine.settings_for(&generator.name, strategy.modality);

    let bundle = build_context(lecture, &item, strategy, &generator.client, &settings)
        .await
        .map_err(|e| match e {
            ContextError::Llm(e) => ApiError::provider(format!("context construction: {e}")),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
        })?;
    let questions = generate_questions(&bundle, &item, &generator.client)
        .await
        .map_err(|e| match e {
            QgenError::EmptyContext { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            other => ApiError::provider(format!("question generation: {other}")),
        })?;
    let scores = score_question_set(&questions, &item, &bundle, &generator.name, &engine.scoring).await;
    Ok(Json(GenerateResponse {
        item,
        model: generator.name.clone(),
        bundle,
        questions,
        scores,
    }))
}

#[derive(Debug, Deserialize)]
pub struct SaveQuestionRequest {
    pub lecture_id: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub timestamp_s: Option<f64>,
    #[serde(default)]
    pub segment_id: Option<usize>,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub distractors: Vec<String>,
}

async fn save_question(
    State(state): State<Arc<AppState>>,
    Json(req): Json<SaveQuestionRequest>,
) -> Result<(StatusCode, Json<QuizRecord>), ApiError> {
    let lecture = state.lecture(&req.lecture_id)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    if req.distractors.iter().any(|d| d.trim().is_empty()) {
        return Err(ApiError::bad_request("distractors must be non-empty"));
    }
    let _guard = state.save_lock.lock().await;
    let mut records = read_records(lecture)?;
    let id = match &req.id {
        Some(id) if !id.trim().is_empty() => id.trim().to_string(),
        _ => {
            let mut n = records.len() + 1;
            while records.iter().any(|r| r.id == format!("{}-q{n}", lecture.id)) {
                n += 1;
            }
            format!("{}-q{n}", lecture.id)
        }
    };
    if records.iter().any(|r| r.id == id) {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("question {id:?} already exists")));
    }
    let record = QuizRecord {
        id,
        lecture_id: Some(lecture.id.clone()),
        timestamp_s: req.timestamp_s,
        segment_id: if req.timestamp_s.is_some() { None } else { req.segment_id },
        answer: req.answer.clone(),
        reference_question: req.question.trim().to_string(),
        distractors: req.distractors.clone(),
        choice_count: Some(req.distractors.len() + 1),
    };
    record
        .resolve(lecture, records.len() + 1)
        .map_err(request_error)?;
    records.push(record.clone());
    let path = quiz_path(lecture);
    lectureqg_core::util::write_atomic(&path, to_jsonl(&records).as_bytes())
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    Ok((StatusCode::CREATED, Json(record)))
}

fn run_dir(state: &AppState, name: &str) -> Result<PathBuf, ApiError> {
    let root = state
        .runs_root
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no runs directory configured"))?;
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(ApiError::bad_request(format!("invalid run name {name:?}")));
    }
    let dir = root.join(name);
    if !dir.join(RUN_MANIFEST).is_file() && !dir.join("report.md").is_file() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no run {name:?}")));
    }
    Ok(dir)
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Result<Json<Vec<Value>>, ApiError> {
    let Some(root) = &state.runs_root else {
        return Ok(Json(Vec::new()));
    };
    let mut names: Vec<String> = match std::fs::read_dir(root) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| !n.starts_with('.'))
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    let runs = names
        .into_iter()
        .filter_map(|name| {
            let dir = root.join(&name);
            let has_report = dir.join("report.md").is_file();
            (has_report || dir.join(RUN_MANIFEST).is_file()).then(|| {
                json!({
                    "name": name,
                    "has_report": has_report,
                    "has_sweep": dir.join(crate::sweep::SWEEP_CSV).is_file(),
                })
            })
        })
        .collect();
    Ok(Json(runs))
}

async fn run_report(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Result<Json<Value>, ApiError> {
    let dir = run_dir(&state, &name)?;
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).ok();
    let report: Option<Value> = read("report.json").and_then(|s| serde_json::from_str(&s).ok());
    Ok(Json(json!({
        "name": name,
        "markdown": read("report.md"),
        "csv": read("report.csv"),
        "report": report,
        "sweep_csv": read(crate::sweep::SWEEP_CSV),
    })))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

/// The API router. Corpus files (keyframe images) are served under
/// `/api/v1/files`; `static_dir`, if given, serves everything else.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/lectures", get(list_lectures))
        .route("/lectures/{id}", get(lecture_detail))
        .route("/lectures/{id}/questions", get(lecture_questions))
        .route("/generate", post(generate))
        .route("/save-question", post(save_question))
        .route("/runs", get(list_runs))
        .route("/runs/{name}/report", get(run_report))
        .nest_service("/files", ServeDir::new(&state.corpus_root))
        .with_state(state);
    let app = Router::new().nest("/api/v1", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
