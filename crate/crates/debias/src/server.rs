//! The HTTP service.
//!
//! Endpoints:
//!
//! - `GET /healthz` → `{"status": "ok", "model_loaded": bool}`, always 200.
//! - `POST /v1/classify` `{"text"}` → `{"label", "p_hate"}`.
//! - `POST /v1/debias` `{"text", "k"?, "temperature"?}` →
//!   `{"original", "rewritten", "p_hate_pre", "p_hate_post"}`; rewrites
//!   unconditionally (no threshold gate) so callers can debias anything.
//! - `POST /v1/evaluate` `{"data_path"}` → the full evaluation report.
//!
//! Status mapping: 400 invalid input, 404 unknown route, 502 generation
//! backend failure, 503 model not loaded. Error bodies are always
//! `{"error": message}`; a missing request field yields exactly
//! `{"error": "missing field: <name>"}`.

use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use debias_core::classifier::{predict_with_threshold, ClassifierModel};
use debias_core::generation::{debias as debias_text, DebiasError, GenerationConfig};
use debias_core::pipeline::{evaluate_corpus, DebiasContext, PipelineConfig};
use debias_core::prompt::{ExampleBank, PromptTemplate};

use crate::config::AppConfig;
use crate::dataset::load_corpus_auto;
use crate::logging::Logger;
use crate::setup::{self, SharedBackend};

/// Everything the handlers need, shared behind one `Arc`.
pub struct AppState {
    pub model: Option<Arc<ClassifierModel>>,
    pub template: Arc<PromptTemplate>,
    pub bank: Arc<ExampleBank>,
    pub backend: SharedBackend,
    pub pipeline: PipelineConfig,
    pub logger: Logger,
    /// Caps concurrent in-flight generations (`backend.max_concurrency`).
    pub gate: Arc<Semaphore>,
}

/// Builds the shared state from a resolved config.
pub fn build_state(config: &AppConfig, logger: Logger) -> anyhow::Result<AppState> {
    let pipeline = config.pipeline_config();
    pipeline.validate()?;
    Ok(AppState {
        model: setup::load_optional_model(config)?.map(Arc::new),
        template: Arc::new(setup::load_template_or_default(config)?),
        bank: Arc::new(setup::load_bank_or_default(config)?),
        backend: setup::build_backend(config)?,
        pipeline,
        logger,
        gate: Arc::new(Semaphore::new(config.backend_max_concurrency)),
    })
}

/// The service router; exposed for in-process testing.
pub fn build_router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/classify", post(classify))
        .route("/v1/debias", post(debias_endpoint))
        .route("/v1/evaluate", post(evaluate))
        .fallback(not_found)
        .with_state(state)
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

/// Unwraps the JSON body extractor; malformed JSON is a 400.
fn parse_body(payload: Result<Json<Value>, JsonRejection>) -> Result<Value, Response> {
    match payload {
        Ok(Json(value)) => Ok(value),
        Err(rejection) => Err(error_response(
            StatusCode::BAD_REQUEST,
            format!("invalid JSON body: {rejection}"),
        )),
    }
}

/// A required string field; absent or non-string both report it missing.
fn required_str<'a>(body: &'a Value, field: &str) -> Result<&'a str, Response> {
    body.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| error_response(StatusCode::BAD_REQUEST, format!("missing field: {field}")))
}

fn require_model(state: &AppState) -> Result<Arc<ClassifierModel>, Response> {
    state.model.clone().ok_or_else(|| {
        error_response(StatusCode::SERVICE_UNAVAILABLE, "model not loaded")
    })
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({
        "status": "ok",
        "model_loaded": state.model.is_some(),
    }))
    .into_response()
}

async fn not_found() -> Response {
    error_response(StatusCode::NOT_FOUND, "not found")
}

async fn classify(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Response {
    let result = (|| {
        let body = parse_body(payload)?;
        let text = required_str(&body, "text")?.to_string();
        let model = require_model(&state)?;
        let classification = predict_with_threshold(&model, &text, state.pipeline.threshold);
        state.logger.debug(
            "classify",
            json!({ "p_hate": classification.p_hate, "label": classification.label.as_str() }),
        );
        Ok(Json(json!({
            "label": classification.label.as_str(),
            "p_hate": classification.p_hate,
        }))
        .into_response())
    })();
    result.unwrap_or_else(|error: Response| error)
}

/// Per-request generation overrides accepted by `/v1/debias`.
fn generation_overrides(
    body: &Value,
    base: &GenerationConfig,
    default_k: usize,
) -> Result<(GenerationConfig, usize), Response> {
    let mut gen = base.clone();
    if let Some(value) = body.get("temperature") {
        gen.temperature = value.as_f64().ok_or_else(|| {
            error_response(StatusCode::BAD_REQUEST, "invalid field: temperature")
        })?;
    }
    let k = match body.get("k") {
        None => default_k,
        Some(value) => value
            .as_u64()
            .map(|k| k as usize)
            .ok_or_else(|| error_response(StatusCode::BAD_REQUEST, "invalid field: k"))?,
    };
    if let Err(error) = gen.validate() {
        return Err(error_response(StatusCode::BAD_REQUEST, error.to_string()));
    }
    Ok((gen, k))
}

fn debias_error_response(error: DebiasError) -> Response {
    match error {
        DebiasError::Generate(inner) => error_response(
            StatusCode::BAD_GATEWAY,
            format!("backend failure: {inner}"),
        ),
        DebiasError::Prompt(inner) => error_response(StatusCode::BAD_REQUEST, inner.to_string()),
        DebiasError::Config(inner) => error_response(StatusCode::BAD_REQUEST, inner.to_string()),
    }
}

async fn debias_endpoint(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Response {
    let prepared = (|| {
        let body = parse_body(payload)?;
        let text = required_str(&body, "text")?.to_string();
        let model = require_model(&state)?;
        let overrides = generation_overrides(&body, &state.pipeline.gen, state.pipeline.k)?;
        Ok((text, model, overrides))
    })();
    let (text, model, (gen, k)) = match prepared {
        Ok(parts) => parts,
        Err(error) => return error,
    };

    let permit = match state.gate.clone().acquire_owned().await {
        Ok(permit) => permit,
        Err(_) => return error_response(StatusCode::SERVICE_UNAVAILABLE, "server shutting down"),
    };

    let worker_state = state.clone();
    let threshold = state.pipeline.threshold;
    let joined = tokio::task::spawn_blocking(move || {
        let _permit = permit; // hold the concurrency slot for the whole call
        let pre = predict_with_threshold(&model, &text, threshold);
        let result = debias_text(
            &text,
            &worker_state.template,
            &worker_state.bank,
            k,
            &gen,
            worker_state.backend.as_ref(),
        )?;
        let post = predict_with_threshold(&model, &result.rewritten, threshold);
        Ok::<_, DebiasError>((pre, result, post))
    })
    .await;

    match joined {
        Err(join_error) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("worker failed: {join_error}"),
        ),
        Ok(Err(error)) => {
            state
                .logger
                .warn("debias_failed", json!({ "error": error.to_string() }));
            debias_error_response(error)
        }
        Ok(Ok((pre, result, post))) => Json(json!({
            "original": result.original,
            "rewritten": result.rewritten,
            "p_hate_pre": pre.p_hate,
            "p_hate_post": post.p_hate,
            "backend": result.backend_id,
            "attempts": result.attempts,
        }))
        .into_response(),
    }
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Response {
    let prepared = (|| {
        let body = parse_body(payload)?;
        let path = required_str(&body, "data_path")?.to_string();
        let model = require_model(&state)?;
        Ok((path, model))
    })();
    let (path, model) = match prepared {
        Ok(parts) => parts,
        Err(error) => return error,
    };

    let worker_state = state.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let corpus = load_corpus_auto(Path::new(&path))
            .map_err(|e| error_response(StatusCode::BAD_REQUEST, e.to_string()))?;
        let ctx = DebiasContext::new(
            &worker_state.template,
            &worker_state.bank,
            worker_state.backend.as_ref(),
        );
        // Batch evaluation fails open per item, so the only error left here
        // is config validation, which `build_state` already performed.
        let (_, report) =
            evaluate_corpus(&corpus, &model, &ctx, &worker_state.pipeline).map_err(|e| {
                error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            })?;
        Ok::<_, Response>(report)
    })
    .await;

    match joined {
        Err(join_error) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("worker failed: {join_error}"),
        ),
        Ok(Err(error)) => error,
        Ok(Ok(report)) => {
            state.logger.info(
                "evaluate",
                json!({ "f1": report.f1, "examples": report.counts.total() }),
            );
            Json(report).into_response()
        }
    }
}

/// Resolves when the process receives ctrl-c or (on unix) SIGTERM.
async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c()
            .await
            .expect("install ctrl-c handler");
    };
    #[cfg(unix)]
    let terminate = async {
        tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler")
            .recv()
            .await;
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}

/// Builds the runtime, binds `server.listen_addr`, and serves until
/// interrupted.
pub fn run(config: &AppConfig, logger: Logger) -> anyhow::Result<()> {
    let state = Arc::new(build_state(config, logger)?);
    let router = build_router(state.clone());
    let listen_addr = config.listen_addr.clone();

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen_addr).await?;
        let local = listener.local_addr()?;
        state.logger.info(
            "server_started",
            json!({
                "addr": local.to_string(),
                "model_loaded": state.model.is_some(),
                "backend": state.backend.id(),
            }),
        );
        axum::serve(listener, router)
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        state.logger.info("server_stopped", json!({}));
        Ok(())
    })
}
