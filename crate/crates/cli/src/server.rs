//! HTTP service: one pipeline session per id, requests within a session
//! run one at a time and in arrival order.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use visage_core::flow::FeatureVector;
use visage_core::imgcore::decode_pnm;
use visage_core::pipeline::{label_name, train_samples, Detectors, Expression, Session, SessionConfig};
use visage_core::svm::{write_model, write_range, Sample};
use visage_core::{Error, Image};

const MAX_BODY: usize = 32 << 20;

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A live session plus its training pool.
pub struct ApiSession {
    pub session: Session,
    /// Feature vectors emitted since the last label request.
    pub pending: Vec<FeatureVector>,
    pub pool: Vec<Sample>,
}

struct Inner {
    config: SessionConfig,
    detectors: Detectors,
    sessions: Mutex<HashMap<String, Arc<Mutex<ApiSession>>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// State with the detectors named by `config`.
    pub fn new(config: SessionConfig) -> visage_core::Result<Self> {
        let detectors = Detectors::from_config(&config)?;
        Self::with_detectors(config, detectors)
    }

    pub fn with_detectors(config: SessionConfig, detectors: Detectors) -> visage_core::Result<Self> {
        config.validate()?;
        Ok(AppState(Arc::new(Inner {
            config,
            detectors,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<ApiSession>>> {
        self.0
            .sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session `{id}`")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/frames", post(post_frame))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/model", get(model))
        .route("/sessions/{id}/model/range", get(model_range))
        .route("/sessions/{id}/reset-reference", post(reset_reference))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

/// Runs `f` on the session off the async workers, holding its lock.
async fn with_session<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut ApiSession) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let s = state.session(id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = s.lock().map_err(|_| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "session poisoned".into()))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(State(state): State<AppState>) -> ApiResult<(StatusCode, Json<Value>)> {
    let session = Session::new(state.0.config.clone(), state.0.detectors.clone())?;
    let id = format!("s{}", state.0.next_id.fetch_add(1, Ordering::Relaxed));
    let api = ApiSession {
        session,
        pending: Vec::new(),
        pool: Vec::new(),
    };
    state
        .0
        .sessions
        .lock()
        .expect("session table poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(api)));
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

/// JSON frame upload: base64 PGM/PPM bytes, or base64 raw pixels with
/// their dimensions.
#[derive(Deserialize)]
#[serde(untagged)]
enum FrameUpload {
    Pnm {
        pnm: String,
    },
    Raw {
        width: usize,
        height: usize,
        channels: usize,
        pixels: String,
    },
}

fn decode_frame(headers: &HeaderMap, body: &[u8]) -> ApiResult<Image> {
    let bad = |msg: String| ApiError(StatusCode::BAD_REQUEST, msg);
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if !is_json {
        return decode_pnm(body).map_err(|e| bad(format!("malformed frame: {e}")));
    }
    let upload: FrameUpload =
        serde_json::from_slice(body).map_err(|e| bad(format!("malformed frame JSON: {e}")))?;
    let b64 = |s: &str| {
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(|e| bad(format!("malformed base64: {e}")))
    };
    match upload {
        FrameUpload::Pnm { pnm } => decode_pnm(&b64(&pnm)?).map_err(|e| bad(format!("malformed frame: {e}"))),
        FrameUpload::Raw {
            width,
            height,
            channels,
            pixels,
        } => Image::new(width, height, channels, b64(&pixels)?).map_err(|e| bad(format!("malformed frame: {e}"))),
    }
}

async fn post_frame(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let frame = decode_frame(&headers, &body)?;
    with_session(&state, &id, move |s| {
        let r = s.session.process_frame(&frame)?;
        if let Some(f) = &r.feature {
            s.pending.push(f.clone());
        }
        let mut v = serde_json::to_value(&r).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        v["pending_windows"] = json!(s.pending.len());
        Ok(Json(v))
    })
    .await
}

#[derive(Deserialize)]
struct LabelRequest {
    expression: Value,
}

fn parse_expression(v: &Value) -> ApiResult<Expression> {
    let parsed = match v {
        Value::String(s) => s.parse().ok(),
        Value::Number(n) => n.as_i64().and_then(|i| Expression::from_id(i as i32)),
        _ => None,
    };
    parsed.ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, format!("unknown expression {v}")))
}

fn pool_counts(pool: &[Sample]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in pool {
        *counts.entry(label_name(s.label)).or_insert(0) += 1;
    }
    counts
}

async fn label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<LabelRequest>,
) -> ApiResult<Json<Value>> {
    let expr = parse_expression(&req.expression)?;
    if !state.0.config.labels.contains(&expr) {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("{expr} is not in the session's label set")));
    }
    with_session(&state, &id, move |s| {
        let added = s.pending.len();
        for f in s.pending.drain(..) {
            s.pool.push(Sample::new(f.values, expr.id()));
        }
        Ok(Json(json!({
            "expression": expr,
            "added": added,
            "counts": pool_counts(&s.pool),
        })))
    })
    .await
}

async fn train(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let config = state.0.config.clone();
    with_session(&state, &id, move |s| {
        let counts = pool_counts(&s.pool);
        if counts.len() < 2 {
            return Err(ApiError(
                StatusCode::CONFLICT,
                format!("training needs labeled windows of at least two classes, have {counts:?}"),
            ));
        }
        let (model, grid, accuracy) = train_samples(s.pool.clone(), &config)?;
        s.session.set_model(Some(Arc::new(model)));
        Ok(Json(json!({
            "best": grid.best,
            "cells": grid.cells,
            "training_accuracy": accuracy,
            "samples": s.pool.len(),
            "counts": counts,
        })))
    })
    .await
}

fn no_model(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("session `{id}` has no trained model"))
}

async fn model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let key = id.clone();
    let text = with_session(&state, &id, move |s| {
        s.session.model().map(|m| write_model(m)).ok_or_else(|| no_model(&key))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn model_range(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let key = id.clone();
    let text = with_session(&state, &id, move |s| {
        s.session
            .model()
            .and_then(|m| m.scaling.as_ref().map(write_range))
            .ok_or_else(|| no_model(&key))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn reset_reference(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    with_session(&state, &id, |s| {
        s.session.reset_reference();
        s.pending.clear();
        Ok(Json(json!({ "reset": true })))
    })
    .await
}
