//! Read-only HTTP front end over one loaded bundle.

use std::io::Write;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use sizegraph_core::bundle::ModelBundle;
use sizegraph_core::{Category, FORMAT_VERSION};

use crate::error::CliError;
use crate::query::{answer, ErrorBody, ErrorDocument, Query};

#[derive(Clone, Debug, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub category: Category,
    pub format_version: u32,
    pub bundle_fingerprint: String,
    pub events_fingerprint: String,
    pub skipgram_events_fingerprint: Option<String>,
}

#[derive(Clone)]
struct AppState {
    bundle: Arc<ModelBundle>,
    health: Arc<Health>,
}

pub fn router(bundle: ModelBundle) -> Router {
    let health = Health {
        status: "ok",
        category: bundle.category.clone(),
        format_version: FORMAT_VERSION,
        bundle_fingerprint: bundle.fingerprint(),
        events_fingerprint: bundle.metadata.events_fingerprint.clone(),
        skipgram_events_fingerprint: bundle
            .metadata
            .skipgram
            .as_ref()
            .map(|s| s.events_fingerprint.clone()),
    };
    let state = AppState {
        bundle: Arc::new(bundle),
        health: Arc::new(health),
    };
    Router::new()
        .route("/recommend", post(recommend))
        .route("/healthz", get(healthz))
        .with_state(state)
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn render_error(doc: &ErrorDocument) -> String {
    let mut s = serde_json::to_string(doc).expect("error documents serialize");
    s.push('\n');
    s
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Response {
    let query: Query = match serde_json::from_slice(&body) {
        Ok(q) => q,
        Err(e) => {
            let doc = ErrorDocument {
                error: ErrorBody {
                    kind: "BadRequest".into(),
                    message: e.to_string(),
                },
            };
            return json_response(StatusCode::BAD_REQUEST, render_error(&doc));
        }
    };
    match answer(&state.bundle, &query) {
        Ok(a) => json_response(StatusCode::OK, a.render()),
        Err(e) => {
            let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::BAD_REQUEST);
            json_response(status, render_error(&e.to_document()))
        }
    }
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(state.health.as_ref().clone())
}

/// Bind, announce the bound address on standard output, then serve until
/// the process is killed.
pub fn serve_blocking(bundle: ModelBundle, listen: &str) -> Result<(), CliError> {
    let bind_err = |source| CliError::Bind {
        addr: listen.to_string(),
        source,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(bind_err)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(bind_err)?;
        let addr = listener.local_addr().map_err(bind_err)?;
        let mut out = std::io::stdout();
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
        axum::serve(listener, router(bundle))
            .await
            .map_err(bind_err)
    })
}
