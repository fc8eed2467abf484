//! HTTP shell around [`becaptcha::bundle::verify`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use becaptcha::bundle::{verify, ModelBundle, VerifyRequest};
use serde_json::json;

/// Routes over a shared, read-only bundle.
pub fn router(bundle: Arc<ModelBundle>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { StatusCode::OK }))
        .route("/verify", post(verify_handler))
        .with_state(bundle)
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message }))).into_response()
}

// The body is parsed by hand so that every malformed request, syntactic or
// structural, gets a 400 rather than axum's 422.
async fn verify_handler(State(bundle): State<Arc<ModelBundle>>, body: Bytes) -> Response {
    let req: VerifyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(format!("invalid request body: {e}")),
    };
    match verify(&bundle, &req) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => bad_request(e.to_string()),
    }
}

/// Serves until the process is stopped. Prints the bound address on
/// stdout first, which matters when binding port 0.
pub async fn serve(listener: tokio::net::TcpListener, bundle: Arc<ModelBundle>) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    use std::io::Write;
    std::io::stdout().flush()?;
    log::info!("serving model {} on {addr}", bundle.model_version);
    axum::serve(listener, router(bundle)).await
}
