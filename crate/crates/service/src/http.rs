//! HTTP routes.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::response::{IntoResponse, Response};
use axum::routing::{post, put};
use axum::{Json, Router};
use serde_json::json;

use crate::engine::Engine;
use crate::error::{Result, ServiceError};
use crate::wire::{parse_body, MTableQuery, MTableRequest, ModelRecord, SearchRequest};

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/_fairsearch/mtable", put(create_mtable).get(get_mtable))
        .route("/_fairsearch/model", post(upload_model))
        .route("/{index}/_search", post(search).get(search))
        .route("/{index}/_ingest", post(ingest))
        .with_state(engine)
}

/// Runs blocking engine work (locks, fsync) off the async workers.
async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e)))?
}

async fn search(State(engine): State<Arc<Engine>>, Path(index): Path<String>, body: String) -> Result<Response> {
    let request: SearchRequest = parse_body(&body)?;
    let response = blocking(engine, move |e| e.search(&index, &request)).await?;
    Ok(Json(response).into_response())
}

async fn ingest(State(engine): State<Arc<Engine>>, Path(index): Path<String>, body: String) -> Result<Response> {
    let name = index.clone();
    let count = blocking(engine, move |e| e.ingest(&name, &body)).await?;
    Ok(Json(json!({"index": index, "indexed": count})).into_response())
}

async fn upload_model(State(engine): State<Arc<Engine>>, body: String) -> Result<Response> {
    let record: ModelRecord = parse_body(&body)?;
    let stored = blocking(engine, move |e| e.upload_model(record)).await?;
    Ok(Json(json!({
        "acknowledged": true,
        "model_name": stored.model_name,
        "feature_set": stored.feature_set,
    }))
    .into_response())
}

async fn create_mtable(State(engine): State<Arc<Engine>>, body: String) -> Result<Response> {
    let request: MTableRequest = parse_body(&body)?;
    let table = blocking(engine, move |e| e.create_mtable(&request)).await?;
    Ok(Json(&*table).into_response())
}

async fn get_mtable(
    State(engine): State<Arc<Engine>>,
    query: std::result::Result<Query<MTableQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    match engine.get_mtable(q.k, q.p, q.alpha) {
        Some(table) => Ok(Json(&*table).into_response()),
        None => Ok(ServiceError::NotFound(format!("no mtable for k={} p={} alpha={}", q.k, q.p, q.alpha)).into_response()),
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

