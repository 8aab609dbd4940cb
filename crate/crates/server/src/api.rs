//! HTTP+JSON API over the site store. Writes go through one lock holder at a
//! time; reads share the lock and see a consistent state.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::RwLock;
use wastemap_core::dataengine::LabelRecord;

use crate::store::{ReviewRequest, SiteFilter, SiteRecord, Store, StoreError};

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<RwLock<Store>>,
    pub imagery_url: String,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sites", get(list_sites))
        .route("/sites/:id", get(get_site))
        .route("/sites/:id/contours", get(get_contours))
        .route("/sites/:id/review", post(review))
        .route("/config", get(client_config))
        .with_state(state)
}

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match &self.0 {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": self.0.to_string() })),
            StoreError::BadBbox(_) => (StatusCode::BAD_REQUEST, json!({ "error": self.0.to_string() })),
            StoreError::Conflict { existing, .. } => (
                StatusCode::CONFLICT,
                json!({ "error": self.0.to_string(), "existing_decision": existing }),
            ),
            _ => {
                log::error!("store failure: {}", self.0);
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": self.0.to_string() }))
            }
        };
        (status, Json(body)).into_response()
    }
}

async fn list_sites(State(s): State<AppState>, Query(filter): Query<SiteFilter>) -> Result<Json<Vec<SiteRecord>>, ApiError> {
    Ok(Json(s.store.read().await.list_sites(&filter)?))
}

async fn get_site(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<SiteRecord>, ApiError> {
    Ok(Json(s.store.read().await.get(&id)?.clone()))
}

async fn get_contours(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<geojson::FeatureCollection>, ApiError> {
    Ok(Json(s.store.read().await.contours(&id)?))
}

#[derive(Debug, Serialize)]
struct ReviewResponse {
    site: SiteRecord,
    label: LabelRecord,
}

async fn review(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ReviewRequest>,
) -> Result<Json<ReviewResponse>, ApiError> {
    let (site, label) = s.store.write().await.submit_review(&id, req)?;
    Ok(Json(ReviewResponse { site, label }))
}

async fn client_config(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "imagery_url": s.imagery_url }))
}

pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
