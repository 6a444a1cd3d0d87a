//! HTTP routers for the public API and the administrative listener.

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use psytest_core::clock::Clock;
use psytest_core::package::{CONTENT_TYPE, MAX_CONTAINER_BYTES};
use psytest_core::{ApiError, ErrorCode, Platform};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::auth::{Researcher, TokenStore};

/// Everything a handler needs. Holds no per-node state beyond caches:
/// two nodes built over the same store behave identically.
#[derive(Debug, Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub tokens: Arc<TokenStore>,
    pub clock: Arc<dyn Clock>,
}

/// JSON error response.
pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        Self(e)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

type HttpResult<T> = Result<T, HttpError>;

/// Runs a platform call off the async executor; store writes may fsync.
async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&Platform) -> Result<T, ApiError> + Send + 'static,
) -> HttpResult<T> {
    let platform = Arc::clone(&state.platform);
    tokio::task::spawn_blocking(move || f(&platform))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("handler task failed: {e}")))?
        .map_err(HttpError)
}

fn researcher(state: &AppState, headers: &HeaderMap) -> HttpResult<Researcher> {
    let auth = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok());
    Ok(state.tokens.researcher(auth, state.clock.now())?)
}

/// A project id from the path. Ids that are not UUIDs cannot name a
/// project, so they are simply not found.
fn project_id(p: Result<Path<String>, PathRejection>) -> HttpResult<Uuid> {
    let Path(raw) = p.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    Uuid::parse_str(&raw).map_err(|_| HttpError(ApiError::not_found(format_args!("project {raw}"))))
}

fn too_large() -> HttpError {
    HttpError(ApiError::new(
        ErrorCode::PayloadTooLarge,
        format!("container exceeds {MAX_CONTAINER_BYTES} bytes"),
    ))
}

/// Reads a container body, enforcing the size cap while streaming.
async fn container_body(req: Request) -> HttpResult<Vec<u8>> {
    let declared = req
        .headers()
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    if declared.is_some_and(|n| n > MAX_CONTAINER_BYTES as u64) {
        return Err(too_large());
    }
    match axum::body::to_bytes(req.into_body(), MAX_CONTAINER_BYTES).await {
        Ok(b) => Ok(b.to_vec()),
        Err(e) => {
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if s.is::<http_body_util::LengthLimitError>() {
                    return Err(too_large());
                }
                source = s.source();
            }
            Err(ApiError::new(ErrorCode::BadRequest, format!("reading body: {e}")).into())
        }
    }
}

fn not_found_route() -> HttpError {
    HttpError(ApiError::new(ErrorCode::NotFound, "no such route"))
}

async fn fallback() -> HttpError {
    not_found_route()
}

pub fn public_router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/projects", post(create_project).get(list_projects))
        .route("/api/v1/projects/{id}", get(get_project))
        .route(
            "/api/v1/projects/{id}/package",
            post(attach_package).get(get_package),
        )
        .route(
            "/api/v1/projects/{id}/results",
            post(submit_results).get(list_results),
        )
        .route("/api/v1/projects/{id}/export.csv", get(export_csv))
        .fallback(fallback)
        .method_not_allowed_fallback(fallback)
        .layer(DefaultBodyLimit::disable())
        .with_state(state)
}

pub fn admin_router(state: AppState) -> Router {
    Router::new()
        .route("/admin/v1/projects/{id}/summary", get(admin_summary))
        .route("/admin/v1/projects/{id}/close", post(admin_close))
        .route("/admin/v1/shards", get(admin_shards))
        .fallback(fallback)
        .method_not_allowed_fallback(fallback)
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Response {
    let report = state.platform.health();
    let status = match report.status {
        psytest_core::service::HealthStatus::Fail => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::OK,
    };
    (status, Json(report)).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    title: String,
}

async fn create_project(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResult<Response> {
    let who = researcher(&state, &headers)?;
    let req: CreateProject = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid body: {e}")))?;
    if req.title.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::BadRequest, "title must not be empty").into());
    }
    let project = blocking(&state, move |p| p.create_project(&who.0, &req.title)).await?;
    Ok((StatusCode::CREATED, Json(project)).into_response())
}

#[derive(Serialize)]
struct ProjectList {
    projects: Vec<psytest_core::service::ResearchProject>,
}

async fn list_projects(State(state): State<AppState>, headers: HeaderMap) -> HttpResult<Response> {
    let who = researcher(&state, &headers)?;
    let projects = blocking(&state, move |p| p.list_projects(&who.0)).await?;
    Ok(Json(ProjectList { projects }).into_response())
}

async fn get_project(
    State(state): State<AppState>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> HttpResult<Response> {
    let who = researcher(&state, &headers)?;
    let id = project_id(path)?;
    let project = blocking(&state, move |p| p.get_project(id)).await?;
    if project.owner != who.0 {
        return Err(ApiError::new(ErrorCode::AuthForbidden, "project belongs to another researcher").into());
    }
    Ok(Json(project).into_response())
}

async fn attach_package(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
    req: Request,
) -> HttpResult<Response> {
    let who = researcher(&state, req.headers())?;
    let id = project_id(path)?;
    let bytes = container_body(req).await?;
    let project = blocking(&state, move |p| p.attach_package(&who.0, id, &bytes)).await?;
    Ok(Json(project).into_response())
}

async fn get_package(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
) -> HttpResult<Response> {
    let id = project_id(path)?;
    let bytes = blocking(&state, move |p| p.get_package(id)).await?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static(CONTENT_TYPE))],
        Body::from(bytes),
    )
        .into_response())
}

async fn submit_results(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
    req: Request,
) -> HttpResult<Response> {
    let id = project_id(path)?;
    let bytes = container_body(req).await?;
    let report = blocking(&state, move |p| p.submit_results(id, &bytes)).await?;
    Ok(Json(report).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Pagination {
    limit: Option<usize>,
    offset: Option<usize>,
}

async fn list_results(
    State(state): State<AppState>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
    query: Result<Query<Pagination>, QueryRejection>,
) -> HttpResult<Response> {
    let who = researcher(&state, &headers)?;
    let id = project_id(path)?;
    let Query(page) = query.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    let page = blocking(&state, move |p| p.list_results(&who.0, id, page.limit, page.offset)).await?;
    Ok(Json(page).into_response())
}

async fn export_csv(
    State(state): State<AppState>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> HttpResult<Response> {
    let who = researcher(&state, &headers)?;
    let id = project_id(path)?;
    let text = blocking(&state, move |p| p.export_csv(&who.0, id)).await?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"))],
        text,
    )
        .into_response())
}

async fn admin_summary(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
) -> HttpResult<Response> {
    let id = project_id(path)?;
    let summary = blocking(&state, move |p| p.population_summary(id)).await?;
    Ok(Json(summary).into_response())
}

async fn admin_close(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
) -> HttpResult<Response> {
    let id = project_id(path)?;
    let project = blocking(&state, move |p| p.close_project(id)).await?;
    Ok(Json(project).into_response())
}

async fn admin_shards(State(state): State<AppState>) -> Response {
    Json(state.platform.storage_view()).into_response()
}
