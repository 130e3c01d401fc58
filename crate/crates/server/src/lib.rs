//! HTTP/JSON front end for [`gse_core::registry::Registry`].
//!
//! Schema documents and STL documents travel as plain UTF-8 bodies or JSON
//! string fields; framed records travel as raw bytes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use gse_core::assembler::CompileError;
use gse_core::planner::{Engine, PlannerConfig};
use gse_core::registry::{Decision, MappingView, Registry, RegistryError};
use gse_core::schema::CompatibilityMode;

pub const CONSUMER_HEADER: &str = "x-consumer-schema-id";
pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8081";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Event log; `None` keeps state in memory only.
    pub store_path: Option<PathBuf>,
    pub listen_addr: String,
    pub planner: PlannerConfig,
}

impl ServerConfig {
    /// Reads `GSE_STORE_PATH`, `GSE_LISTEN_ADDR`, `GSE_MODEL_URL` and `GSE_MODEL_KEY`.
    pub fn from_env() -> ServerConfig {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        ServerConfig {
            store_path: var("GSE_STORE_PATH").map(PathBuf::from),
            listen_addr: var("GSE_LISTEN_ADDR").unwrap_or_else(|| DEFAULT_LISTEN_ADDR.into()),
            planner: PlannerConfig::from_env(),
        }
    }

    pub fn open_registry(&self) -> Result<Registry, RegistryError> {
        match &self.store_path {
            Some(p) => Registry::open(p, self.planner.clone()),
            None => Ok(Registry::in_memory(self.planner.clone())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// API error: status plus a JSON body `{error, message, ...}`.
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": "bad-request", "message": message.into()}),
        }
    }
}

fn status_of(e: &RegistryError) -> StatusCode {
    use RegistryError as E;
    match e {
        E::UnknownSchema(_) | E::UnknownSubject(_) | E::UnknownVersion { .. } | E::NoMapping(..) => StatusCode::NOT_FOUND,
        E::Incompatible(_)
        | E::MappingExists(..)
        | E::NoPendingMapping(..)
        | E::Unapprovable(_)
        | E::NoApprovedMapping(..) => StatusCode::CONFLICT,
        E::Schema(_)
        | E::SubjectMismatch { .. }
        | E::VersionOutOfSequence { .. }
        | E::Program(_)
        | E::ProgramRequired
        | E::Frame(_)
        | E::Payload { .. }
        | E::Compile(CompileError::UnknownBackend(_)) => StatusCode::BAD_REQUEST,
        E::Compile(_) | E::Transform { .. } | E::Planner(_) => StatusCode::UNPROCESSABLE_ENTITY,
        E::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> ApiError {
        let mut body = json!({"error": e.code(), "message": e.to_string()});
        match &e {
            RegistryError::Incompatible(report) => body["report"] = json!(report),
            RegistryError::Compile(CompileError::Unvalidated(d)) => body["diagnostics"] = json!(d),
            RegistryError::Compile(CompileError::Untranslatable { problems, .. }) => {
                body["problems"] = json!(problems)
            }
            RegistryError::Transform { source, .. } => body["kind"] = json!(source.kind.as_str()),
            _ => {}
        }
        let status = match &e {
            RegistryError::Planner(gse_core::planner::PlanError::Transport(_)) => StatusCode::BAD_GATEWAY,
            other => status_of(other),
        };
        ApiError { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<Registry>;

fn text(body: Bytes) -> ApiResult<String> {
    String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8"))
}

async fn blocking<T, F>(registry: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Registry) -> Result<T, RegistryError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&registry))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({"error": "internal", "message": e.to_string()}),
        })?
        .map_err(ApiError::from)
}

// ---------------------------------------------------------------------------
// handlers

async fn health() -> &'static str {
    "ok"
}

async fn register(State(r): State<Shared>, Path(subject): Path<String>, body: Bytes) -> ApiResult<Response> {
    let doc = text(body)?;
    let reg = blocking(r, move |r| r.register_schema(&subject, &doc)).await?;
    let status = if reg.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(reg)).into_response())
}

async fn list_subjects(State(r): State<Shared>) -> Json<Vec<String>> {
    Json(r.subjects())
}

async fn list_versions(State(r): State<Shared>, Path(subject): Path<String>) -> ApiResult<Response> {
    Ok(Json(r.versions(&subject)?).into_response())
}

async fn get_version(State(r): State<Shared>, Path((subject, v)): Path<(String, String)>) -> ApiResult<Response> {
    let view = if v == "latest" {
        r.versions(&subject)?.pop().expect("non-empty")
    } else {
        let n: u32 = v.parse().map_err(|_| ApiError::bad_request(format!("bad version `{v}`")))?;
        r.schema_version(&subject, n)?
    };
    Ok(Json(view).into_response())
}

async fn get_schema(State(r): State<Shared>, Path(id): Path<u32>) -> ApiResult<Response> {
    Ok(Json(r.schema(id)?).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigBody {
    pub compatibility: CompatibilityMode,
}

async fn get_config(State(r): State<Shared>, Path(subject): Path<String>) -> Json<ConfigBody> {
    Json(ConfigBody {
        compatibility: r.mode(&subject),
    })
}

async fn put_config(
    State(r): State<Shared>,
    Path(subject): Path<String>,
    Json(body): Json<ConfigBody>,
) -> ApiResult<Json<ConfigBody>> {
    let mode = body.compatibility;
    blocking(r, move |r| r.set_mode(&subject, mode)).await?;
    Ok(Json(body))
}

async fn compat(State(r): State<Shared>, Path(subject): Path<String>, body: Bytes) -> ApiResult<Response> {
    let doc = text(body)?;
    Ok(Json(r.check_compat(&subject, &doc)?).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateMapping {
    pub source_id: u32,
    pub target_id: u32,
    pub engine: Engine,
    /// STL document, required for the manual engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
}

async fn create_mapping(State(r): State<Shared>, Json(req): Json<CreateMapping>) -> ApiResult<Response> {
    let m = blocking(r, move |r| {
        r.create_mapping(req.source_id, req.target_id, req.engine, req.program.as_deref())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(MappingView::from(&m))).into_response())
}

async fn get_mapping(State(r): State<Shared>, Path((s, t)): Path<(u32, u32)>) -> ApiResult<Json<MappingView>> {
    Ok(Json(MappingView::from(&r.mapping(s, t)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
}

async fn decide(
    State(r): State<Shared>,
    Path((s, t)): Path<(u32, u32)>,
    Json(body): Json<DecisionBody>,
) -> ApiResult<Json<MappingView>> {
    let m = blocking(r, move |r| r.decide_mapping(s, t, body.decision)).await?;
    Ok(Json(MappingView::from(&m)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompileBody {
    pub backend: String,
}

async fn compile(
    State(r): State<Shared>,
    Path((s, t)): Path<(u32, u32)>,
    Json(body): Json<CompileBody>,
) -> ApiResult<Response> {
    Ok(Json(r.compile(s, t, &body.backend)?).into_response())
}

async fn transform(State(r): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let consumer = headers
        .get(CONSUMER_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| ApiError::bad_request("missing or invalid X-Consumer-Schema-Id header"))?;
    let out = r.transform_framed(&body, consumer)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], out).into_response())
}

pub fn router(registry: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/subjects", get(list_subjects))
        .route("/subjects/{subject}/versions", post(register).get(list_versions))
        .route("/subjects/{subject}/versions/{version}", get(get_version))
        .route("/schemas/{id}", get(get_schema))
        .route("/config/{subject}", get(get_config).put(put_config))
        .route("/compat/{subject}", post(compat))
        .route("/mappings", post(create_mapping))
        .route("/mappings/{source_id}/{target_id}", get(get_mapping))
        .route("/mappings/{source_id}/{target_id}/decision", post(decide))
        .route("/mappings/{source_id}/{target_id}/compile", post(compile))
        .route("/transform", post(transform))
        .with_state(registry)
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(registry: Shared, addr: &str) -> Result<(SocketAddr, tokio::task::JoinHandle<()>), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServerError::Bind {
        addr: addr.into(),
        source,
    })?;
    let local = listener.local_addr()?;
    let app = router(registry);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((local, handle))
}

/// Opens the store and serves until Ctrl-C. `on_ready` sees the bound address.
pub async fn serve(config: ServerConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), ServerError> {
    let registry = Arc::new(config.open_registry()?);
    let listener = tokio::net::TcpListener::bind(&config.listen_addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: config.listen_addr.clone(),
            source,
        })?;
    on_ready(listener.local_addr()?);
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gse_core::planner::PlanError;

    #[test]
    fn error_statuses_and_bodies() {
        let e = ApiError::from(RegistryError::UnknownSchema(9));
        assert_eq!(e.status, StatusCode::NOT_FOUND);
        assert_eq!(e.body["error"], "unknown-schema");
        assert_eq!(ApiError::from(RegistryError::MappingExists(1, 2)).status, StatusCode::CONFLICT);
        let e = ApiError::from(RegistryError::VersionOutOfSequence {
            subject: "s".into(),
            declared: 3,
            expected: 2,
        });
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        let e = ApiError::from(RegistryError::Planner(PlanError::Transport("refused".into())));
        assert_eq!(e.status, StatusCode::BAD_GATEWAY);
        let e = ApiError::from(RegistryError::Compile(CompileError::Unvalidated(vec![])));
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert!(e.body["diagnostics"].is_array());
    }

    #[tokio::test]
    async fn binds_an_ephemeral_port() {
        let (addr, handle) = spawn(Arc::new(Registry::in_memory(PlannerConfig::default())), "127.0.0.1:0")
            .await
            .unwrap();
        assert_ne!(addr.port(), 0);
        handle.abort();
        assert!(matches!(
            spawn(Arc::new(Registry::in_memory(PlannerConfig::default())), "127.0.0.1:99999").await,
            Err(ServerError::Bind { .. })
        ));
    }
}
