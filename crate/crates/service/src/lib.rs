//! JSON API over a loaded property database and learner bundle.
//!
//! State is immutable once loaded; until then every API route answers 503.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;
use xpcr_core::data::Dataset;
use xpcr_core::metafeatures::dataset_features;
use xpcr_core::metalearn::LearnerBundle;
use xpcr_core::propertydb::PropertyDatabase;
use xpcr_core::recommender::{explain, recommend_features, star_profile, Mode};
use xpcr_core::scoring::WeightVector;
use xpcr_core::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub name: String,
    pub group: String,
    pub horizon: usize,
    pub num_series: usize,
}

struct Entry {
    info: DatasetInfo,
    features: Vec<f64>,
    in_db: bool,
}

/// Everything the handlers read. Built once, never mutated.
pub struct ServiceState {
    db: PropertyDatabase,
    bundle: LearnerBundle,
    registry: BTreeMap<String, Entry>,
}

impl ServiceState {
    /// Registers the DB datasets plus `extra` manifest-only datasets.
    pub fn new(db: PropertyDatabase, bundle: LearnerBundle, extra: &[Dataset]) -> xpcr_core::Result<Self> {
        if let Some(schema) = db.schema() {
            bundle.check_schema(schema)?;
        }
        let mut registry = BTreeMap::new();
        for (name, meta) in db.dataset_metas() {
            registry.insert(
                name.clone(),
                Entry {
                    info: DatasetInfo {
                        name: name.clone(),
                        group: meta.group.clone(),
                        horizon: meta.horizon,
                        num_series: meta.num_series,
                    },
                    features: meta.features.clone(),
                    in_db: true,
                },
            );
        }
        for d in extra {
            if registry.contains_key(&d.name) {
                continue;
            }
            registry.insert(
                d.name.clone(),
                Entry {
                    info: DatasetInfo {
                        name: d.name.clone(),
                        group: d.group.clone(),
                        horizon: d.horizon,
                        num_series: d.num_series(),
                    },
                    features: dataset_features(d),
                    in_db: false,
                },
            );
        }
        Ok(Self { db, bundle, registry })
    }

    fn entry(&self, dataset: &str) -> Result<&Entry, ApiError> {
        self.registry
            .get(dataset)
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{dataset}`")))
    }
}

pub type SharedState = Arc<OnceLock<ServiceState>>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                field: None,
            },
        }
    }

    fn not_found(error: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::UnknownDataset(_) | Error::UnknownModel(_) => StatusCode::NOT_FOUND,
            Error::InvalidWeights { .. } | Error::InvalidArgument(_) | Error::UnknownProperty(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let field = match e.root() {
            Error::InvalidWeights { field, .. } => Some(field.clone()),
            _ => None,
        };
        Self {
            status,
            body: ErrorBody {
                error: e.to_string(),
                field,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn loaded(state: &SharedState) -> Result<&ServiceState, ApiError> {
    state
        .get()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "state is still loading"))
}

async fn datasets(State(state): State<SharedState>) -> Result<Json<Vec<DatasetInfo>>, ApiError> {
    let s = loaded(&state)?;
    Ok(Json(s.registry.values().map(|e| e.info.clone()).collect()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub dataset: String,
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub k: Option<usize>,
}

fn parse_weights(w: Option<BTreeMap<String, f64>>) -> Result<WeightVector, ApiError> {
    match w {
        None => Ok(WeightVector::default()),
        Some(map) => Ok(WeightVector::from_pairs(map)?),
    }
}

async fn recommend_handler(
    State(state): State<SharedState>,
    body: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let s = loaded(&state)?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let entry = s.entry(&req.dataset)?;
    let weights = parse_weights(req.weights)?;
    let mut rec = recommend_features(
        &s.bundle,
        &req.dataset,
        &entry.features,
        &weights,
        req.mode.unwrap_or(Mode::Compositional),
    )?;
    if let Some(k) = req.k {
        rec = rec.truncate(k);
    }
    Ok(Json(rec).into_response())
}

#[derive(Debug, Deserialize)]
struct WeightsQuery {
    weights: Option<String>,
}

async fn explain_handler(
    State(state): State<SharedState>,
    Path((dataset, model)): Path<(String, String)>,
    Query(q): Query<WeightsQuery>,
) -> Result<Response, ApiError> {
    let s = loaded(&state)?;
    let entry = s.entry(&dataset)?;
    let weights = match q.weights.as_deref().filter(|w| !w.trim().is_empty()) {
        Some(spec) => WeightVector::parse_inline(spec)?,
        None => WeightVector::default(),
    };
    Ok(Json(explain(&s.bundle, &dataset, &entry.features, &model, &weights)?).into_response())
}

#[derive(Debug, Deserialize)]
struct ModelsQuery {
    models: Option<String>,
}

async fn star_handler(
    State(state): State<SharedState>,
    Path(dataset): Path<String>,
    Query(q): Query<ModelsQuery>,
) -> Result<Response, ApiError> {
    let s = loaded(&state)?;
    let entry = s.entry(&dataset)?;
    let models: Vec<&str> = match q.models.as_deref() {
        Some(list) if !list.trim().is_empty() => list.split(',').map(str::trim).collect(),
        _ => s.bundle.schema.pool.keys().iter().map(String::as_str).collect(),
    };
    let db = entry.in_db.then_some(&s.db);
    let profile = star_profile(&dataset, &models, db, Some((&s.bundle, entry.features.as_slice())))?;
    Ok(Json(profile).into_response())
}

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>xpcr</title></head>\
<body><p>No UI assets configured. The JSON API is under <code>/api</code>.</p></body></html>\n";

/// API routes, CORS and the static UI (or a placeholder page) at `/`.
pub fn router(state: SharedState, static_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/api/datasets", get(datasets))
        .route("/api/recommend", post(recommend_handler))
        .route("/api/explain/{dataset}/{model}", get(explain_handler))
        .route("/api/star/{dataset}", get(star_handler))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    app.layer(cors)
}

/// Binds `addr`, answers 503 while `load` runs on a blocking thread, then serves.
pub async fn serve<F>(addr: SocketAddr, static_dir: Option<PathBuf>, load: F) -> std::io::Result<()>
where
    F: FnOnce() -> xpcr_core::Result<ServiceState> + Send + 'static,
{
    let state: SharedState = Arc::new(OnceLock::new());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let slot = state.clone();
    let loader = tokio::task::spawn_blocking(move || load().map(|s| slot.set(s).is_ok()));
    let server = std::future::IntoFuture::into_future(axum::serve(listener, router(state, static_dir)));
    tokio::pin!(server);
    tokio::select! {
        res = &mut server => return res,
        loaded = loader => match loaded {
            Ok(Ok(_)) => log::info!("state loaded"),
            Ok(Err(e)) => return Err(std::io::Error::other(e.to_string())),
            Err(e) => return Err(std::io::Error::other(e)),
        },
    }
    server.await
}
