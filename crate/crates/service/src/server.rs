//! JSON-over-HTTP front end.
//!
//! Engine calls run on the blocking pool. Successful responses are cached by
//! the SHA-256 of the endpoint and the re-serialized request, so two bodies
//! that parse to the same request share an entry.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use statichedge::Error;

use crate::api::ErrorBody;
use crate::engine::Engine;

pub const DEFAULT_CACHE_CAPACITY: usize = 256;

/// Bounded map from request hash to response body, evicting the oldest entry.
#[derive(Debug)]
pub struct ResultCache {
    capacity: usize,
    inner: RwLock<CacheInner>,
}

#[derive(Debug, Default)]
struct CacheInner {
    map: HashMap<[u8; 32], Arc<Value>>,
    order: VecDeque<[u8; 32]>,
}

impl ResultCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, inner: RwLock::new(CacheInner::default()) }
    }

    pub fn get(&self, key: &[u8; 32]) -> Option<Arc<Value>> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).map.get(key).cloned()
    }

    pub fn insert(&self, key: [u8; 32], value: Arc<Value>) {
        if self.capacity == 0 {
            return;
        }
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        if inner.map.insert(key, value).is_none() {
            inner.order.push_back(key);
        }
        while inner.order.len() > self.capacity {
            if let Some(old) = inner.order.pop_front() {
                inner.map.remove(&old);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct AppState {
    pub engine: Engine,
    pub cache: ResultCache,
}

pub fn router(engine: Engine) -> Router {
    router_with_cache(engine, DEFAULT_CACHE_CAPACITY)
}

pub fn router_with_cache(engine: Engine, capacity: usize) -> Router {
    let state = Arc::new(AppState { engine, cache: ResultCache::new(capacity) });
    Router::new()
        .route("/market", get(market))
        .route("/solve", post(|s: State<Arc<AppState>>, b: Bytes| run(s, b, "solve", Engine::solve)))
        .route("/price", post(|s: State<Arc<AppState>>, b: Bytes| run(s, b, "price", Engine::price)))
        .route("/bounds", post(|s: State<Arc<AppState>>, b: Bytes| run(s, b, "bounds", Engine::bounds)))
        .route("/sweep", post(|s: State<Arc<AppState>>, b: Bytes| run(s, b, "sweep", Engine::sweep)))
        .route(
            "/distribution",
            post(|s: State<Arc<AppState>>, b: Bytes| run(s, b, "distribution", Engine::distribution)),
        )
        .with_state(state)
}

pub async fn serve(engine: Engine, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn market(State(state): State<Arc<AppState>>) -> Json<crate::api::MarketSummary> {
    Json(state.engine.market())
}

/// Parses `body`, serves it from the cache or the engine, and maps errors to
/// status codes.
async fn run<Req, Resp>(
    State(state): State<Arc<AppState>>,
    body: Bytes,
    endpoint: &'static str,
    call: fn(&Engine, &Req) -> statichedge::Result<Resp>,
) -> Response
where
    Req: DeserializeOwned + Serialize + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    let mut de = serde_json::Deserializer::from_slice(&body);
    let req: Req = match serde_path_to_error::deserialize(&mut de) {
        Ok(r) => r,
        Err(e) => {
            let path = e.path().to_string();
            let message = if path == "." {
                e.inner().to_string()
            } else {
                format!("{path}: {}", e.inner())
            };
            return error_response(StatusCode::BAD_REQUEST, "validation", message, None);
        }
    };
    let key = match request_key(endpoint, &req) {
        Ok(k) => k,
        Err(e) => return engine_error(e),
    };
    if let Some(hit) = state.cache.get(&key) {
        return Json(hit.as_ref().clone()).into_response();
    }
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        call(&worker.engine, &req).and_then(|r| {
            serde_json::to_value(r).map_err(|e| Error::Solver(format!("unserializable result: {e}")))
        })
    })
    .await;
    match outcome {
        Ok(Ok(value)) => {
            let value = Arc::new(value);
            state.cache.insert(key, value.clone());
            Json(value.as_ref().clone()).into_response()
        }
        Ok(Err(e)) => engine_error(e),
        Err(join) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            "solver",
            format!("engine task failed: {join}"),
            None,
        ),
    }
}

fn request_key<Req: Serialize>(endpoint: &str, req: &Req) -> statichedge::Result<[u8; 32]> {
    let bytes = serde_json::to_vec(req).map_err(|e| Error::Validation(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(endpoint.as_bytes());
    hasher.update([0u8]);
    hasher.update(&bytes);
    Ok(hasher.finalize().into())
}

/// HTTP status and error kind for an engine error.
pub fn classify(e: &Error) -> (StatusCode, &'static str) {
    match e {
        Error::Infeasible { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
        Error::Unpriceable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unpriceable"),
        Error::Solver(_) => (StatusCode::INTERNAL_SERVER_ERROR, "solver"),
        _ => (StatusCode::BAD_REQUEST, "validation"),
    }
}

fn engine_error(e: Error) -> Response {
    let (status, kind) = classify(&e);
    let regions = match &e {
        Error::Infeasible { regions } => Some(regions.clone()),
        _ => None,
    };
    error_response(status, kind, e.to_string(), regions)
}

fn error_response(
    status: StatusCode,
    kind: &str,
    message: String,
    regions: Option<Vec<(f64, f64)>>,
) -> Response {
    (status, Json(ErrorBody { error: kind.into(), message, regions })).into_response()
}
