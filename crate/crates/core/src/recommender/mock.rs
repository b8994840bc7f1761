//! Offline stand-in for a recommendations provider.
//!
//! [`MockCatalog`] ranks a seeded synthetic catalog by distance to the target
//! valence/energy; [`MockProvider`] serves it over HTTP with the same wire
//! format [`super::fetch`] expects, and can inject failures for tests.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{RawQuery, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use rand::Rng;
use serde_json::json;
use tokio::task::JoinHandle;

use super::{RecommendationQuery, Track};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub track: Track,
    pub valence: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockCatalog {
    entries: Vec<CatalogEntry>,
}

const ADJECTIVES: [&str; 8] = ["Quiet", "Electric", "Golden", "Broken", "Velvet", "Restless", "Silver", "Midnight"];
const NOUNS: [&str; 8] = ["Harbour", "Signal", "Orchard", "Engine", "Lantern", "Tide", "Circuit", "Meadow"];

impl MockCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Self {
        Self { entries }
    }

    /// `size` tracks with valence and energy drawn uniformly from [0, 1].
    pub fn seeded(seed: u64, size: usize) -> Self {
        let mut rng = SeededRng::new(seed);
        let entries = (0..size)
            .map(|i| {
                let (valence, energy) = (rng.random::<f64>(), rng.random::<f64>());
                let title = format!("{} {}", ADJECTIVES[rng.random_range(0..8)], NOUNS[rng.random_range(0..8)]);
                let id = format!("mock{i:05}");
                CatalogEntry {
                    track: Track {
                        external_url: format!("https://music.example/track/{id}"),
                        artist: format!("Artist {}", i % 37),
                        title,
                        id,
                    },
                    valence,
                    energy,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Closest `query.limit` entries in (valence, energy), ties broken by id.
    pub fn recommend(&self, query: &RecommendationQuery) -> Vec<Track> {
        let dist = |e: &CatalogEntry| (e.valence - query.target_valence).powi(2) + (e.energy - query.target_energy).powi(2);
        let mut ranked: Vec<&CatalogEntry> = self.entries.iter().collect();
        ranked.sort_by(|a, b| dist(a).total_cmp(&dist(b)).then_with(|| a.track.id.cmp(&b.track.id)));
        ranked.into_iter().take(query.limit).map(|e| e.track.clone()).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct MockOptions {
    /// When set, requests without `Authorization: Bearer <token>` get 401.
    pub required_token: Option<String>,
    /// Answer this many requests with 503 before serving normally.
    pub fail_first: usize,
}

struct Shared {
    catalog: MockCatalog,
    options: MockOptions,
    failures_left: AtomicUsize,
    requests: Mutex<Vec<String>>,
}

/// A running mock provider bound to a loopback port.
pub struct MockProvider {
    addr: SocketAddr,
    shared: Arc<Shared>,
    task: JoinHandle<()>,
}

impl MockProvider {
    pub async fn start(catalog: MockCatalog, options: MockOptions) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        Self::start_on(listener, catalog, options).await
    }

    pub async fn start_on(listener: tokio::net::TcpListener, catalog: MockCatalog, options: MockOptions) -> std::io::Result<Self> {
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            failures_left: AtomicUsize::new(options.fail_first),
            catalog,
            options,
            requests: Mutex::new(Vec::new()),
        });
        let app = router(Arc::clone(&shared));
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self { addr, shared, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to hand to [`super::ProviderConfig::new`].
    pub fn base_url(&self) -> String {
        format!("http://{}/v1/", self.addr)
    }

    /// Raw query strings received so far, in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.shared.requests.lock().expect("request log poisoned").clone()
    }
}

impl Drop for MockProvider {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Router for the mock endpoint, for embedding in another server.
pub fn mock_router(catalog: MockCatalog, options: MockOptions) -> Router {
    router(Arc::new(Shared {
        failures_left: AtomicUsize::new(options.fail_first),
        catalog,
        options,
        requests: Mutex::new(Vec::new()),
    }))
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new().route("/v1/recommendations", get(recommendations)).with_state(shared)
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": { "status": status.as_u16(), "message": message } }))).into_response()
}

async fn recommendations(State(shared): State<Arc<Shared>>, headers: HeaderMap, RawQuery(raw): RawQuery) -> Response {
    let raw = raw.unwrap_or_default();
    shared.requests.lock().expect("request log poisoned").push(raw.clone());
    if let Some(token) = &shared.options.required_token {
        let expected = format!("Bearer {token}");
        if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
            return error(StatusCode::UNAUTHORIZED, "invalid access token".into());
        }
    }
    let failing = shared
        .failures_left
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if failing {
        return error(StatusCode::SERVICE_UNAVAILABLE, "temporarily unavailable".into());
    }
    let pairs: Vec<(String, String)> = url::form_urlencoded::parse(raw.as_bytes()).into_owned().collect();
    let query = match RecommendationQuery::from_params(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))) {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let tracks: Vec<_> = shared
        .catalog
        .recommend(&query)
        .into_iter()
        .map(|t| {
            let urls: BTreeMap<&str, String> = [("spotify", t.external_url)].into();
            json!({ "id": t.id, "name": t.title, "artists": [{ "name": t.artist }], "external_urls": urls })
        })
        .collect();
    Json(json!({ "tracks": tracks, "seeds": query.seed_genres })).into_response()
}

#[cfg(test)]
mod tests {
    use super::super::Mode;
    use super::*;

    fn query(v: f64, e: f64, limit: usize) -> RecommendationQuery {
        RecommendationQuery { seed_genres: vec!["pop".into()], target_valence: v, target_energy: e, mode: Mode::Major, limit }
    }

    #[test]
    fn ranking_is_deterministic_and_limited() {
        let catalog = MockCatalog::seeded(3, 200);
        let a = catalog.recommend(&query(0.4, 0.7, 5));
        assert_eq!(a.len(), 5);
        assert_eq!(a, MockCatalog::seeded(3, 200).recommend(&query(0.4, 0.7, 5)));
        assert_eq!(catalog.recommend(&query(0.4, 0.7, 1)).len(), 1);
    }

    #[test]
    fn exact_match_ranks_first() {
        let mut catalog = MockCatalog::seeded(9, 100);
        let target = catalog.entries()[42].clone();
        catalog.entries.swap(0, 42);
        let top = catalog.recommend(&query(target.valence, target.energy, 5));
        assert_eq!(top[0], target.track);
    }
}
