//! Turning predicted affect into a music query and fetching tracks.
//!
//! The wire format follows the common recommendations-endpoint convention:
//! `GET {base}/recommendations?seed_genres=a,b&target_valence=0.750&...`.
//! The bundled [`mock`] provider speaks the same protocol, so tests and demos
//! run offline by pointing `RECOMMENDER_BASE_URL` at it.

pub mod mock;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::data::Emotion;

pub const DEFAULT_LIMIT: usize = 5;
pub const SEEDS_PER_EMOTION: usize = 5;
const DEFAULT_GENRE_MAP: &str = include_str!("../../assets/genre_map.json");

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("genre map: {0}")]
    GenreMap(String),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("provider rejected credentials ({status}): {body}")]
    Auth { status: u16, body: String },
    #[error("provider returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider unreachable after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

pub type RecommendResult<T> = std::result::Result<T, RecommendError>;

/// Output of the two prediction heads combined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffectPrediction {
    pub emotion_probs: Vec<f64>,
    pub emotion: Emotion,
    pub valence: f64,
    pub arousal: f64,
}

impl AffectPrediction {
    /// Takes the emotion as the argmax of `emotion_probs` and clamps valence
    /// and arousal into [-1, 1].
    pub fn new(emotion_probs: Vec<f64>, valence: f64, arousal: f64) -> RecommendResult<Self> {
        if emotion_probs.len() != Emotion::ALL.len() || emotion_probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(RecommendError::InvalidPrediction("expected eight non-negative class probabilities".into()));
        }
        if !valence.is_finite() || !arousal.is_finite() {
            return Err(RecommendError::InvalidPrediction("valence and arousal must be finite".into()));
        }
        let best = emotion_probs.iter().enumerate().fold(0, |b, (i, &p)| if p > emotion_probs[b] { i } else { b });
        Ok(Self {
            emotion: Emotion::from_id(best).expect("eight classes"),
            emotion_probs,
            valence: valence.clamp(-1.0, 1.0),
            arousal: arousal.clamp(-1.0, 1.0),
        })
    }

    /// A prediction with all probability mass on `emotion`.
    pub fn certain(emotion: Emotion, valence: f64, arousal: f64) -> RecommendResult<Self> {
        let mut probs = vec![0.0; Emotion::ALL.len()];
        probs[emotion.id()] = 1.0;
        Self::new(probs, valence, arousal)
    }
}

/// Five seed genres for each of the eight emotions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct GenreMap {
    seeds: BTreeMap<Emotion, Vec<String>>,
}

impl TryFrom<BTreeMap<String, Vec<String>>> for GenreMap {
    type Error = RecommendError;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> RecommendResult<Self> {
        let mut seeds = BTreeMap::new();
        for (name, genres) in raw {
            let emotion: Emotion = name.parse().map_err(|_| RecommendError::GenreMap(format!("unknown emotion {name:?}")))?;
            if genres.len() != SEEDS_PER_EMOTION || genres.iter().any(|g| g.trim().is_empty()) {
                return Err(RecommendError::GenreMap(format!("{name} needs exactly {SEEDS_PER_EMOTION} non-empty genres")));
            }
            seeds.insert(emotion, genres);
        }
        if let Some(missing) = Emotion::ALL.iter().find(|e| !seeds.contains_key(e)) {
            return Err(RecommendError::GenreMap(format!("no genres for {missing}")));
        }
        Ok(Self { seeds })
    }
}

impl From<GenreMap> for BTreeMap<String, Vec<String>> {
    fn from(map: GenreMap) -> Self {
        map.seeds.into_iter().map(|(e, g)| (e.name().to_string(), g)).collect()
    }
}

impl Default for GenreMap {
    fn default() -> Self {
        Self::from_json(DEFAULT_GENRE_MAP).expect("bundled genre map is valid")
    }
}

impl GenreMap {
    pub fn from_json(text: &str) -> RecommendResult<Self> {
        serde_json::from_str(text).map_err(|e| RecommendError::GenreMap(e.to_string()))
    }

    pub fn load(path: &Path) -> RecommendResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RecommendError::GenreMap(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads `GENRE_MAP_PATH` when set, otherwise the bundled default.
    pub fn from_env() -> RecommendResult<Self> {
        match std::env::var_os("GENRE_MAP_PATH") {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn seeds(&self, emotion: Emotion) -> &[String] {
        &self.seeds[&emotion]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    pub fn wire_value(self) -> u8 {
        match self {
            Mode::Major => 1,
            Mode::Minor => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationQuery {
    pub seed_genres: Vec<String>,
    pub target_valence: f64,
    pub target_energy: f64,
    pub mode: Mode,
    pub limit: usize,
}

/// Maps valence and arousal from [-1, 1] onto [0, 1]; arousal becomes
/// energy. Zero valence counts as major.
pub fn build_query(pred: &AffectPrediction, genres: &GenreMap, limit: usize) -> RecommendResult<RecommendationQuery> {
    if limit == 0 {
        return Err(RecommendError::Config("limit must be positive".into()));
    }
    let seed_genres = genres.seeds(pred.emotion).iter().take(SEEDS_PER_EMOTION).cloned().collect();
    let to_unit = |x: f64| ((x.clamp(-1.0, 1.0) + 1.0) / 2.0).clamp(0.0, 1.0);
    Ok(RecommendationQuery {
        seed_genres,
        target_valence: to_unit(pred.valence),
        target_energy: to_unit(pred.arousal),
        mode: if pred.valence >= 0.0 { Mode::Major } else { Mode::Minor },
        limit,
    })
}

impl RecommendationQuery {
    /// Query parameters in wire order, values unencoded.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed_genres", self.seed_genres.join(",")),
            ("target_valence", format!("{:.3}", self.target_valence)),
            ("target_energy", format!("{:.3}", self.target_energy)),
            ("target_mode", self.mode.wire_value().to_string()),
            ("limit", self.limit.to_string()),
        ]
    }

    /// Percent-encoded query string, without the leading `?`.
    pub fn to_query_string(&self) -> String {
        url::form_urlencoded::Serializer::new(String::new()).extend_pairs(self.params()).finish()
    }

    /// Inverse of [`Self::params`], used by the mock provider.
    pub fn from_params<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> RecommendResult<Self> {
        let map: BTreeMap<&str, &str> = pairs.into_iter().collect();
        let get = |k: &str| map.get(k).copied().ok_or_else(|| RecommendError::Malformed(format!("missing {k}")));
        let num = |k: &str| -> RecommendResult<f64> {
            get(k)?.parse().map_err(|_| RecommendError::Malformed(format!("{k} is not a number")))
        };
        let seed_genres: Vec<String> = get("seed_genres")?.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
        if seed_genres.is_empty() || seed_genres.len() > SEEDS_PER_EMOTION {
            return Err(RecommendError::Malformed("seed_genres needs one to five genres".into()));
        }
        let mode = match get("target_mode")? {
            "1" => Mode::Major,
            "0" => Mode::Minor,
            other => return Err(RecommendError::Malformed(format!("target_mode {other:?}"))),
        };
        let limit = map.get("limit").map_or(Ok(DEFAULT_LIMIT), |l| l.parse().map_err(|_| RecommendError::Malformed("limit".into())))?;
        Ok(Self { seed_genres, target_valence: num("target_valence")?, target_energy: num("target_energy")?, mode, limit })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub title: String,
    pub artist: String,
    pub external_url: String,
}

#[derive(Clone, Debug)]
pub struct ProviderConfig {
    /// Endpoint prefix; `recommendations` is appended.
    pub base_url: Url,
    pub token: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl ProviderConfig {
    pub fn new(base_url: &str) -> RecommendResult<Self> {
        let mut base_url = Url::parse(base_url).map_err(|e| RecommendError::Config(format!("{base_url:?}: {e}")))?;
        if !base_url.path().ends_with('/') {
            let path = format!("{}/", base_url.path());
            base_url.set_path(&path);
        }
        Ok(Self {
            base_url,
            token: None,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(2),
            timeout: Duration::from_secs(10),
        })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    /// Reads `RECOMMENDER_BASE_URL` (required) and `RECOMMENDER_TOKEN`.
    pub fn from_env() -> RecommendResult<Self> {
        let base = std::env::var("RECOMMENDER_BASE_URL")
            .map_err(|_| RecommendError::Config("RECOMMENDER_BASE_URL is not set".into()))?;
        let mut cfg = Self::new(&base)?;
        cfg.token = std::env::var("RECOMMENDER_TOKEN").ok().filter(|t| !t.is_empty());
        Ok(cfg)
    }

    pub fn request_url(&self, query: &RecommendationQuery) -> Url {
        let mut url = self.base_url.join("recommendations").expect("relative path joins");
        url.set_query(Some(&query.to_query_string()));
        url
    }

    /// Delay before retry number `retry` (1-based): doubling, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Deserialize)]
struct WireResponse {
    tracks: Vec<WireTrack>,
}

#[derive(Deserialize)]
struct WireTrack {
    id: String,
    name: String,
    #[serde(default)]
    artists: Vec<WireArtist>,
    #[serde(default)]
    external_urls: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct WireArtist {
    name: String,
}

/// Parses a provider response body, keeping provider order, dropping
/// repeated ids and truncating to `limit`.
pub fn parse_tracks(body: &[u8], limit: usize) -> RecommendResult<Vec<Track>> {
    let wire: WireResponse = serde_json::from_slice(body).map_err(|e| RecommendError::Malformed(e.to_string()))?;
    let mut seen = HashSet::new();
    Ok(wire
        .tracks
        .into_iter()
        .filter(|t| seen.insert(t.id.clone()))
        .take(limit)
        .map(|t| Track {
            artist: t.artists.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", "),
            external_url: t.external_urls.values().next().cloned().unwrap_or_default(),
            id: t.id,
            title: t.name,
        })
        .collect())
}

/// Requests tracks for `query`. Connection failures, 429 and 5xx responses
/// are retried up to `max_attempts` with capped exponential backoff; 401 and
/// 403 fail immediately, as do other 4xx responses.
pub async fn fetch(query: &RecommendationQuery, config: &ProviderConfig) -> RecommendResult<Vec<Track>> {
    let client = reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| RecommendError::Config(e.to_string()))?;
    let url = config.request_url(query);
    let attempts = config.max_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            tokio::time::sleep(config.backoff(attempt - 1)).await;
        }
        let mut request = client.get(url.clone());
        if let Some(token) = &config.token {
            request = request.bearer_auth(token);
        }
        let response = match request.send().await {
            Ok(r) => r,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        let status = response.status().as_u16();
        let body = response.bytes().await.map_err(|e| RecommendError::Network { attempts: attempt, message: e.to_string() });
        let body = match body {
            Ok(b) => b,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        let text = || String::from_utf8_lossy(&body).into_owned();
        match status {
            200..=299 => return parse_tracks(&body, query.limit),
            401 | 403 => return Err(RecommendError::Auth { status, body: text() }),
            429 | 500..=599 => last_error = format!("status {status}: {}", text()),
            _ => return Err(RecommendError::Http { status, body: text() }),
        }
    }
    Err(RecommendError::Network { attempts, message: last_error })
}
