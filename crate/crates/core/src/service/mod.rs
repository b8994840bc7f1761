//! The `/v1` HTTP API: prediction, recommendation and study ratings.
//!
//! Uploaded images are decoded in memory and dropped after inference; only
//! rating records are ever written to disk.

pub mod ratings;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::arch::{Head, Model};
use crate::data::{self, BBox, DataError, Emotion};
use crate::error::{Error, Result};
use crate::recommender::{self, AffectPrediction, GenreMap, ProviderConfig, RecommendError, RecommendationQuery, Track};
use crate::tensor::Tensor;
pub use ratings::{PredictedAffect, RatingRecord, RatingStore, RatingsSummary, StudyEmotion, SummaryRow};

/// Upload size cap for image bodies.
pub const MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub emotion: String,
    pub va: String,
}

/// A classification model and a valence/arousal model sharing one input size.
pub struct Predictor {
    emotion: Model<f32>,
    va: Model<f32>,
    input_size: usize,
}

impl Predictor {
    pub fn new(emotion: Model<f32>, va: Model<f32>) -> Result<Self> {
        if emotion.head() != Head::Emotion || va.head() != Head::ValenceArousal {
            return Err(Error::InvalidConfig("predictor needs an emotion model and a va model".into()));
        }
        let shape = emotion.graph().input_shape.clone();
        if shape != va.graph().input_shape || shape.len() != 3 || shape[0] != shape[1] || shape[2] != 3 {
            return Err(Error::InvalidConfig(format!("models need the same square RGB input, got {shape:?}")));
        }
        Ok(Self { input_size: shape[0], emotion, va })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn model_ids(&self) -> ModelIds {
        ModelIds {
            emotion: format!("{}:{}", self.emotion.graph().name, self.emotion.head()),
            va: format!("{}:{}", self.va.graph().name, self.va.head()),
        }
    }

    /// Runs both models on one preprocessed `H×W×3` image. Returns the
    /// prediction and the inference time in milliseconds.
    pub fn predict_tensor(&self, image: &Tensor<f32>) -> Result<(AffectPrediction, f64)> {
        let batch = Tensor::stack(&[image])?;
        let start = Instant::now();
        let probs = self.emotion.predict(&batch)?;
        let va = self.va.predict(&batch)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let probs: Vec<f64> = probs.data().iter().map(|&p| p as f64).collect();
        let (valence, arousal) = (va.data()[0] as f64, va.data()[1] as f64);
        let pred = AffectPrediction::new(probs, valence, arousal).map_err(|e| Error::Training(e.to_string()))?;
        Ok((pred, latency_ms))
    }

    pub fn predict_image(&self, image: &RgbImage, bbox: Option<BBox>) -> std::result::Result<(AffectPrediction, f64), ApiError> {
        let tensor = data::preprocess_to(image, bbox, self.input_size).map_err(ApiError::from_data)?;
        self.predict_tensor(&tensor).map_err(|e| ApiError::internal(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub emotion: Emotion,
    /// Probabilities in label order, summing to 1.
    pub emotion_probs: Vec<f64>,
    pub valence: f64,
    pub arousal: f64,
    pub models: ModelIds,
    /// Model inference time for this request, preprocessing excluded.
    pub latency_ms: f64,
}

impl PredictResponse {
    fn new(pred: AffectPrediction, models: ModelIds, latency_ms: f64) -> Self {
        Self { emotion: pred.emotion, emotion_probs: pred.emotion_probs, valence: pred.valence, arousal: pred.arousal, models, latency_ms }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub prediction: AffectPrediction,
    pub query: RecommendationQuery,
    pub tracks: Vec<Track>,
}

/// JSON body for `/v1/recommend`. A [`PredictResponse`] deserializes into
/// it directly; alternatively give just an emotion name.
#[derive(Clone, Debug, Deserialize)]
pub struct AffectBody {
    #[serde(default)]
    pub emotion_probs: Option<Vec<f64>>,
    #[serde(default)]
    pub emotion: Option<Emotion>,
    pub valence: f64,
    pub arousal: f64,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    fn from_data(e: DataError) -> Self {
        Self::bad_request(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub struct ServiceConfig {
    pub predictor: Option<Predictor>,
    pub genres: GenreMap,
    pub provider: Option<ProviderConfig>,
    pub ratings_path: PathBuf,
    /// Served under `/app` when the directory exists.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(ratings_path: impl Into<PathBuf>) -> Self {
        Self { predictor: None, genres: GenreMap::default(), provider: None, ratings_path: ratings_path.into(), static_dir: None }
    }

    pub fn with_predictor(mut self, predictor: Predictor) -> Self {
        self.predictor = Some(predictor);
        self
    }

    pub fn with_provider(mut self, provider: ProviderConfig) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn with_genres(mut self, genres: GenreMap) -> Self {
        self.genres = genres;
        self
    }

    pub fn with_static_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.static_dir = Some(dir.into());
        self
    }
}

struct AppState {
    predictor: Option<Arc<Predictor>>,
    genres: GenreMap,
    provider: Option<ProviderConfig>,
    ratings: RatingStore,
}

type Shared = Arc<AppState>;

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        predictor: config.predictor.map(Arc::new),
        genres: config.genres,
        provider: config.provider,
        ratings: RatingStore::new(config.ratings_path),
    });
    let mut app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/predict", post(predict))
        .route("/v1/recommend", post(recommend))
        .route("/v1/ratings", post(add_rating))
        .route("/v1/ratings/summary", get(ratings_summary))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state);
    if let Some(dir) = config.static_dir.filter(|d| d.is_dir()) {
        app = app.nest_service("/app", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await
}

#[derive(Debug, Default, Deserialize)]
pub struct ImageParams {
    pub x: Option<i64>,
    pub y: Option<i64>,
    pub w: Option<u32>,
    pub h: Option<u32>,
    pub limit: Option<usize>,
}

impl ImageParams {
    fn bbox(&self) -> ApiResult<Option<BBox>> {
        match (self.x, self.y, self.w, self.h) {
            (None, None, None, None) => Ok(None),
            (Some(x), Some(y), Some(w), Some(h)) if w > 0 && h > 0 => Ok(Some(BBox { x, y, w, h })),
            _ => Err(ApiError::bad_request("bounding box needs x, y and positive w, h")),
        }
    }
}

fn is_content_type(req: &Request, prefix: &str) -> bool {
    req.headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with(prefix))
}

/// Image bytes from a multipart `image` field (or the first file) or the raw body.
async fn image_bytes(req: Request) -> ApiResult<Bytes> {
    if is_content_type(&req, "multipart/form-data") {
        let mut form = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            if field.name() == Some("image") || field.file_name().is_some() {
                return field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()));
            }
        }
        return Err(ApiError::bad_request("multipart body has no image field"));
    }
    let bytes = Bytes::from_request(req, &()).await.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    if bytes.is_empty() {
        return Err(ApiError::bad_request("empty request body"));
    }
    Ok(bytes)
}

async fn run_prediction(predictor: Arc<Predictor>, bytes: Bytes, bbox: Option<BBox>) -> ApiResult<PredictResponse> {
    tokio::task::spawn_blocking(move || {
        let image = data::decode_image(&bytes).map_err(ApiError::from_data)?;
        let (pred, latency_ms) = predictor.predict_image(&image, bbox)?;
        Ok(PredictResponse::new(pred, predictor.model_ids(), latency_ms))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn require_predictor(state: &AppState) -> ApiResult<Arc<Predictor>> {
    state
        .predictor
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models are not loaded"))
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "models": state.predictor.as_ref().map(|p| p.model_ids()),
        "recommender": state.provider.is_some(),
    }))
}

async fn predict(State(state): State<Shared>, Query(params): Query<ImageParams>, req: Request) -> ApiResult<Json<PredictResponse>> {
    let predictor = require_predictor(&state)?;
    let bbox = params.bbox()?;
    let bytes = image_bytes(req).await?;
    Ok(Json(run_prediction(predictor, bytes, bbox).await?))
}

async fn recommend(State(state): State<Shared>, Query(params): Query<ImageParams>, req: Request) -> ApiResult<Json<RecommendResponse>> {
    let (prediction, limit) = if is_content_type(&req, "application/json") {
        let Json(body) = Json::<AffectBody>::from_request(req, &()).await.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        let prediction = match (body.emotion_probs, body.emotion) {
            (Some(probs), _) => AffectPrediction::new(probs, body.valence, body.arousal),
            (None, Some(emotion)) => AffectPrediction::certain(emotion, body.valence, body.arousal),
            (None, None) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "give emotion or emotion_probs")),
        }
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        (prediction, body.limit.or(params.limit))
    } else {
        let predictor = require_predictor(&state)?;
        let bbox = params.bbox()?;
        let bytes = image_bytes(req).await?;
        let response = run_prediction(predictor, bytes, bbox).await?;
        let prediction = AffectPrediction::new(response.emotion_probs, response.valence, response.arousal)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        (prediction, params.limit)
    };
    let limit = limit.unwrap_or(recommender::DEFAULT_LIMIT);
    let query = recommender::build_query(&prediction, &state.genres, limit)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let provider = state
        .provider
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no recommendation provider configured"))?;
    let tracks = recommender::fetch(&query, provider).await.map_err(|e| match e {
        RecommendError::Malformed(_) | RecommendError::Network { .. } | RecommendError::Http { .. } | RecommendError::Auth { .. } => {
            ApiError::new(StatusCode::BAD_GATEWAY, e.to_string())
        }
        other => ApiError::internal(other.to_string()),
    })?;
    Ok(Json(RecommendResponse { prediction, query, tracks }))
}

async fn add_rating(State(state): State<Shared>, Json(record): Json<RatingRecord>) -> ApiResult<impl IntoResponse> {
    record.validate().map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m))?;
    let id = state.ratings.append(record).await.map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn ratings_summary(State(state): State<Shared>) -> ApiResult<Json<RatingsSummary>> {
    state.ratings.summary().await.map(Json).map_err(|e| ApiError::internal(e.to_string()))
}
