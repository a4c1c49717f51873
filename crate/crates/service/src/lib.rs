//! HTTP/JSON facade over generation, editing and labeling.
//!
//! Segments travel as 16-line text grids. Checkpoints are loaded from a
//! model directory at startup and on `POST /api/admin/reload`; every other
//! request only reads the registry.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Json, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use levelcvae::corpus::CorpusError;
use levelcvae::cvae::{load_checkpoint, Checkpoint};
use levelcvae::dataset::TileMaps;
use levelcvae::generation::{relabel_segment, render_text, sample_conditioned, GenerationError, RelabelMode};
use levelcvae::labeling::{LabelError, LabelVector, Scheme};
use levelcvae::{Game, Segment};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::CorsLayer;

/// Largest `count` accepted by `/api/generate`.
pub const MAX_COUNT: usize = 64;

/// File extension of checkpoints picked up from the model directory.
pub const CHECKPOINT_EXT: &str = "ckpt";

pub struct ModelEntry {
    pub id: String,
    pub path: PathBuf,
    pub checkpoint: Checkpoint,
}

/// Checkpoints loaded from one directory, keyed by file stem.
#[derive(Default)]
pub struct Registry {
    pub models: BTreeMap<String, ModelEntry>,
    pub warnings: Vec<String>,
}

impl Registry {
    /// Load every `*.ckpt` in `dir`. Unreadable files are skipped and
    /// reported in `warnings`.
    pub fn load_dir(dir: &Path) -> Self {
        let mut registry = Registry::default();
        let entries = match fs::read_dir(dir) {
            Ok(entries) => entries,
            Err(e) => {
                registry.warnings.push(format!("{}: {e}", dir.display()));
                return registry;
            }
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == CHECKPOINT_EXT))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            match load_checkpoint(&path, None) {
                Ok(checkpoint) => {
                    registry.models.insert(id.clone(), ModelEntry { id, path, checkpoint });
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    registry.warnings.push(format!("{id}: {e}"));
                }
            }
        }
        registry
    }
}

pub struct AppState {
    pub model_dir: PathBuf,
    pub maps: TileMaps,
    registry: RwLock<Arc<Registry>>,
}

impl AppState {
    pub fn new(model_dir: PathBuf, maps: TileMaps) -> Self {
        let registry = Registry::load_dir(&model_dir);
        Self {
            model_dir,
            maps,
            registry: RwLock::new(Arc::new(registry)),
        }
    }

    pub fn registry(&self) -> Arc<Registry> {
        self.registry.read().expect("registry lock").clone()
    }

    pub fn reload(&self) -> Arc<Registry> {
        let fresh = Arc::new(Registry::load_dir(&self.model_dir));
        *self.registry.write().expect("registry lock") = fresh.clone();
        fresh
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    SchemeMismatch(String),
    #[error("{0}")]
    UnknownTile(String),
    #[error("count {0} exceeds the per-request cap of {MAX_COUNT}")]
    CountTooLarge(usize),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn kind(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::UnknownModel(_) => "UnknownModel",
            ApiError::SchemeMismatch(_) => "SchemeMismatch",
            ApiError::UnknownTile(_) => "UnknownTile",
            ApiError::CountTooLarge(_) => "CountTooLarge",
            ApiError::Internal(_) => "Internal",
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownModel(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::UnknownTile { .. } => ApiError::UnknownTile(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Corpus(c) => c.into(),
            GenerationError::Model(levelcvae::cvae::CvaeError::SchemeMismatch { .. }) => {
                ApiError::SchemeMismatch(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

fn parse_label(scheme: Scheme, text: &str) -> Result<LabelVector, ApiError> {
    if text.chars().count() != scheme.len() {
        return Err(ApiError::SchemeMismatch(format!(
            "label `{text}` has {} bits; {scheme} labels have {}",
            text.chars().count(),
            scheme.len()
        )));
    }
    LabelVector::parse(scheme, text).map_err(|e: LabelError| ApiError::BadRequest(e.to_string()))
}

fn parse_segment(text: &str, checkpoint: &Checkpoint) -> Result<Segment, ApiError> {
    Ok(Segment::parse(text, &checkpoint.vocab)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub scheme: Scheme,
    pub latent_dim: usize,
    pub label_bits: Vec<String>,
    pub vocab: Vec<VocabTile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabTile {
    pub char: char,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsResponse {
    pub models: Vec<ModelInfo>,
    pub warnings: Vec<String>,
}

fn models_response(registry: &Registry) -> ModelsResponse {
    ModelsResponse {
        models: registry
            .models
            .values()
            .map(|m| {
                let scheme = m.checkpoint.model.scheme();
                let vocab = &m.checkpoint.vocab;
                ModelInfo {
                    id: m.id.clone(),
                    scheme,
                    latent_dim: m.checkpoint.model.latent_dim(),
                    label_bits: scheme.bit_names().into_iter().map(String::from).collect(),
                    vocab: (0..vocab.len())
                        .map(|i| VocabTile {
                            char: vocab.char_at(i) as char,
                            name: vocab.tile_name(i).to_string(),
                        })
                        .collect(),
                }
            })
            .collect(),
        warnings: registry.warnings.clone(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub model_id: String,
    pub label: String,
    pub count: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub segments: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelabelRequest {
    pub model_id: String,
    pub segment: String,
    pub target_label: String,
    /// Derived from the segment when omitted (required for blend models).
    pub source_label: Option<String>,
    #[serde(default)]
    pub mode: RelabelMode,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelResponse {
    pub segment: String,
    pub source_label: String,
    pub target_label: String,
    pub mode: RelabelMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub game: String,
    pub segment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub label: String,
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<ModelsResponse> {
    Json(models_response(&state.registry()))
}

async fn reload(State(state): State<Arc<AppState>>) -> Json<ModelsResponse> {
    Json(models_response(&state.reload()))
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, ApiError> {
    if req.count > MAX_COUNT {
        return Err(ApiError::CountTooLarge(req.count));
    }
    let registry = state.registry();
    let entry = registry
        .models
        .get(&req.model_id)
        .ok_or_else(|| ApiError::UnknownModel(req.model_id.clone()))?;
    let label = parse_label(entry.checkpoint.model.scheme(), &req.label)?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let segments = sample_conditioned(&entry.checkpoint, &label, req.count, seed)?;
    Ok(Json(GenerateResponse {
        segments: segments.iter().map(render_text).collect(),
        seed,
    }))
}

async fn relabel(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RelabelRequest>,
) -> Result<Json<RelabelResponse>, ApiError> {
    let registry = state.registry();
    let entry = registry
        .models
        .get(&req.model_id)
        .ok_or_else(|| ApiError::UnknownModel(req.model_id.clone()))?;
    let checkpoint = &entry.checkpoint;
    let scheme = checkpoint.model.scheme();
    let segment = parse_segment(&req.segment, checkpoint)?;
    let target = parse_label(scheme, &req.target_label)?;
    let source = match &req.source_label {
        Some(text) => parse_label(scheme, text)?,
        None => state
            .maps
            .derive_label(&segment, scheme)
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .ok_or_else(|| ApiError::BadRequest(format!("{scheme} models need an explicit source_label")))?,
    };
    let seed = req.seed.unwrap_or(0);
    let out = relabel_segment(checkpoint, &segment, &source, &target, req.mode, seed)?;
    Ok(Json(RelabelResponse {
        segment: render_text(&out),
        source_label: source.to_string(),
        target_label: target.to_string(),
        mode: req.mode,
    }))
}

async fn label(
    State(state): State<Arc<AppState>>,
    Json(req): Json<LabelRequest>,
) -> Result<Json<LabelResponse>, ApiError> {
    let game: Game = req
        .game
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("unknown game `{}`", req.game)))?;
    let map = state.maps.get(game);
    let segment = Segment::parse(&req.segment, map.vocab())?;
    let label = state
        .maps
        .derive_label(&segment, Scheme::elements_for(game))
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .expect("element schemes derive from content");
    Ok(Json(LabelResponse {
        label: label.to_string(),
    }))
}

/// Routes under `/api`, optionally with permissive CORS headers.
pub fn router(state: Arc<AppState>, cors: bool) -> Router {
    let router = Router::new()
        .route("/api/models", get(list_models))
        .route("/api/generate", post(generate))
        .route("/api/relabel", post(relabel))
        .route("/api/label", post(label))
        .route("/api/admin/reload", post(reload))
        .with_state(state);
    if cors {
        router.layer(CorsLayer::permissive())
    } else {
        router
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, cors: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, cors)).await
}
