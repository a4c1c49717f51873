use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use http_body_util::BodyExt;
use levelcvae::cvae::{
    save_checkpoint, train, Architecture, Checkpoint, CvaeModel, ElboTerms, ModelSpec, TrainConfig, TrainingSet,
};
use levelcvae::dataset::TileMaps;
use levelcvae::labeling::Scheme;
use levelcvae::nn::LrSchedule;
use levelcvae::tiles::builtin_blend_map;
use levelcvae::{Game, Segment, TileMap};
use levelcvae_service::{router, AppState, ModelsResponse};
use rand::SeedableRng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_spec(scheme: Scheme, vocab_size: usize) -> ModelSpec {
    ModelSpec {
        scheme,
        latent_dim: 8,
        vocab_size,
        positions: 256,
        architecture: Architecture {
            encoder_hidden: vec![32],
            decoder_hidden: vec![32],
        },
    }
}

fn random_checkpoint(scheme: Scheme, map: &TileMap, seed: u64) -> Checkpoint {
    let vocab = map.vocab().clone();
    let spec = small_spec(scheme, vocab.len());
    Checkpoint {
        model: CvaeModel::init(&spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        vocab,
        config: TrainConfig::preset(scheme, seed),
        final_terms: ElboTerms::default(),
    }
}

fn model_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(
        &random_checkpoint(Scheme::Blend, &builtin_blend_map(), 1),
        &dir.path().join("blend32.ckpt"),
    )
    .unwrap();
    save_checkpoint(
        &random_checkpoint(Scheme::ElementsSmb, &TileMap::builtin(Game::Smb), 2),
        &dir.path().join("smb32.ckpt"),
    )
    .unwrap();
    dir
}

fn app(dir: &Path, cors: bool) -> axum::Router {
    router(Arc::new(AppState::new(dir.to_path_buf(), TileMaps::default())), cors)
}

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

#[tokio::test]
async fn empty_model_dir_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body, _) = call(&app(dir.path(), false), Method::GET, "/api/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["models"], json!([]));
    assert_eq!(body["warnings"], json!([]));
}

#[tokio::test]
async fn lists_checkpoints_and_flags_malformed_ones() {
    let dir = model_dir();
    std::fs::write(dir.path().join("broken.ckpt"), b"not a checkpoint").unwrap();
    let (status, body, _) = call(&app(dir.path(), false), Method::GET, "/api/models", None).await;
    assert_eq!(status, StatusCode::OK);
    let parsed: ModelsResponse = serde_json::from_value(body).unwrap();
    let ids: Vec<&str> = parsed.models.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, vec!["blend32", "smb32"]);
    assert_eq!(parsed.models[0].scheme, Scheme::Blend);
    assert_eq!(parsed.models[1].latent_dim, 8);
    assert_eq!(parsed.models[1].label_bits.len(), 5);
    assert_eq!(parsed.warnings.len(), 1);
    assert!(parsed.warnings[0].starts_with("broken"));
}

#[tokio::test]
async fn generate_blend_segments_with_seed_echo() {
    let dir = model_dir();
    let app = app(dir.path(), false);
    let req = json!({"model_id": "blend32", "label": "110", "count": 3, "seed": 7});
    let (status, body, text) = call(&app, Method::POST, "/api/generate", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["seed"], 7);
    let segments = body["segments"].as_array().unwrap();
    assert_eq!(segments.len(), 3);
    let vocab = builtin_blend_map().vocab().clone();
    for s in segments {
        Segment::parse(s.as_str().unwrap(), &vocab).unwrap();
    }
    let (_, _, again) = call(&app, Method::POST, "/api/generate", Some(req)).await;
    assert_eq!(text, again);
}

#[tokio::test]
async fn generate_without_seed_reports_one() {
    let dir = model_dir();
    let app = app(dir.path(), false);
    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "smb32", "label": "10011", "count": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let seed = body["seed"].as_u64().unwrap();
    let (_, replay, _) = call(
        &app,
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "smb32", "label": "10011", "count": 1, "seed": seed})),
    )
    .await;
    assert_eq!(replay["segments"], body["segments"]);
}

#[tokio::test]
async fn generate_rejects_bad_requests() {
    let dir = model_dir();
    let app = app(dir.path(), false);
    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "blend32", "label": "1100", "count": 1, "seed": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "SchemeMismatch");

    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "blend32", "label": "100", "count": 65})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "CountTooLarge");

    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "nope", "label": "100", "count": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownModel");
}

#[tokio::test]
async fn generate_zero_count_is_empty() {
    let dir = model_dir();
    let (status, body, _) = call(
        &app(dir.path(), false),
        Method::POST,
        "/api/generate",
        Some(json!({"model_id": "blend32", "label": "001", "count": 0, "seed": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["segments"], json!([]));
}

#[tokio::test]
async fn relabel_defaults_to_mean_and_validates_tiles() {
    let dir = model_dir();
    let app = app(dir.path(), false);
    let seg = Segment::filled(b'-').to_text();
    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/relabel",
        Some(json!({"model_id": "smb32", "segment": seg, "target_label": "01000"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], "mean");
    assert_eq!(body["source_label"], "00000");
    assert_eq!(body["segment"].as_str().unwrap().lines().count(), 16);

    let bad = seg.replacen('-', "~", 1);
    let (status, body, _) = call(
        &app,
        Method::POST,
        "/api/relabel",
        Some(json!({"model_id": "smb32", "segment": bad, "target_label": "01000"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "UnknownTile");

    let (status, _, _) = call(
        &app,
        Method::POST,
        "/api/relabel",
        Some(json!({"model_id": "blend32", "segment": seg, "target_label": "100"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn relabel_identity_reconstructs_on_a_trained_model() {
    let map = TileMap::builtin(Game::Ki);
    let maps = TileMaps::default();
    let mut segments = Vec::new();
    for k in 0..4 {
        let mut s = Segment::filled(b'-');
        for c in 0..16 {
            s.set(15, c, b'#');
            s.set(4 * k + 1, c, if c % 3 == 0 { b'T' } else { b'-' });
        }
        s.set(10, 2 + k, b'H');
        segments.push(s);
    }
    let examples = segments
        .iter()
        .map(|s| (s.clone(), maps.derive_label(s, Scheme::ElementsKi).unwrap().unwrap()));
    let data = TrainingSet::from_segments(map.vocab().clone(), Scheme::ElementsKi, examples).unwrap();
    let mut config = TrainConfig::elements(3);
    config.epochs = 300;
    config.schedule = LrSchedule {
        base_lr: 0.003,
        decay_factor: 0.1,
        decay_every: 0,
    };
    let spec = small_spec(Scheme::ElementsKi, map.vocab().len());
    let outcome = train(&spec, &data, &config, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&outcome.checkpoint, &dir.path().join("ki.ckpt")).unwrap();
    let app = app(dir.path(), false);
    for s in &segments {
        let label = maps.derive_label(s, Scheme::ElementsKi).unwrap().unwrap().to_string();
        let (status, body, _) = call(
            &app,
            Method::POST,
            "/api/relabel",
            Some(json!({"model_id": "ki", "segment": s.to_text(), "target_label": label})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let out = Segment::parse(body["segment"].as_str().unwrap(), map.vocab()).unwrap();
        let same = out.cells().iter().zip(s.cells()).filter(|(a, b)| a == b).count();
        assert!(same as f64 / 256.0 >= 0.9, "only {same}/256 tiles reconstructed");
    }
}

#[tokio::test]
async fn label_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), false);
    let empty = Segment::filled(b'-').to_text();
    let (status, body, _) = call(&app, Method::POST, "/api/label", Some(json!({"game": "smb", "segment": empty}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["label"], "00000");

    let mut rows = vec!["----------------".to_string(); 16];
    rows[8] = "-----S?S--------".into();
    rows[13] = "---------E------".into();
    rows[14] = "XXXXXXXXXXXXXXXX".into();
    rows[15] = "XXXXXXXXXXXXXXXX".into();
    let (_, body, _) = call(
        &app,
        Method::POST,
        "/api/label",
        Some(json!({"game": "smb", "segment": rows.join("\n")})),
    )
    .await;
    assert_eq!(body["label"], "10011");

    let mut ki = vec!["----------------".to_string(); 16];
    ki[3] = "-----TTTT-------".into();
    ki[7] = "--D-------------".into();
    ki[15] = "HHHH############".into();
    let (_, body, _) = call(&app, Method::POST, "/api/label", Some(json!({"game": "ki", "segment": ki.join("\n")}))).await;
    assert_eq!(body["label"], "1101");

    let (status, _, _) = call(&app, Method::POST, "/api/label", Some(json!({"game": "zelda", "segment": empty}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reload_picks_up_new_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), false);
    let (_, body, _) = call(&app, Method::GET, "/api/models", None).await;
    assert_eq!(body["models"], json!([]));
    save_checkpoint(
        &random_checkpoint(Scheme::ElementsMm, &TileMap::builtin(Game::Mm), 5),
        &dir.path().join("mm.ckpt"),
    )
    .unwrap();
    let (_, body, _) = call(&app, Method::GET, "/api/models", None).await;
    assert_eq!(body["models"], json!([]));
    let (status, body, _) = call(&app, Method::POST, "/api/admin/reload", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["models"][0]["id"], "mm");
    let (_, body, _) = call(&app, Method::GET, "/api/models", None).await;
    assert_eq!(body["models"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn cors_toggle() {
    let dir = tempfile::tempdir().unwrap();
    for (cors, expected) in [(true, true), (false, false)] {
        let req = Request::builder()
            .uri("/api/models")
            .header(header::ORIGIN, "http://localhost:5173")
            .body(Body::empty())
            .unwrap();
        let resp = app(dir.path(), cors).oneshot(req).await.unwrap();
        assert_eq!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN), expected);
    }
}
