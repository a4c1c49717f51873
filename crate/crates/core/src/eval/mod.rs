//! Evaluation: element-label match rates, random-forest game classification
//! of blended output, and energy distance over tile metrics.

mod edist;
mod features;
mod forest;
mod matching;

pub use edist::{e_distance, energy_distance, pooled_standardize};
pub use features::{classifier_features, line_fit_mse, tile_features, TileFeatures};
pub use forest::{stratified_split, train_rf_classifier, DecisionTree, ForestConfig, ForestFit, RandomForest};
pub use matching::{
    frequency_trend, label_frequency, match_metrics, match_percentages, MatchReport, MatchRow, MatchSource,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Segment;
use crate::cvae::Checkpoint;
use crate::dataset::Dataset;
use crate::generation::{sample_conditioned, GenerationError};
use crate::labeling::{int_to_label, Scheme};
use crate::tiles::{Game, TileMap};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("energy distance of an empty set")]
    EmptySet,
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("{0}")]
    Other(String),
}

/// Anything that can name the game a segment looks like.
pub trait GameClassifier: Sync {
    fn classify(&self, segment: &Segment) -> Game;
}

/// Random forest over [`classifier_features`].
#[derive(Debug, Clone)]
pub struct SegmentClassifier {
    pub forest: RandomForest,
    pub map: TileMap,
}

impl GameClassifier for SegmentClassifier {
    fn classify(&self, segment: &Segment) -> Game {
        Game::ALL[self.forest.predict(&classifier_features(segment, &self.map))]
    }
}

/// Classifier features and game indices of a blend dataset.
pub fn blend_features(dataset: &Dataset, map: &TileMap) -> (Vec<Vec<f64>>, Vec<usize>) {
    dataset
        .examples
        .par_iter()
        .map(|e| (classifier_features(&e.segment, map), e.game.index()))
        .unzip()
}

/// Fit the game classifier on a blend dataset with a stratified split.
pub fn train_game_classifier(
    dataset: &Dataset,
    map: &TileMap,
    test_fraction: f64,
    config: &ForestConfig,
) -> Result<(SegmentClassifier, ForestFit), EvalError> {
    let (x, y) = blend_features(dataset, map);
    let fit = train_rf_classifier(&x, &y, Game::ALL.len(), test_fraction, config)?;
    Ok((
        SegmentClassifier {
            forest: fit.forest.clone(),
            map: map.clone(),
        },
        fit,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRow {
    pub label: String,
    pub n: usize,
    /// Counts in SMB, KI, MM order.
    pub counts: [usize; 3],
    pub pct: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendTable {
    pub seed: u64,
    pub rows: Vec<BlendRow>,
}

impl BlendTable {
    pub fn row(&self, label: &str) -> Option<&BlendRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Share of generated segments classified as each game, for all eight
/// blend labels.
pub fn blend_table(
    checkpoint: &Checkpoint,
    classifier: &dyn GameClassifier,
    n_per_label: usize,
    seed: u64,
) -> Result<BlendTable, EvalError> {
    require_blend(checkpoint)?;
    let rows = (0..Scheme::Blend.cardinality())
        .into_par_iter()
        .map(|k| {
            let label = int_to_label(k, Scheme::Blend).expect("3-bit label");
            let segments = sample_conditioned(checkpoint, &label, n_per_label, label_seed(seed, k))?;
            let mut counts = [0usize; 3];
            for s in &segments {
                counts[classifier.classify(s).index()] += 1;
            }
            let n = segments.len();
            let pct = counts.map(|c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 });
            Ok(BlendRow {
                label: label.to_string(),
                n,
                counts,
                pct,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(BlendTable { seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdistRow {
    pub label: String,
    /// E-distance to SMB, KI, MM training features.
    pub distances: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdistReport {
    pub seed: u64,
    pub n_per_label: usize,
    pub rows: Vec<EdistRow>,
    /// Each training set against itself.
    pub baseline: [f64; 3],
}

impl EdistReport {
    /// Label whose row entry for `game` is smallest.
    pub fn argmin_label(&self, game: Game) -> Option<&str> {
        self.rows
            .iter()
            .min_by(|a, b| a.distances[game.index()].total_cmp(&b.distances[game.index()]))
            .map(|r| r.label.as_str())
    }
}

/// E-distance between generated segments for each blend label and each
/// game's training segments.
pub fn edist_report(
    checkpoint: &Checkpoint,
    map: &TileMap,
    training: &Dataset,
    n_per_label: usize,
    seed: u64,
) -> Result<EdistReport, EvalError> {
    require_blend(checkpoint)?;
    let per_game: Vec<Vec<TileFeatures>> = Game::ALL
        .iter()
        .map(|&g| {
            training
                .examples
                .iter()
                .filter(|e| e.game == g)
                .map(|e| tile_features(&e.segment, map))
                .collect()
        })
        .collect();
    let baseline = [0, 1, 2].map(|g| e_distance(&per_game[g], &per_game[g]).unwrap_or(f64::NAN));
    let rows = (0..Scheme::Blend.cardinality())
        .into_par_iter()
        .map(|k| {
            let label = int_to_label(k, Scheme::Blend).expect("3-bit label");
            let generated: Vec<TileFeatures> = sample_conditioned(checkpoint, &label, n_per_label, label_seed(seed, k))?
                .iter()
                .map(|s| tile_features(s, map))
                .collect();
            let mut distances = [0.0; 3];
            for g in 0..3 {
                distances[g] = e_distance(&generated, &per_game[g])?;
            }
            Ok(EdistRow {
                label: label.to_string(),
                distances,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EdistReport {
        seed,
        n_per_label,
        rows,
        baseline,
    })
}

fn require_blend(checkpoint: &Checkpoint) -> Result<(), EvalError> {
    if checkpoint.model.scheme() != Scheme::Blend {
        return Err(EvalError::SchemeMismatch(format!(
            "expected a blend model, found {}",
            checkpoint.model.scheme()
        )));
    }
    Ok(())
}

/// Per-label sampling seed.
pub fn label_seed(seed: u64, label: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(u64::from(label) + 1)
}
