use serde::{Deserialize, Serialize};

use crate::corpus::{Segment, SEGMENT_SIZE, SEGMENT_TILES};
use crate::labeling::{column_heights, gap_columns};
use crate::tiles::TileMap;

/// Four scalar tile metrics of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TileFeatures {
    /// Fraction of solid tiles.
    pub density: f64,
    /// Mean squared residual of a least-squares line through the heights of
    /// columns that contain a solid tile; 0 with fewer than two such columns.
    pub nonlinearity: f64,
    /// `−(enemy or hazard tiles + gap columns) / 16`.
    pub leniency: f64,
    /// Fraction of reward or decorative tiles.
    pub interestingness: f64,
}

impl TileFeatures {
    pub fn to_array(self) -> [f64; 4] {
        [self.density, self.nonlinearity, self.leniency, self.interestingness]
    }
}

pub fn tile_features(segment: &Segment, map: &TileMap) -> TileFeatures {
    let mut solid = 0usize;
    let mut dangerous = 0usize;
    let mut interesting = 0usize;
    for &ch in segment.cells() {
        let f = map.flags(ch);
        solid += f.solid as usize;
        dangerous += (f.enemy || f.hazard) as usize;
        interesting += (f.reward || f.decorative) as usize;
    }
    let gaps = gap_columns(segment, map).count();
    let heights = column_heights(segment, map);
    let points: Vec<(f64, f64)> = heights
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0)
        .map(|(c, &h)| (c as f64, h as f64))
        .collect();
    TileFeatures {
        density: solid as f64 / SEGMENT_TILES as f64,
        nonlinearity: line_fit_mse(&points),
        leniency: -((dangerous + gaps) as f64) / SEGMENT_SIZE as f64,
        interestingness: interesting as f64 / SEGMENT_TILES as f64,
    }
}

/// Mean squared residual of the ordinary least-squares line through `points`.
pub fn line_fit_mse(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    points
        .iter()
        .map(|&(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / n
}

/// Classifier inputs: per-tile counts in vocabulary order, the four tile
/// metrics, then the 16 column heights.
pub fn classifier_features(segment: &Segment, map: &TileMap) -> Vec<f64> {
    let vocab = map.vocab();
    let mut out = vec![0.0; vocab.len() + 4 + SEGMENT_SIZE];
    for &ch in segment.cells() {
        if let Some(i) = vocab.index_of(ch) {
            out[i] += 1.0;
        }
    }
    let base = vocab.len();
    out[base..base + 4].copy_from_slice(&tile_features(segment, map).to_array());
    for (i, h) in column_heights(segment, map).iter().enumerate() {
        out[base + 4 + i] = *h as f64;
    }
    out
}
