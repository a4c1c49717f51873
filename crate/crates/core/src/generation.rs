//! Sampling and editing segments with a trained model.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{one_hot_decode, one_hot_encode, parse_level, CorpusError, Segment, SEGMENT_SIZE};
use crate::cvae::{reparameterize, sample_prior, Checkpoint, CvaeError};
use crate::labeling::{LabelError, LabelVector, Scheme};
use crate::tiles::{TileFlags, TileMap};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Model(#[from] CvaeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("bad segment file: {0}")]
    BadFile(String),
}

/// How relabelling picks the latent code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelabelMode {
    /// `z = μ`.
    #[default]
    Mean,
    /// `z ~ N(μ, σ²)`.
    Sampled,
}

impl fmt::Display for RelabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelabelMode::Mean => "mean",
            RelabelMode::Sampled => "sampled",
        })
    }
}

impl FromStr for RelabelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(RelabelMode::Mean),
            "sampled" => Ok(RelabelMode::Sampled),
            other => Err(format!("unknown relabel mode `{other}` (expected mean or sampled)")),
        }
    }
}

/// Decode `count` prior samples under `label`.
pub fn sample_conditioned(
    checkpoint: &Checkpoint,
    label: &LabelVector,
    count: usize,
    seed: u64,
) -> Result<Vec<Segment>, GenerationError> {
    let model = &checkpoint.model;
    model.check_label(label)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs: Vec<Vec<f64>> = (0..count).map(|_| sample_prior(model.latent_dim(), &mut rng)).collect();
    decode_all(checkpoint, &zs, label)
}

/// Argmax-decode a batch of latent vectors.
pub fn decode_all(
    checkpoint: &Checkpoint,
    zs: &[Vec<f64>],
    label: &LabelVector,
) -> Result<Vec<Segment>, GenerationError> {
    let logits = checkpoint.model.decode_batch(zs, label)?;
    (0..logits.rows())
        .map(|r| Ok(one_hot_decode(logits.row(r), &checkpoint.vocab)?))
        .collect()
}

/// Latent code of a segment under `source_label`.
pub fn encode_segment(
    checkpoint: &Checkpoint,
    segment: &Segment,
    source_label: &LabelVector,
    mode: RelabelMode,
    seed: u64,
) -> Result<Vec<f64>, GenerationError> {
    let x = one_hot_encode(segment, &checkpoint.vocab)?;
    let (mu, logvar) = checkpoint.model.encode(&x.values, source_label)?;
    Ok(match mode {
        RelabelMode::Mean => mu,
        RelabelMode::Sampled => reparameterize(&mu, &logvar, &mut ChaCha8Rng::seed_from_u64(seed)),
    })
}

/// Encode under `source_label`, decode under `target_label`.
pub fn relabel_segment(
    checkpoint: &Checkpoint,
    segment: &Segment,
    source_label: &LabelVector,
    target_label: &LabelVector,
    mode: RelabelMode,
    seed: u64,
) -> Result<Segment, GenerationError> {
    checkpoint.model.check_label(target_label)?;
    let z = encode_segment(checkpoint, segment, source_label, mode, seed)?;
    let logits = checkpoint.model.decode(&z, target_label)?;
    Ok(one_hot_decode(&logits, &checkpoint.vocab)?)
}

/// Sixteen newline-terminated rows.
pub fn render_text(segment: &Segment) -> String {
    segment.to_text()
}

/// One rendered tile: character, tile name and category flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellView {
    pub ch: char,
    pub name: String,
    pub solid: bool,
    pub hazard: bool,
    pub enemy: bool,
    pub pipe: bool,
    pub collectable: bool,
    pub reward: bool,
    pub decorative: bool,
    pub elements: Vec<String>,
}

/// 16 rows of 16 cell views.
pub fn render_cells(segment: &Segment, map: &TileMap) -> Vec<Vec<CellView>> {
    (0..SEGMENT_SIZE)
        .map(|r| {
            (0..SEGMENT_SIZE)
                .map(|c| {
                    let ch = segment.get(r, c);
                    let TileFlags {
                        solid,
                        hazard,
                        enemy,
                        pipe,
                        collectable,
                        reward,
                        decorative,
                        ..
                    } = map.flags(ch);
                    let def = map.tile_def(ch);
                    CellView {
                        ch: ch as char,
                        name: def.map(|d| d.name.clone()).unwrap_or_default(),
                        solid,
                        hazard,
                        enemy,
                        pipe,
                        collectable,
                        reward,
                        decorative,
                        elements: def.map(|d| d.elements.clone()).unwrap_or_default(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Header line of a generated-segment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentHeader {
    pub label: LabelVector,
    pub seed: u64,
    pub index: usize,
}

impl fmt::Display for SegmentHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# scheme={} label={} seed={} index={}",
            self.label.scheme(),
            self.label,
            self.seed,
            self.index
        )
    }
}

impl FromStr for SegmentHeader {
    type Err = GenerationError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| GenerationError::BadFile(format!("{why} in header `{line}`"));
        let body = line.strip_prefix('#').ok_or_else(|| bad("missing `#`"))?;
        let (mut scheme, mut label, mut seed, mut index) = (None, None, None, 0usize);
        for field in body.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("field without `=`"))?;
            match key {
                "scheme" => scheme = Some(value.parse::<Scheme>().map_err(|_| bad("unknown scheme"))?),
                "label" => label = Some(value.to_string()),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("bad seed"))?),
                "index" => index = value.parse().map_err(|_| bad("bad index"))?,
                _ => {}
            }
        }
        let scheme = scheme.ok_or_else(|| bad("missing scheme"))?;
        let label = LabelVector::parse(scheme, &label.ok_or_else(|| bad("missing label"))?)?;
        Ok(Self {
            label,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            index,
        })
    }
}

/// Header line plus 16 tile rows.
pub fn write_segment_file(header: &SegmentHeader, segment: &Segment) -> String {
    format!("{header}\n{}", segment.to_text())
}

/// Parse a file holding one or more headed segments. Header lines are
/// optional; rows without a header get `None`.
pub fn read_segment_file(
    text: &str,
    map: &TileMap,
) -> Result<Vec<(Option<SegmentHeader>, Segment)>, GenerationError> {
    let mut out = Vec::new();
    let mut header = None;
    let mut rows: Vec<&str> = Vec::new();
    for line in text.lines().map(|l| l.trim_end_matches('\r')) {
        if line.starts_with("# ") {
            if !rows.is_empty() {
                return Err(GenerationError::BadFile(format!(
                    "header after {} rows of an unfinished segment",
                    rows.len()
                )));
            }
            header = Some(line.parse()?);
            continue;
        }
        if line.is_empty() && rows.is_empty() {
            continue;
        }
        rows.push(line);
        if rows.len() == SEGMENT_SIZE {
            let grid = parse_level(&rows.join("\n"), map.vocab())?;
            out.push((header.take(), Segment::generated(grid)?));
            rows.clear();
        }
    }
    if !rows.is_empty() {
        return Err(GenerationError::BadFile(format!(
            "trailing segment has {} rows, expected {SEGMENT_SIZE}",
            rows.len()
        )));
    }
    Ok(out)
}
