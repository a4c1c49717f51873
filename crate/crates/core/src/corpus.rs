//! Level grids, 16×16 segments, sliding-window extraction and one-hot
//! feature vectors.
//!
//! Level text is the VGLC layout: one character per tile, one row per line.
//! [`TileGrid::to_text`] always ends every row with `\n`; [`parse_level`]
//! accepts the final newline as optional and normalises `\r\n` to `\n`, so a
//! parse/serialise round trip is byte-exact for LF files ending in a newline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tiles::{Orientation, TileMap, TileVocab};

/// Side length of a segment, in tiles.
pub const SEGMENT_SIZE: usize = 16;
/// Tiles per segment.
pub const SEGMENT_TILES: usize = SEGMENT_SIZE * SEGMENT_SIZE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("level text is empty")]
    EmptyLevel,
    #[error("row {row} has {found} tiles, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown tile {ch:?} at row {row}, column {col}")]
    UnknownTile { ch: char, row: usize, col: usize },
    #[error("grid of height {height} cannot be padded to {target} rows")]
    HeightOverflow { height: usize, target: usize },
    #[error("level extent {extent} is smaller than the {window}-tile window")]
    TooSmall { extent: usize, window: usize },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("cross-section of {found} tiles does not match the {expected}-tile window")]
    WrongCrossSection { expected: usize, found: usize },
    #[error("feature vector has length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("segment must be {SEGMENT_SIZE}x{SEGMENT_SIZE}, got {width}x{height}")]
    NotASegment { width: usize, height: usize },
    #[error("section rows {rows:?} / cols {cols:?} exceed a {width}x{height} level")]
    SectionOutOfBounds {
        rows: [usize; 2],
        cols: [usize; 2],
        width: usize,
        height: usize,
    },
}

/// A rectangular grid of tile characters, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TileGrid {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl TileGrid {
    /// Builds a grid from raw cells. Panics if `cells.len() != width * height`.
    pub fn from_cells(width: usize, height: usize, cells: Vec<u8>) -> Self {
        assert_eq!(cells.len(), width * height, "cell count does not match shape");
        Self {
            width,
            height,
            cells,
        }
    }

    pub fn filled(width: usize, height: usize, ch: u8) -> Self {
        Self::from_cells(width, height, vec![ch; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: u8) {
        self.cells[row * self.width + col] = ch;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.width)
    }

    /// Copy of the half-open rectangle `rows × cols`.
    pub fn crop(&self, rows: [usize; 2], cols: [usize; 2]) -> Result<TileGrid, CorpusError> {
        if rows[0] >= rows[1] || cols[0] >= cols[1] || rows[1] > self.height || cols[1] > self.width {
            return Err(CorpusError::SectionOutOfBounds {
                rows,
                cols,
                width: self.width,
                height: self.height,
            });
        }
        let width = cols[1] - cols[0];
        let mut cells = Vec::with_capacity(width * (rows[1] - rows[0]));
        for r in rows[0]..rows[1] {
            cells.extend_from_slice(&self.row(r)[cols[0]..cols[1]]);
        }
        Ok(TileGrid::from_cells(width, rows[1] - rows[0], cells))
    }

    /// Horizontal mirror image.
    pub fn mirrored(&self) -> TileGrid {
        let mut cells = Vec::with_capacity(self.cells.len());
        for row in self.rows() {
            cells.extend(row.iter().rev());
        }
        TileGrid::from_cells(self.width, self.height, cells)
    }

    /// VGLC text: one line per row, each terminated by `\n`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in self.rows() {
            out.extend(row.iter().map(|&b| b as char));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for TileGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parse VGLC level text against a vocabulary.
pub fn parse_level(text: &str, vocab: &TileVocab) -> Result<TileGrid, CorpusError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.is_empty() {
        return Err(CorpusError::EmptyLevel);
    }
    let mut width = None;
    let mut height = 0;
    let mut cells = Vec::with_capacity(body.len());
    for (row, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut count = 0;
        for (col, ch) in line.chars().enumerate() {
            let known = ch.is_ascii() && vocab.contains(ch as u8);
            if !known {
                return Err(CorpusError::UnknownTile { ch, row, col });
            }
            cells.push(ch as u8);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(CorpusError::RaggedRows {
                    row,
                    expected: w,
                    found: count,
                })
            }
            Some(_) => {}
        }
        height += 1;
    }
    let width = width.unwrap_or(0);
    if width == 0 {
        return Err(CorpusError::EmptyLevel);
    }
    Ok(TileGrid::from_cells(width, height, cells))
}

/// Prepend empty rows so the grid is exactly [`SEGMENT_SIZE`] rows tall.
///
/// Vertical sections pass through unchanged. The padding amount is derived
/// from the grid height; a debug note is logged when it differs from the
/// game's documented constant.
pub fn pad_level(
    grid: &TileGrid,
    map: &TileMap,
    orientation: Orientation,
) -> Result<TileGrid, CorpusError> {
    if orientation == Orientation::Vertical {
        return Ok(grid.clone());
    }
    if grid.height > SEGMENT_SIZE {
        return Err(CorpusError::HeightOverflow {
            height: grid.height,
            target: SEGMENT_SIZE,
        });
    }
    let missing = SEGMENT_SIZE - grid.height;
    if let Some(game) = map.game() {
        if let Some(documented) = game.documented_padding() {
            if missing != documented {
                log::debug!(
                    "{game} level of height {} needs {missing} padding rows (documented: {documented})",
                    grid.height
                );
            }
        }
    }
    let empty = map.vocab().empty_char();
    let mut cells = vec![empty; missing * grid.width];
    cells.extend_from_slice(&grid.cells);
    Ok(TileGrid::from_cells(grid.width, SEGMENT_SIZE, cells))
}

/// Where a segment came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Corpus {
        /// Corpus source, e.g. `smb`, `smb2j`, `ki`, `mm`.
        source: String,
        level: String,
        /// Column offset for horizontal windows, row offset for vertical.
        offset: usize,
        orientation: Orientation,
    },
    Generated,
}

impl Provenance {
    /// `level-id,offset` key used by label override files.
    pub fn override_key(&self) -> Option<(String, usize)> {
        match self {
            Provenance::Corpus { level, offset, .. } => Some((level.clone(), *offset)),
            Provenance::Generated => None,
        }
    }
}

/// A 16×16 window of tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    grid: TileGrid,
    source: Provenance,
}

impl Segment {
    pub fn new(grid: TileGrid, source: Provenance) -> Result<Self, CorpusError> {
        if grid.width != SEGMENT_SIZE || grid.height != SEGMENT_SIZE {
            return Err(CorpusError::NotASegment {
                width: grid.width,
                height: grid.height,
            });
        }
        Ok(Self { grid, source })
    }

    pub fn generated(grid: TileGrid) -> Result<Self, CorpusError> {
        Self::new(grid, Provenance::Generated)
    }

    /// Parse a 16-line text grid.
    pub fn parse(text: &str, vocab: &TileVocab) -> Result<Self, CorpusError> {
        Self::generated(parse_level(text, vocab)?)
    }

    pub fn filled(ch: u8) -> Self {
        Self {
            grid: TileGrid::filled(SEGMENT_SIZE, SEGMENT_SIZE, ch),
            source: Provenance::Generated,
        }
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn source(&self) -> &Provenance {
        &self.source
    }

    pub fn with_source(mut self, source: Provenance) -> Self {
        self.source = source;
        self
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.grid.get(row, col)
    }

    pub fn set(&mut self, row: usize, col: usize, ch: u8) {
        self.grid.set(row, col, ch);
    }

    pub fn cells(&self) -> &[u8] {
        self.grid.cells()
    }

    pub fn to_text(&self) -> String {
        self.grid.to_text()
    }
}

/// Number of windows of size [`SEGMENT_SIZE`] along an extent.
pub fn window_count(extent: usize, stride: usize) -> usize {
    if extent < SEGMENT_SIZE || stride == 0 {
        0
    } else {
        (extent - SEGMENT_SIZE) / stride + 1
    }
}

/// Slide a 16-tile window along a level.
///
/// Horizontal grids must be 16 rows tall and are windowed over columns;
/// vertical grids must be 16 columns wide and are windowed over rows.
/// Segments come back ordered by offset.
pub fn extract_segments(
    grid: &TileGrid,
    stride: usize,
    orientation: Orientation,
    source: &str,
    level: &str,
) -> Result<Vec<Segment>, CorpusError> {
    if stride == 0 {
        return Err(CorpusError::ZeroStride);
    }
    let (cross, extent) = match orientation {
        Orientation::Horizontal => (grid.height, grid.width),
        Orientation::Vertical => (grid.width, grid.height),
    };
    if cross != SEGMENT_SIZE {
        return Err(CorpusError::WrongCrossSection {
            expected: SEGMENT_SIZE,
            found: cross,
        });
    }
    if extent < SEGMENT_SIZE {
        return Err(CorpusError::TooSmall {
            extent,
            window: SEGMENT_SIZE,
        });
    }
    let n = window_count(extent, stride);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let offset = k * stride;
        let (rows, cols) = match orientation {
            Orientation::Horizontal => ([0, SEGMENT_SIZE], [offset, offset + SEGMENT_SIZE]),
            Orientation::Vertical => ([offset, offset + SEGMENT_SIZE], [0, SEGMENT_SIZE]),
        };
        let window = grid.crop(rows, cols)?;
        out.push(Segment {
            grid: window,
            source: Provenance::Corpus {
                source: source.to_string(),
                level: level.to_string(),
                offset,
                orientation,
            },
        });
    }
    Ok(out)
}

/// One-hot tensorisation of a segment, position-major:
/// `values[pos * vocab_size + channel]` with `pos = row * 16 + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub vocab_size: usize,
}

pub fn one_hot_encode(segment: &Segment, vocab: &TileVocab) -> Result<FeatureVector, CorpusError> {
    let v = vocab.len();
    let mut values = vec![0.0; SEGMENT_TILES * v];
    one_hot_into(segment, vocab, &mut values)?;
    Ok(FeatureVector {
        values,
        vocab_size: v,
    })
}

/// Write a one-hot encoding into a zeroed buffer of length `256 * |vocab|`.
pub fn one_hot_into(segment: &Segment, vocab: &TileVocab, out: &mut [f64]) -> Result<(), CorpusError> {
    let v = vocab.len();
    if out.len() != SEGMENT_TILES * v {
        return Err(CorpusError::BadLength {
            expected: SEGMENT_TILES * v,
            found: out.len(),
        });
    }
    for (pos, &ch) in segment.cells().iter().enumerate() {
        let channel = vocab.index_of(ch).ok_or(CorpusError::UnknownTile {
            ch: ch as char,
            row: pos / SEGMENT_SIZE,
            col: pos % SEGMENT_SIZE,
        })?;
        out[pos * v + channel] = 1.0;
    }
    Ok(())
}

/// Argmax decode; ties go to the lowest channel index.
pub fn one_hot_decode(features: &[f64], vocab: &TileVocab) -> Result<Segment, CorpusError> {
    let v = vocab.len();
    if features.len() != SEGMENT_TILES * v {
        return Err(CorpusError::BadLength {
            expected: SEGMENT_TILES * v,
            found: features.len(),
        });
    }
    let cells = features
        .chunks_exact(v)
        .map(|block| vocab.char_at(argmax(block)))
        .collect();
    Ok(Segment {
        grid: TileGrid::from_cells(SEGMENT_SIZE, SEGMENT_SIZE, cells),
        source: Provenance::Generated,
    })
}

#[inline]
fn argmax(block: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in block.iter().enumerate().skip(1) {
        if x > block[best] {
            best = i;
        }
    }
    best
}
