//! Binary conditioning labels: per-game element labels, SMB design-pattern
//! labels and game-blend labels.
//!
//! Bit 0 is the leftmost bit of the printed bitstring and the most
//! significant bit of the integer encoding, so `10011` is 19.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Segment, SEGMENT_SIZE};
use crate::tiles::{Game, TileMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label value {value} is out of range for a {len}-bit label")]
    OutOfRange { value: u32, len: usize },
    #[error("label `{text}` must be a {expected}-character bitstring")]
    BadBitstring { text: String, expected: usize },
    #[error("override for {level},{offset} has {found} bits, expected {expected}")]
    BadOverrideLength {
        level: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("override file line {line}: {reason}")]
    BadOverrideLine { line: usize, reason: String },
    #[error("tile map `{map}` has {found} element categories, scheme {scheme} needs {expected}")]
    CategoryMismatch {
        map: String,
        scheme: Scheme,
        expected: usize,
        found: usize,
    },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Label scheme: which meaning the bits carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "elements-smb")]
    ElementsSmb,
    #[serde(rename = "elements-ki")]
    ElementsKi,
    #[serde(rename = "elements-mm")]
    ElementsMm,
    #[serde(rename = "patterns-smb")]
    PatternsSmb,
    #[serde(rename = "blend")]
    Blend,
}

#[allow(clippy::len_without_is_empty)]
impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::ElementsSmb,
        Scheme::ElementsKi,
        Scheme::ElementsMm,
        Scheme::PatternsSmb,
        Scheme::Blend,
    ];

    pub fn len(self) -> usize {
        match self {
            Scheme::ElementsSmb | Scheme::ElementsMm => 5,
            Scheme::ElementsKi => 4,
            Scheme::PatternsSmb => 10,
            Scheme::Blend => 3,
        }
    }

    /// Number of distinct labels, `2^len`.
    pub fn cardinality(self) -> u32 {
        1 << self.len()
    }

    pub fn elements_for(game: Game) -> Scheme {
        match game {
            Game::Smb => Scheme::ElementsSmb,
            Game::Ki => Scheme::ElementsKi,
            Game::Mm => Scheme::ElementsMm,
        }
    }

    /// The game whose element categories this scheme labels.
    pub fn element_game(self) -> Option<Game> {
        match self {
            Scheme::ElementsSmb => Some(Game::Smb),
            Scheme::ElementsKi => Some(Game::Ki),
            Scheme::ElementsMm => Some(Game::Mm),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ElementsSmb => "elements-smb",
            Scheme::ElementsKi => "elements-ki",
            Scheme::ElementsMm => "elements-mm",
            Scheme::PatternsSmb => "patterns-smb",
            Scheme::Blend => "blend",
        }
    }

    /// Stable numeric id used in checkpoint files.
    pub fn id(self) -> u8 {
        match self {
            Scheme::ElementsSmb => 1,
            Scheme::ElementsKi => 2,
            Scheme::ElementsMm => 3,
            Scheme::PatternsSmb => 4,
            Scheme::Blend => 5,
        }
    }

    pub fn from_id(id: u8) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.id() == id)
    }

    /// Human-readable bit names, in bit order.
    pub fn bit_names(self) -> Vec<&'static str> {
        match self {
            Scheme::ElementsSmb => vec!["Enemy", "Pipe", "Coin", "Breakable", "Question-Mark"],
            Scheme::ElementsKi => vec!["Hazard", "Door", "Moving-Platform", "Fixed-Platform"],
            Scheme::ElementsMm => vec!["Hazard", "Door", "Ladder", "Platform", "Collectable"],
            Scheme::PatternsSmb => PatternId::ALL.iter().map(|p| p.code()).collect(),
            Scheme::Blend => vec!["SMB", "KI", "MM"],
        }
    }

    /// Every label of the scheme, in integer order.
    pub fn all_labels(self) -> impl Iterator<Item = LabelVector> {
        (0..self.cardinality()).map(move |n| LabelVector { scheme: self, value: n })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.as_str() == s)
            .ok_or_else(|| format!("unknown label scheme `{s}`"))
    }
}

/// A fixed-length binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelVector {
    scheme: Scheme,
    value: u32,
}

impl LabelVector {
    pub fn zeros(scheme: Scheme) -> Self {
        Self { scheme, value: 0 }
    }

    pub fn from_bits(scheme: Scheme, bits: &[bool]) -> Result<Self, LabelError> {
        if bits.len() != scheme.len() {
            return Err(LabelError::BadBitstring {
                text: bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                expected: scheme.len(),
            });
        }
        let value = bits.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Ok(Self { scheme, value })
    }

    /// Parse a bitstring such as `10011`.
    pub fn parse(scheme: Scheme, text: &str) -> Result<Self, LabelError> {
        let bad = || LabelError::BadBitstring {
            text: text.to_string(),
            expected: scheme.len(),
        };
        if text.len() != scheme.len() {
            return Err(bad());
        }
        let mut bits = Vec::with_capacity(text.len());
        for ch in text.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(bad()),
            }
        }
        Self::from_bits(scheme, &bits)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.scheme.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value == 0
    }

    /// Bit `i`, counted from the left.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit index out of range");
        (self.value >> (self.len() - 1 - i)) & 1 == 1
    }

    pub fn with_bit(mut self, i: usize, on: bool) -> Self {
        assert!(i < self.len(), "bit index out of range");
        let mask = 1 << (self.len() - 1 - i);
        if on {
            self.value |= mask;
        } else {
            self.value &= !mask;
        }
        self
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.bit(i)).collect()
    }

    /// 0.0/1.0 network inputs, in bit order.
    pub fn to_inputs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| if self.bit(i) { 1.0 } else { 0.0 }).collect()
    }

    pub fn count_ones(&self) -> u32 {
        self.value.count_ones()
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn label_to_int(label: &LabelVector) -> u32 {
    label.value
}

pub fn int_to_label(n: u32, scheme: Scheme) -> Result<LabelVector, LabelError> {
    if n >= scheme.cardinality() {
        return Err(LabelError::OutOfRange {
            value: n,
            len: scheme.len(),
        });
    }
    Ok(LabelVector { scheme, value: n })
}

/// Which tile characters count as which element category.
#[derive(Debug, Clone)]
pub struct ElementMap {
    scheme: Scheme,
    /// Per ASCII character, bitmask over categories (bit i = category i).
    masks: [u32; 128],
}

impl ElementMap {
    pub fn from_tile_map(map: &TileMap, game: Game) -> Result<Self, LabelError> {
        let scheme = Scheme::elements_for(game);
        if map.elements().len() != scheme.len() {
            return Err(LabelError::CategoryMismatch {
                map: map.name().to_string(),
                scheme,
                expected: scheme.len(),
                found: map.elements().len(),
            });
        }
        let mut masks = [0u32; 128];
        for &ch in map.vocab().chars() {
            masks[ch as usize] = map.element_mask(ch);
        }
        Ok(Self { scheme, masks })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Category bitmask of a tile (category i at bit i).
    #[inline]
    pub fn mask(&self, ch: u8) -> u32 {
        if ch < 128 {
            self.masks[ch as usize]
        } else {
            0
        }
    }
}

/// Bit i is set iff a tile of category i occurs anywhere in the segment.
pub fn element_label(segment: &Segment, map: &ElementMap) -> LabelVector {
    let present = segment.cells().iter().fold(0u32, |acc, &ch| acc | map.mask(ch));
    let len = map.scheme.len();
    // category i sits at bit i of the mask but at position i from the left of the label
    let value = (0..len).fold(0u32, |acc, i| (acc << 1) | ((present >> i) & 1));
    LabelVector {
        scheme: map.scheme,
        value,
    }
}

/// Game-blend label: SMB → 100, KI → 010, MM → 001.
pub fn blend_label(game: Game) -> LabelVector {
    LabelVector {
        scheme: Scheme::Blend,
        value: 1 << (2 - game.index()),
    }
}

/// The ten SMB design patterns, in label bit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternId {
    EnemyHorde,
    Gap,
    PipeValley,
    GapValley,
    NullValley,
    EnemyValley,
    MultiPath,
    RiskReward,
    StairUp,
    StairDown,
}

impl PatternId {
    pub const ALL: [PatternId; 10] = [
        PatternId::EnemyHorde,
        PatternId::Gap,
        PatternId::PipeValley,
        PatternId::GapValley,
        PatternId::NullValley,
        PatternId::EnemyValley,
        PatternId::MultiPath,
        PatternId::RiskReward,
        PatternId::StairUp,
        PatternId::StairDown,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PatternId::EnemyHorde => "EH",
            PatternId::Gap => "G",
            PatternId::PipeValley => "PV",
            PatternId::GapValley => "GV",
            PatternId::NullValley => "NV",
            PatternId::EnemyValley => "EV",
            PatternId::MultiPath => "MP",
            PatternId::RiskReward => "RR",
            PatternId::StairUp => "SU",
            PatternId::StairDown => "SD",
        }
    }

    pub fn bit(self) -> usize {
        PatternId::ALL.iter().position(|&p| p == self).unwrap()
    }
}

/// Height of the topmost solid tile per column (16 = top row, 0 = no solid).
pub fn column_heights(segment: &Segment, map: &TileMap) -> [usize; SEGMENT_SIZE] {
    let mut heights = [0; SEGMENT_SIZE];
    for (col, h) in heights.iter_mut().enumerate() {
        *h = (0..SEGMENT_SIZE)
            .find(|&row| map.flags(segment.get(row, col)).solid)
            .map_or(0, |row| SEGMENT_SIZE - row);
    }
    heights
}

/// Columns whose bottom tile is not solid.
pub fn gap_columns<'a>(segment: &'a Segment, map: &'a TileMap) -> impl Iterator<Item = usize> + 'a {
    let bottom = SEGMENT_SIZE - 1;
    (0..SEGMENT_SIZE).filter(move |&col| !map.flags(segment.get(bottom, col)).solid)
}

/// A floor interval flanked by columns at least two tiles taller than
/// every floor column. `floor` is a half-open column range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Valley {
    pub floor: (usize, usize),
}

/// For every left wall, extend the floor while columns stay at least two
/// below the wall; the first column that does not is the right wall and
/// must stand two above the floor's highest column.
pub fn find_valleys(heights: &[usize; SEGMENT_SIZE]) -> Vec<Valley> {
    let mut out = Vec::new();
    for left in 0..SEGMENT_SIZE {
        let wall = heights[left];
        if wall < 2 {
            continue;
        }
        let mut col = left + 1;
        let mut floor_max = 0;
        while col < SEGMENT_SIZE && heights[col] + 2 <= wall {
            floor_max = floor_max.max(heights[col]);
            col += 1;
        }
        if col > left + 1 && col < SEGMENT_SIZE && heights[col] >= floor_max + 2 {
            out.push(Valley {
                floor: (left + 1, col),
            });
        }
    }
    out
}

fn positions_where(segment: &Segment, pred: impl Fn(u8) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for row in 0..SEGMENT_SIZE {
        for col in 0..SEGMENT_SIZE {
            if pred(segment.get(row, col)) {
                out.push((row, col));
            }
        }
    }
    out
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn stair(heights: &[usize; SEGMENT_SIZE], step: isize) -> bool {
    heights.windows(3).any(|w| {
        w[0] >= 1
            && w[1] as isize == w[0] as isize + step
            && w[2] as isize == w[1] as isize + step
            && w[2] >= 1
    })
}

/// Deterministic detector for one design pattern on an SMB segment.
pub fn detect_pattern(segment: &Segment, id: PatternId, map: &TileMap) -> bool {
    let solid = |ch: u8| map.flags(ch).solid;
    match id {
        PatternId::Gap => gap_columns(segment, map).next().is_some(),
        PatternId::StairUp => stair(&column_heights(segment, map), 1),
        PatternId::StairDown => stair(&column_heights(segment, map), -1),
        PatternId::EnemyHorde => {
            let enemies = positions_where(segment, |ch| map.flags(ch).enemy);
            enemies
                .iter()
                .enumerate()
                .any(|(i, &a)| enemies[i + 1..].iter().any(|&b| chebyshev(a, b) <= 2))
        }
        PatternId::PipeValley => {
            let pipe_cols: Vec<usize> = (0..SEGMENT_SIZE)
                .filter(|&col| (0..SEGMENT_SIZE).any(|row| map.flags(segment.get(row, col)).pipe))
                .collect();
            pipe_cols.windows(2).any(|w| w[1] - w[0] > 2)
        }
        PatternId::GapValley | PatternId::NullValley | PatternId::EnemyValley => {
            let heights = column_heights(segment, map);
            let bottom = SEGMENT_SIZE - 1;
            find_valleys(&heights).iter().any(|v| {
                let cols = v.floor.0..v.floor.1;
                match id {
                    PatternId::GapValley => cols.clone().any(|c| !solid(segment.get(bottom, c))),
                    _ => {
                        let has_enemy = cols.clone().any(|c| {
                            (0..SEGMENT_SIZE).any(|r| map.flags(segment.get(r, c)).enemy)
                        });
                        if id == PatternId::EnemyValley {
                            has_enemy
                        } else {
                            !has_enemy
                        }
                    }
                }
            })
        }
        PatternId::MultiPath => {
            for row in 1..SEGMENT_SIZE - 1 {
                let mut run = 0;
                for col in 0..SEGMENT_SIZE {
                    let floating = solid(segment.get(row, col))
                        && !solid(segment.get(row + 1, col))
                        && !solid(segment.get(row - 1, col));
                    run = if floating { run + 1 } else { 0 };
                    if run >= 3 {
                        return true;
                    }
                }
            }
            false
        }
        PatternId::RiskReward => {
            let enemies = positions_where(segment, |ch| map.flags(ch).enemy);
            let rewards = positions_where(segment, |ch| map.flags(ch).collectable);
            rewards
                .iter()
                .any(|&r| enemies.iter().any(|&e| chebyshev(r, e) <= 2))
        }
    }
}

/// Manually assigned pattern labels keyed by `(level-id, offset)`.
#[derive(Debug, Clone, Default)]
pub struct PatternOverrides {
    entries: HashMap<(String, usize), LabelVector>,
}

impl PatternOverrides {
    /// Parse `level-id,offset,bitstring` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(LabelError::BadOverrideLine {
                    line: i + 1,
                    reason: "expected `level-id,offset,bitstring`".into(),
                });
            }
            let offset: usize = parts[1].parse().map_err(|_| LabelError::BadOverrideLine {
                line: i + 1,
                reason: format!("bad offset `{}`", parts[1]),
            })?;
            let bits = parts[2];
            if bits.len() != Scheme::PatternsSmb.len() {
                return Err(LabelError::BadOverrideLength {
                    level: parts[0].to_string(),
                    offset,
                    expected: Scheme::PatternsSmb.len(),
                    found: bits.len(),
                });
            }
            let label = LabelVector::parse(Scheme::PatternsSmb, bits).map_err(|_| {
                LabelError::BadOverrideLine {
                    line: i + 1,
                    reason: format!("bad bitstring `{bits}`"),
                }
            })?;
            entries.insert((parts[0].to_string(), offset), label);
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, level: &str, offset: usize) -> Option<LabelVector> {
        self.entries.get(&(level.to_string(), offset)).copied()
    }
}

/// Ten pattern bits from the detectors, unless an override exists for the
/// segment's provenance.
pub fn pattern_label(
    segment: &Segment,
    map: &TileMap,
    overrides: Option<&PatternOverrides>,
) -> LabelVector {
    if let (Some(overrides), Some((level, offset))) = (overrides, segment.source().override_key()) {
        if let Some(label) = overrides.get(&level, offset) {
            return label;
        }
    }
    let bits: Vec<bool> = PatternId::ALL
        .iter()
        .map(|&id| detect_pattern(segment, id, map))
        .collect();
    LabelVector::from_bits(Scheme::PatternsSmb, &bits).expect("ten pattern bits")
}
