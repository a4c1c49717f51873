//! Tile maps: the per-game character alphabet, tile semantics, element
//! categories and level-section annotations.
//!
//! A [`TileMap`] is loaded from a TOML file (see `tilemaps/` for the shipped
//! defaults). Its tile order defines the one-hot channel order, so the map is
//! hashed into every checkpoint and a reordered map is rejected at load time.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const SMB_TOML: &str = include_str!("../tilemaps/smb.toml");
const KI_TOML: &str = include_str!("../tilemaps/ki.toml");
const MM_TOML: &str = include_str!("../tilemaps/mm.toml");

#[derive(Debug, Error)]
pub enum TileMapError {
    #[error("cannot read tile map {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid tile map: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("tile map `{map}`: {reason}")]
    Invalid { map: String, reason: String },
}

/// The three games in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Game {
    Smb,
    Ki,
    Mm,
}

impl Game {
    pub const ALL: [Game; 3] = [Game::Smb, Game::Ki, Game::Mm];

    pub fn as_str(self) -> &'static str {
        match self {
            Game::Smb => "smb",
            Game::Ki => "ki",
            Game::Mm => "mm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Game::Smb => "SMB",
            Game::Ki => "KI",
            Game::Mm => "MM",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Game::Smb => 0,
            Game::Ki => 1,
            Game::Mm => 2,
        }
    }

    /// Number of empty rows the published setup adds to horizontal sections
    /// of this game, when it pads them at all.
    pub fn documented_padding(self) -> Option<usize> {
        match self {
            Game::Smb => Some(1),
            Game::Mm => Some(2),
            Game::Ki => None,
        }
    }
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Game {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smb" => Ok(Game::Smb),
            "ki" => Ok(Game::Ki),
            "mm" => Ok(Game::Mm),
            other => Err(format!("unknown game `{other}` (expected smb, ki or mm)")),
        }
    }
}

/// Scroll direction of a level or level section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// One tile of a map, as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileDef {
    pub char: char,
    pub name: String,
    #[serde(default)]
    pub elements: Vec<String>,
    #[serde(default)]
    pub solid: bool,
    #[serde(default)]
    pub empty: bool,
    #[serde(default)]
    pub hazard: bool,
    #[serde(default)]
    pub enemy: bool,
    #[serde(default)]
    pub pipe: bool,
    #[serde(default)]
    pub collectable: bool,
    #[serde(default)]
    pub reward: bool,
    #[serde(default)]
    pub decorative: bool,
}

/// A rectangular part of a level that scrolls in a single direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionDef {
    pub level: String,
    pub orientation: Orientation,
    /// Half-open row range.
    pub rows: [usize; 2],
    /// Half-open column range.
    pub cols: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TileMapFile {
    name: String,
    version: u32,
    empty: char,
    #[serde(default)]
    elements: Vec<String>,
    #[serde(rename = "tile")]
    tiles: Vec<TileDef>,
    #[serde(default, rename = "section")]
    sections: Vec<SectionDef>,
}

/// Category flags of a tile, resolved once for fast lookups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TileFlags {
    pub solid: bool,
    pub empty: bool,
    pub hazard: bool,
    pub enemy: bool,
    pub pipe: bool,
    pub collectable: bool,
    pub reward: bool,
    pub decorative: bool,
}

/// The ordered tile alphabet used for one-hot encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileVocab {
    name: String,
    chars: Vec<u8>,
    names: Vec<String>,
    empty: u8,
    lookup: [u8; 128],
}

const NO_TILE: u8 = u8::MAX;

impl TileVocab {
    pub fn new(
        name: impl Into<String>,
        tiles: Vec<(char, String)>,
        empty: char,
    ) -> Result<Self, TileMapError> {
        let name = name.into();
        let invalid = |reason: String| TileMapError::Invalid {
            map: name.clone(),
            reason,
        };
        if tiles.is_empty() {
            return Err(invalid("vocabulary is empty".into()));
        }
        if tiles.len() >= NO_TILE as usize {
            return Err(invalid(format!("too many tiles ({})", tiles.len())));
        }
        let mut lookup = [NO_TILE; 128];
        let mut chars = Vec::with_capacity(tiles.len());
        let mut names = Vec::with_capacity(tiles.len());
        for (i, (ch, tile_name)) in tiles.into_iter().enumerate() {
            if !ch.is_ascii_graphic() {
                return Err(invalid(format!(
                    "tile character {ch:?} must be printable ASCII"
                )));
            }
            let b = ch as u8;
            if lookup[b as usize] != NO_TILE {
                return Err(invalid(format!("duplicate tile character {ch:?}")));
            }
            lookup[b as usize] = i as u8;
            chars.push(b);
            names.push(tile_name);
        }
        if !empty.is_ascii() || lookup[empty as usize] == NO_TILE {
            return Err(invalid(format!(
                "empty tile {empty:?} is not in the vocabulary"
            )));
        }
        Ok(Self {
            name,
            chars,
            names,
            empty: empty as u8,
            lookup,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Channel index of a tile character.
    #[inline]
    pub fn index_of(&self, ch: u8) -> Option<usize> {
        if ch >= 128 {
            return None;
        }
        match self.lookup[ch as usize] {
            NO_TILE => None,
            i => Some(i as usize),
        }
    }

    #[inline]
    pub fn char_at(&self, index: usize) -> u8 {
        self.chars[index]
    }

    pub fn tile_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn chars(&self) -> &[u8] {
        &self.chars
    }

    pub fn empty_char(&self) -> u8 {
        self.empty
    }

    pub fn contains(&self, ch: u8) -> bool {
        self.index_of(ch).is_some()
    }

    /// Stable 64-bit fingerprint of the ordered vocabulary.
    pub fn hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.name.as_bytes());
        hasher.update([0u8]);
        for (ch, name) in self.chars.iter().zip(&self.names) {
            hasher.update([*ch]);
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([self.empty]);
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

/// A parsed and validated tile map.
#[derive(Debug, Clone)]
pub struct TileMap {
    vocab: TileVocab,
    version: u32,
    tiles: Vec<TileDef>,
    flags: Vec<TileFlags>,
    elements: Vec<String>,
    /// Per tile, bitmask over `elements`.
    element_masks: Vec<u32>,
    sections: Vec<SectionDef>,
}

impl TileMap {
    pub fn from_toml_str(text: &str) -> Result<Self, TileMapError> {
        let file: TileMapFile = toml::from_str(text)?;
        Self::from_parts(file.name, file.version, file.empty, file.elements, file.tiles, file.sections)
    }

    pub fn from_path(path: &Path) -> Result<Self, TileMapError> {
        let text = std::fs::read_to_string(path).map_err(|source| TileMapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The shipped default map for a game.
    pub fn builtin(game: Game) -> Self {
        let text = match game {
            Game::Smb => SMB_TOML,
            Game::Ki => KI_TOML,
            Game::Mm => MM_TOML,
        };
        Self::from_toml_str(text).expect("shipped tile maps are valid")
    }

    /// Raw text of a shipped default map.
    pub fn builtin_source(game: Game) -> &'static str {
        match game {
            Game::Smb => SMB_TOML,
            Game::Ki => KI_TOML,
            Game::Mm => MM_TOML,
        }
    }

    fn from_parts(
        name: String,
        version: u32,
        empty: char,
        elements: Vec<String>,
        tiles: Vec<TileDef>,
        sections: Vec<SectionDef>,
    ) -> Result<Self, TileMapError> {
        let vocab = TileVocab::new(
            name.clone(),
            tiles.iter().map(|t| (t.char, t.name.clone())).collect(),
            empty,
        )?;
        let invalid = |reason: String| TileMapError::Invalid {
            map: name.clone(),
            reason,
        };
        if elements.len() > 32 {
            return Err(invalid("at most 32 element categories are supported".into()));
        }
        let unique: BTreeSet<&String> = elements.iter().collect();
        if unique.len() != elements.len() {
            return Err(invalid("duplicate element category".into()));
        }
        let mut element_masks = Vec::with_capacity(tiles.len());
        for tile in &tiles {
            let mut mask = 0u32;
            for element in &tile.elements {
                let bit = elements.iter().position(|e| e == element).ok_or_else(|| {
                    invalid(format!(
                        "tile {:?} names unknown element category `{element}`",
                        tile.char
                    ))
                })?;
                mask |= 1 << bit;
            }
            element_masks.push(mask);
        }
        for section in &sections {
            if section.rows[0] >= section.rows[1] || section.cols[0] >= section.cols[1] {
                return Err(invalid(format!(
                    "section of level `{}` has an empty range",
                    section.level
                )));
            }
        }
        let flags = tiles
            .iter()
            .map(|t| TileFlags {
                solid: t.solid,
                empty: t.empty || t.char == empty,
                hazard: t.hazard,
                enemy: t.enemy,
                pipe: t.pipe,
                collectable: t.collectable,
                reward: t.reward,
                decorative: t.decorative,
            })
            .collect();
        Ok(Self {
            vocab,
            version,
            tiles,
            flags,
            elements,
            element_masks,
            sections,
        })
    }

    /// Merge several maps into one alphabet (used for the blend dataset).
    ///
    /// Tiles keep their first-seen position; a character defined by more than
    /// one map keeps the first definition. Element categories are dropped
    /// since blend labels name games, not elements.
    pub fn union(name: &str, maps: &[&TileMap]) -> Result<Self, TileMapError> {
        let mut tiles: Vec<TileDef> = Vec::new();
        for map in maps {
            for tile in &map.tiles {
                match tiles.iter().find(|t| t.char == tile.char) {
                    Some(existing) => {
                        if existing.solid != tile.solid
                            || existing.hazard != tile.hazard
                            || existing.enemy != tile.enemy
                        {
                            log::debug!(
                                "tile {:?} differs between maps; keeping `{}` over `{}`",
                                tile.char,
                                existing.name,
                                tile.name
                            );
                        }
                    }
                    None => {
                        let mut tile = tile.clone();
                        tile.elements.clear();
                        tiles.push(tile);
                    }
                }
            }
        }
        let empty = maps
            .first()
            .map(|m| m.vocab.empty_char() as char)
            .unwrap_or('-');
        Self::from_parts(name.to_string(), 1, empty, Vec::new(), tiles, Vec::new())
    }

    pub fn name(&self) -> &str {
        self.vocab.name()
    }

    /// The game this map belongs to, if its name is a game id.
    pub fn game(&self) -> Option<Game> {
        self.name().parse().ok()
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn vocab(&self) -> &TileVocab {
        &self.vocab
    }

    pub fn tiles(&self) -> &[TileDef] {
        &self.tiles
    }

    /// Element category names in label bit order.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn sections(&self) -> &[SectionDef] {
        &self.sections
    }

    pub fn sections_for<'a>(&'a self, level: &'a str) -> impl Iterator<Item = &'a SectionDef> + 'a {
        self.sections.iter().filter(move |s| s.level == level)
    }

    #[inline]
    pub fn flags(&self, ch: u8) -> TileFlags {
        self.vocab
            .index_of(ch)
            .map(|i| self.flags[i])
            .unwrap_or_default()
    }

    /// Element-category bitmask of a tile (bit i = `elements()[i]`).
    #[inline]
    pub fn element_mask(&self, ch: u8) -> u32 {
        self.vocab
            .index_of(ch)
            .map(|i| self.element_masks[i])
            .unwrap_or(0)
    }

    pub fn tile_def(&self, ch: u8) -> Option<&TileDef> {
        self.vocab.index_of(ch).map(|i| &self.tiles[i])
    }
}

/// The three shipped maps merged for the blend dataset.
pub fn builtin_blend_map() -> TileMap {
    let smb = TileMap::builtin(Game::Smb);
    let ki = TileMap::builtin(Game::Ki);
    let mm = TileMap::builtin(Game::Mm);
    TileMap::union("blend", &[&smb, &ki, &mm]).expect("shipped tile maps merge")
}
