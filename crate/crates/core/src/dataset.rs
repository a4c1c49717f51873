//! Training datasets built from a VGLC-style corpus directory.
//!
//! Element datasets slide a window with stride 1 over one game's levels and
//! label each segment with its element bits. The pattern dataset uses
//! non-overlapping windows over SMB and SMB2 (Japan). The blend dataset
//! concatenates SMB, KI twice, and MM under a merged tile vocabulary with
//! one-hot game labels.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    extract_segments, pad_level, parse_level, CorpusError, Provenance, Segment, TileGrid, SEGMENT_SIZE,
};
use crate::cvae::{stream_rng, CvaeError, TrainingSet};
use crate::labeling::{
    blend_label, element_label, label_to_int, pattern_label, ElementMap, LabelError, LabelVector,
    PatternOverrides, Scheme,
};
use crate::tiles::{Game, Orientation, TileMap, TileMapError, TileVocab};

/// Version of the JSON dataset file layout.
pub const DATASET_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corpus directory {0} is missing or has no .txt levels")]
    MissingCorpus(PathBuf),
    #[error("{path}: {source}")]
    Level {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("level {level} is {width}x{height}; add [[section]] entries to the tile map to split it")]
    NeedsSections {
        level: String,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    TileMap(#[from] TileMapError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("dataset file: {0}")]
    Format(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which dataset to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "game")]
pub enum DatasetKind {
    Elements(Game),
    Patterns,
    Blend,
}

impl DatasetKind {
    pub fn scheme(self) -> Scheme {
        match self {
            DatasetKind::Elements(game) => Scheme::elements_for(game),
            DatasetKind::Patterns => Scheme::PatternsSmb,
            DatasetKind::Blend => Scheme::Blend,
        }
    }

    pub fn default_stride(self) -> usize {
        match self {
            DatasetKind::Patterns => SEGMENT_SIZE,
            _ => 1,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::Elements(game) => write!(f, "elements-{game}"),
            DatasetKind::Patterns => f.write_str("patterns"),
            DatasetKind::Blend => f.write_str("blend"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    /// `elements-smb`, `elements-ki`, `elements-mm`, `patterns` or `blend`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "patterns" | "patterns-smb" => Ok(DatasetKind::Patterns),
            "blend" => Ok(DatasetKind::Blend),
            other => other
                .strip_prefix("elements-")
                .and_then(|g| g.parse().ok())
                .map(DatasetKind::Elements)
                .ok_or_else(|| format!("unknown dataset kind `{other}`")),
        }
    }
}

/// Per-game level directories relative to a corpus root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusLayout {
    pub smb: PathBuf,
    pub smb2j: PathBuf,
    pub ki: PathBuf,
    pub mm: PathBuf,
}

impl Default for CorpusLayout {
    fn default() -> Self {
        Self {
            smb: "Super Mario Bros/Processed".into(),
            smb2j: "Super Mario Bros 2 (Japan)/Processed".into(),
            ki: "Kid Icarus/Processed".into(),
            mm: "MegaMan/Processed".into(),
        }
    }
}

impl CorpusLayout {
    pub fn dir_for(&self, game: Game) -> &Path {
        match game {
            Game::Smb => &self.smb,
            Game::Ki => &self.ki,
            Game::Mm => &self.mm,
        }
    }
}

/// The three per-game tile maps.
#[derive(Debug, Clone)]
pub struct TileMaps {
    pub smb: TileMap,
    pub ki: TileMap,
    pub mm: TileMap,
}

impl Default for TileMaps {
    fn default() -> Self {
        Self {
            smb: TileMap::builtin(Game::Smb),
            ki: TileMap::builtin(Game::Ki),
            mm: TileMap::builtin(Game::Mm),
        }
    }
}

impl TileMaps {
    pub fn get(&self, game: Game) -> &TileMap {
        match game {
            Game::Smb => &self.smb,
            Game::Ki => &self.ki,
            Game::Mm => &self.mm,
        }
    }

    /// Merged map for the blend dataset, SMB tiles first.
    pub fn blend(&self) -> Result<TileMap, TileMapError> {
        TileMap::union("blend", &[&self.smb, &self.ki, &self.mm])
    }

    /// Tile map for a model's label scheme.
    pub fn for_scheme(&self, scheme: Scheme) -> Result<TileMap, TileMapError> {
        Ok(match scheme {
            Scheme::PatternsSmb => self.smb.clone(),
            Scheme::Blend => self.blend()?,
            element => self.get(element.element_game().expect("element scheme")).clone(),
        })
    }

    /// Label read off a segment's content. Blend labels name a source game
    /// rather than content, so they yield `None`.
    pub fn derive_label(&self, segment: &Segment, scheme: Scheme) -> Result<Option<LabelVector>, LabelError> {
        Ok(match scheme {
            Scheme::Blend => None,
            Scheme::PatternsSmb => Some(pattern_label(segment, &self.smb, None)),
            element => {
                let game = element.element_game().expect("element scheme");
                Some(element_label(segment, &ElementMap::from_tile_map(self.get(game), game)?))
            }
        })
    }

    /// Tile map matching a dataset kind.
    pub fn for_kind(&self, kind: DatasetKind) -> Result<TileMap, TileMapError> {
        Ok(match kind {
            DatasetKind::Elements(game) => self.get(game).clone(),
            DatasetKind::Patterns => self.smb.clone(),
            DatasetKind::Blend => self.blend()?,
        })
    }
}

/// Everything needed to build a dataset.
#[derive(Debug, Clone)]
pub struct BuildOptions<'a> {
    pub root: &'a Path,
    pub layout: &'a CorpusLayout,
    pub maps: &'a TileMaps,
    /// Overrides the kind's default stride.
    pub stride: Option<usize>,
    pub overrides: Option<&'a PatternOverrides>,
}

/// A labelled segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub game: Game,
    pub segment: Segment,
    pub label: LabelVector,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub stride: usize,
    pub vocab: TileVocab,
    pub examples: Vec<Example>,
}

/// A level file loaded and split into single-direction sections ready for
/// windowing.
#[derive(Debug, Clone)]
pub struct LevelSection {
    pub level: String,
    pub orientation: Orientation,
    pub grid: TileGrid,
}

/// Sorted `.txt` files of a directory.
pub fn level_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let entries = fs::read_dir(dir).map_err(|_| DatasetError::MissingCorpus(dir.to_path_buf()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    if files.is_empty() {
        return Err(DatasetError::MissingCorpus(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

/// Parse one level and split it into padded sections.
///
/// Sections come from the map's `[[section]]` entries for the level's file
/// stem. Without entries, a level at most 16 rows tall is one horizontal
/// section and a level exactly 16 columns wide is one vertical section.
pub fn load_level(text: &str, level: &str, map: &TileMap, default: Orientation) -> Result<Vec<LevelSection>, DatasetError> {
    let grid = parse_level(text, map.vocab())?;
    let declared: Vec<_> = map.sections_for(level).collect();
    let raw: Vec<(Orientation, TileGrid)> = if !declared.is_empty() {
        declared
            .iter()
            .map(|s| Ok((s.orientation, grid.crop(s.rows, s.cols)?)))
            .collect::<Result<_, CorpusError>>()?
    } else if default == Orientation::Horizontal && grid.height() <= SEGMENT_SIZE {
        vec![(Orientation::Horizontal, grid)]
    } else if grid.width() == SEGMENT_SIZE {
        vec![(Orientation::Vertical, grid)]
    } else if grid.height() <= SEGMENT_SIZE {
        vec![(Orientation::Horizontal, grid)]
    } else {
        return Err(DatasetError::NeedsSections {
            level: level.to_string(),
            width: grid.width(),
            height: grid.height(),
        });
    };
    raw.into_iter()
        .map(|(orientation, grid)| {
            Ok(LevelSection {
                level: level.to_string(),
                orientation,
                grid: pad_level(&grid, map, orientation)?,
            })
        })
        .collect()
}

/// Window every level in `dir` and return the segments in file order.
pub fn segments_from_dir(
    dir: &Path,
    source: &str,
    map: &TileMap,
    default: Orientation,
    stride: usize,
) -> Result<Vec<Segment>, DatasetError> {
    let mut out = Vec::new();
    for path in level_files(dir)? {
        let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io {
            path: path.clone(),
            source,
        })?;
        let level = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let sections = load_level(&text, &level, map, default).map_err(|e| match e {
            DatasetError::Corpus(source) => DatasetError::Level {
                path: path.clone(),
                source,
            },
            other => other,
        })?;
        for section in sections {
            let segments = extract_segments(&section.grid, stride, section.orientation, source, &level)
                .map_err(|source| DatasetError::Level {
                    path: path.clone(),
                    source,
                })?;
            out.extend(segments);
        }
    }
    Ok(out)
}

fn default_orientation(game: Game) -> Orientation {
    match game {
        Game::Ki => Orientation::Vertical,
        _ => Orientation::Horizontal,
    }
}

/// Fails on the first tile missing from `vocab`.
fn check_vocab(segment: &Segment, vocab: &TileVocab) -> Result<(), CorpusError> {
    for (pos, &ch) in segment.cells().iter().enumerate() {
        if !vocab.contains(ch) {
            return Err(CorpusError::UnknownTile {
                ch: ch as char,
                row: pos / SEGMENT_SIZE,
                col: pos % SEGMENT_SIZE,
            });
        }
    }
    Ok(())
}

pub fn build_dataset(kind: DatasetKind, opts: &BuildOptions<'_>) -> Result<Dataset, DatasetError> {
    let stride = opts.stride.unwrap_or(kind.default_stride());
    if stride == 0 {
        return Err(CorpusError::ZeroStride.into());
    }
    let game_segments = |game: Game| {
        segments_from_dir(
            &opts.root.join(opts.layout.dir_for(game)),
            game.as_str(),
            opts.maps.get(game),
            default_orientation(game),
            stride,
        )
    };
    let mut examples = Vec::new();
    let vocab = match kind {
        DatasetKind::Elements(game) => {
            let map = opts.maps.get(game);
            let elements = ElementMap::from_tile_map(map, game)?;
            for segment in game_segments(game)? {
                let label = element_label(&segment, &elements);
                examples.push(Example { game, segment, label });
            }
            map.vocab().clone()
        }
        DatasetKind::Patterns => {
            let map = &opts.maps.smb;
            let mut segments = game_segments(Game::Smb)?;
            segments.extend(segments_from_dir(
                &opts.root.join(&opts.layout.smb2j),
                "smb2j",
                map,
                Orientation::Horizontal,
                stride,
            )?);
            for segment in segments {
                let label = pattern_label(&segment, map, opts.overrides);
                examples.push(Example {
                    game: Game::Smb,
                    segment,
                    label,
                });
            }
            map.vocab().clone()
        }
        DatasetKind::Blend => {
            let blend = opts.maps.blend()?;
            for game in Game::ALL {
                let segments = game_segments(game)?;
                let copies = if game == Game::Ki { 2 } else { 1 };
                for _ in 0..copies {
                    for segment in &segments {
                        check_vocab(segment, blend.vocab())?;
                        examples.push(Example {
                            game,
                            segment: segment.clone(),
                            label: blend_label(game),
                        });
                    }
                }
            }
            blend.vocab().clone()
        }
    };
    log::info!("built {kind} dataset: {} segments", examples.len());
    Ok(Dataset {
        kind,
        stride,
        vocab,
        examples,
    })
}

impl Dataset {
    pub fn scheme(&self) -> Scheme {
        self.kind.scheme()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_for(&self, game: Game) -> usize {
        self.examples.iter().filter(|e| e.game == game).count()
    }

    /// Number of examples per integer label value.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.scheme().cardinality() as usize];
        for e in &self.examples {
            counts[label_to_int(&e.label) as usize] += 1;
        }
        counts
    }

    /// Seeded random subset of at most `n` examples, kept in dataset order.
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset {
        let mut picks = rand::seq::index::sample(&mut stream_rng(seed, 0), self.len(), n.min(self.len())).into_vec();
        picks.sort_unstable();
        Dataset {
            kind: self.kind,
            stride: self.stride,
            vocab: self.vocab.clone(),
            examples: picks.into_iter().map(|i| self.examples[i].clone()).collect(),
        }
    }

    pub fn training_set(&self) -> Result<TrainingSet, CvaeError> {
        TrainingSet::from_segments(
            self.vocab.clone(),
            self.scheme(),
            self.examples.iter().map(|e| (e.segment.clone(), e.label)),
        )
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            format: DATASET_FORMAT,
            kind: self.kind,
            scheme: self.scheme(),
            stride: self.stride,
            vocab: VocabFile::from(&self.vocab),
            examples: self
                .examples
                .iter()
                .map(|e| ExampleFile {
                    game: e.game,
                    label: e.label.to_string(),
                    source: e.segment.source().clone(),
                    segment: e.segment.to_text(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("dataset serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
        if file.format != DATASET_FORMAT {
            return Err(DatasetError::Format(format!(
                "unsupported format {} (expected {DATASET_FORMAT})",
                file.format
            )));
        }
        if file.scheme != file.kind.scheme() {
            return Err(DatasetError::Format(format!(
                "scheme {} does not match kind {}",
                file.scheme, file.kind
            )));
        }
        let vocab = file.vocab.into_vocab()?;
        let mut examples = Vec::with_capacity(file.examples.len());
        for e in file.examples {
            let segment = Segment::parse(&e.segment, &vocab)?.with_source(e.source);
            let label = LabelVector::parse(file.scheme, &e.label)?;
            examples.push(Example {
                game: e.game,
                segment,
                label,
            });
        }
        Ok(Self {
            kind: file.kind,
            stride: file.stride,
            vocab,
            examples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_json()).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: u32,
    kind: DatasetKind,
    scheme: Scheme,
    stride: usize,
    vocab: VocabFile,
    examples: Vec<ExampleFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleFile {
    game: Game,
    label: String,
    source: Provenance,
    segment: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    name: String,
    empty: char,
    tiles: Vec<(char, String)>,
}

impl From<&TileVocab> for VocabFile {
    fn from(v: &TileVocab) -> Self {
        Self {
            name: v.name().to_string(),
            empty: v.empty_char() as char,
            tiles: (0..v.len())
                .map(|i| (v.char_at(i) as char, v.tile_name(i).to_string()))
                .collect(),
        }
    }
}

impl VocabFile {
    fn into_vocab(self) -> Result<TileVocab, DatasetError> {
        Ok(TileVocab::new(self.name, self.tiles, self.empty)?)
    }
}
