use std::path::{Path, PathBuf};

use anyhow::Context;
use levelcvae::dataset::{CorpusLayout, TileMaps};
use levelcvae::labeling::PatternOverrides;
use levelcvae::TileMap;
use serde::Deserialize;

use crate::Usage;

/// Optional TOML config. Relative paths resolve against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus_root: Option<PathBuf>,
    pub layout: CorpusLayout,
    pub tile_maps: TileMapPaths,
    pub pattern_overrides: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileMapPaths {
    pub smb: Option<PathBuf>,
    pub ki: Option<PathBuf>,
    pub mm: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub latent: Option<usize>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub decay_factor: Option<f64>,
    pub decay_every: Option<u32>,
    pub kl_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub n: Option<usize>,
    pub trees: Option<usize>,
    pub test_fraction: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut config.corpus_root);
        fix(&mut config.pattern_overrides);
        fix(&mut config.tile_maps.smb);
        fix(&mut config.tile_maps.ki);
        fix(&mut config.tile_maps.mm);
        Ok(config)
    }

    pub fn tile_maps(&self) -> anyhow::Result<TileMaps> {
        let mut maps = TileMaps::default();
        for (slot, path) in [
            (&mut maps.smb, &self.tile_maps.smb),
            (&mut maps.ki, &self.tile_maps.ki),
            (&mut maps.mm, &self.tile_maps.mm),
        ] {
            if let Some(path) = path {
                *slot = TileMap::from_path(path).map_err(|e| Usage(format!("tile map {}: {e}", path.display())))?;
            }
        }
        Ok(maps)
    }

    pub fn overrides(&self) -> anyhow::Result<Option<PatternOverrides>> {
        self.pattern_overrides
            .as_deref()
            .map(|p| PatternOverrides::from_path(p).with_context(|| format!("pattern overrides {}", p.display())))
            .transpose()
    }
}
