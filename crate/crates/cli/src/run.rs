use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Output directory of one command. Every artifact written through it is
/// listed with its SHA-256 in `manifest.json`. The manifest holds no paths
/// or timestamps, so reruns with equal inputs give equal bytes.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    manifest: Manifest,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: &'static str,
    params: BTreeMap<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating run directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                params: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("parameter serialises");
        self.manifest.params.insert(key.to_string(), value);
    }

    /// Record the digest of an input file.
    pub fn input(&mut self, key: &str, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.insert(key.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let bytes = bytes.as_ref();
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.path(MANIFEST);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
