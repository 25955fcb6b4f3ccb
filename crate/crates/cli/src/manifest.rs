//! Run manifests: the invocation, its full configuration, and hashes of
//! everything read and written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Which sweep axis a run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    #[value(name = "K", alias = "k", alias = "window")]
    #[serde(rename = "K")]
    Window,
    Epochs,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Window => "K",
            Axis::Epochs => "epochs",
        }
    }
}

/// A subcommand with the arguments that are not part of [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Preprocess,
    Train {
        seed: u64,
    },
    Retrieve {
        model: PathBuf,
        queries: Vec<usize>,
        k: usize,
    },
    Benchmark,
    Sweep {
        axis: Axis,
        values: Vec<usize>,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Preprocess => "preprocess",
            Invocation::Train { .. } => "train",
            Invocation::Retrieve { .. } => "retrieve",
            Invocation::Benchmark => "benchmark",
            Invocation::Sweep { .. } => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub parallel: bool,
    pub invocation: Invocation,
    pub seeds: Vec<u64>,
    /// sha256 of files read, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of files written, keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(invocation: Invocation, config: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: ddmm_core::exec::is_parallel(),
            invocation,
            seeds: config.seeds.clone(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            config: config.clone(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, toml::to_string(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

/// Writes files under one directory and remembers their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.hashes.insert(name.to_string(), hash_bytes(bytes.as_ref()));
        Ok(path)
    }

    pub fn into_hashes(self) -> BTreeMap<String, String> {
        self.hashes
    }
}

/// Artifacts whose hash differs from (or is missing in) `expected`.
pub fn compare_artifacts(
    expected: &BTreeMap<String, String>,
    actual: &BTreeMap<String, String>,
) -> Vec<String> {
    expected
        .iter()
        .filter(|(name, hash)| actual.get(*name) != Some(hash))
        .map(|(name, _)| name.clone())
        .collect()
}
