//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DDMMODEL"
//! version    u32
//! meta_len   u64
//! metadata   meta_len bytes of UTF-8 TOML
//! params     f64 LE, network by network, layer by layer:
//!            weights (row-major, out x in) then bias
//! ```
//!
//! The layer widths of every network are recorded in the metadata, so the
//! parameter block length is fully determined by it.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::autoencoder::{Dense, MlpAutoencoder};
use crate::ddmm::RescaleMode;
use crate::error::{Error, Result};
use crate::ingest::NormalizationParams;

pub const MAGIC: &[u8; 8] = b"DDMMODEL";
pub const FORMAT_VERSION: u32 = 1;

/// Which retriever a model file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Difference autoencoder over raw segments.
    Ddmm,
    /// Baseline autoencoder front end followed by a difference autoencoder.
    AeDdmm,
    /// Baseline autoencoder, retrieval by embedding distance.
    AeBaseline,
    /// Paired-embedding comparison model.
    Comparison,
    /// Training-free Euclidean retrieval; no networks.
    Euclidean,
}

/// Everything besides the parameters needed to reuse a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: ModelKind,
    /// Segment length K.
    pub window: usize,
    /// Sensor count m.
    pub sensors: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<RescaleMode>,
    /// Layer ratios of each stored network, in storage order.
    #[serde(default)]
    pub ratios: Vec<Vec<f64>>,
    /// Layer widths of each stored network; filled in on write.
    #[serde(default)]
    pub networks: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Scaling applied to the raw series before segmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationParams>,
    /// Scaling applied to front-end embeddings (AE+DDMM only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_normalization: Option<NormalizationParams>,
    /// Front-end layer whose activations are the embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_depth: Option<usize>,
}

impl ModelMetadata {
    pub fn new(kind: ModelKind, window: usize, sensors: usize, seed: u64) -> Self {
        Self {
            kind,
            window,
            sensors,
            seed,
            delta: None,
            rescale: None,
            ratios: Vec::new(),
            networks: Vec::new(),
            epochs: None,
            normalization: None,
            embedding_normalization: None,
            embedding_depth: None,
        }
    }
}

/// Metadata plus zero or more networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub metadata: ModelMetadata,
    pub networks: Vec<MlpAutoencoder>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = self.metadata.clone();
        meta.networks = self.networks.iter().map(MlpAutoencoder::dims).collect();
        let text = toml::to_string(&meta).map_err(|e| Error::Metadata(e.to_string()))?;
        let params: usize = self.networks.iter().map(|n| n.parameter_count()).sum();
        let mut out = Vec::with_capacity(20 + text.len() + 8 * params);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for net in &self.networks {
            for layer in net.layers() {
                for v in layer.weights.iter().chain(layer.bias.iter()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::ModelFormat(msg.to_string());
        if bytes.len() < 20 {
            return Err(fail("truncated header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let meta_end = 20usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fail("truncated metadata"))?;
        let text = std::str::from_utf8(&bytes[20..meta_end]).map_err(|_| fail("metadata is not UTF-8"))?;
        let metadata: ModelMetadata = toml::from_str(text).map_err(|e| Error::Metadata(e.to_string()))?;

        let mut cursor = meta_end;
        let mut next = |n: usize| -> Result<Vec<f64>> {
            let end = cursor
                .checked_add(n * 8)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| fail("truncated parameters"))?;
            let vals = bytes[cursor..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            cursor = end;
            Ok(vals)
        };
        let mut networks = Vec::with_capacity(metadata.networks.len());
        for dims in &metadata.networks {
            if dims.len() < 2 {
                return Err(fail("network with fewer than two layer widths"));
            }
            let mut layers = Vec::with_capacity(dims.len() - 1);
            for w in dims.windows(2) {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = Array2::from_shape_vec((fan_out, fan_in), next(fan_in * fan_out)?)
                    .map_err(|e| Error::ModelFormat(e.to_string()))?;
                let bias = Array1::from_vec(next(fan_out)?);
                layers.push(Dense { weights, bias });
            }
            networks.push(MlpAutoencoder::from_layers(layers)?);
        }
        if cursor != bytes.len() {
            return Err(fail("trailing bytes after parameters"));
        }
        Ok(Self { metadata, networks })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Serialize a single network with its metadata.
pub fn persist_model(model: &MlpAutoencoder, metadata: &ModelMetadata) -> Result<Vec<u8>> {
    ModelFile {
        metadata: metadata.clone(),
        networks: vec![model.clone()],
    }
    .to_bytes()
}

/// Inverse of [`persist_model`].
pub fn restore_model(bytes: &[u8]) -> Result<(MlpAutoencoder, ModelMetadata)> {
    let mut file = ModelFile::from_bytes(bytes)?;
    if file.networks.len() != 1 {
        return Err(Error::ModelFormat(format!(
            "expected one network, found {}",
            file.networks.len()
        )));
    }
    let net = file.networks.pop().unwrap();
    Ok((net, file.metadata))
}
