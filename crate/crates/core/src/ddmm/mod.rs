//! Deep distance measurement: an autoencoder trained on weighted difference
//! vectors of segment pairs, whose reconstruction error of `q - w` serves as
//! the distance between a query `q` and an archive segment `w`.

mod combined;
mod comparison;
mod pairs;
mod train;

pub use combined::{train_ae_ddmm, FrontEnd};
pub use comparison::{dc1_distance, train_comparison_model, ComparisonIndex, ComparisonModel};
pub use pairs::{sample_pairs, PairBatch, PairSampler, PairStrategy};
pub use train::{pair_batch_loss, train_ddmm, train_ddmm_on, EpochLoss, TrainReport, Trained};
pub(crate) use train::{fit_pairs, stream_rng, PairObjective, STREAM_PAIRS, STREAM_VALIDATION};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NormalizationParams;
use crate::nn::{MlpAutoencoder, ModelFile, ModelKind, ModelMetadata, DDMM_RATIOS};
use crate::rank::{rank_with, EmbeddedSet, RankedResult, Retriever};
use crate::segment::{SegmentStore, VectorSet};

/// Default `δ` in the pair weight.
pub const DEFAULT_DELTA: f64 = 1e-6;
/// Default pairs per minibatch.
pub const DEFAULT_BATCH_SIZE: usize = 256;

/// How difference vectors are presented to the sigmoid autoencoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleMode {
    /// `(d + 1) / 2`, mapping [-1, 1] onto the sigmoid's range.
    #[default]
    Affine01,
    /// The signed difference as is.
    Raw,
}

/// `a - b`, componentwise.
pub fn difference_vector(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// `1 / (distance² + δ)`.
#[inline]
pub fn pair_weight(distance: f64, delta: f64) -> f64 {
    1.0 / (distance * distance + delta)
}

/// Rescale a difference vector in place.
pub fn rescale_in_place(d: &mut [f64], mode: RescaleMode) -> Result<()> {
    if mode == RescaleMode::Affine01 {
        for (i, v) in d.iter_mut().enumerate() {
            if !(-1.0..=1.0).contains(v) {
                return Err(Error::RescaleRange { index: i, value: *v });
            }
            *v = (*v + 1.0) * 0.5;
        }
    }
    Ok(())
}

/// Rescaled copy of `d`.
pub fn rescale(d: &[f64], mode: RescaleMode) -> Result<Vec<f64>> {
    let mut out = d.to_vec();
    rescale_in_place(&mut out, mode)?;
    Ok(out)
}

/// Hyper-parameters shared by every trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minibatches per epoch; `None` means one full pass of pairs (or
    /// segments, for the baseline autoencoder) per epoch.
    pub iterations: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub delta: f64,
    pub seed: u64,
    /// Share of pairs held out for the per-epoch validation loss. Reported
    /// only; it never stops or steers training.
    pub validation_fraction: f64,
    pub pairing: PairStrategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            iterations: None,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: 1e-3,
            delta: DEFAULT_DELTA,
            seed: 0,
            validation_fraction: 0.2,
            pairing: PairStrategy::ShuffledDisjoint,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.iterations == Some(0) {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Architecture and input handling of the difference autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdmmConfig {
    pub ratios: Vec<f64>,
    pub rescale: RescaleMode,
}

impl Default for DdmmConfig {
    fn default() -> Self {
        Self {
            ratios: DDMM_RATIOS.to_vec(),
            rescale: RescaleMode::Affine01,
        }
    }
}

/// Where the difference autoencoder's inputs live.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpace {
    /// Raw `m·K` segment vectors.
    Segment,
    /// Scaled embeddings produced by a front-end autoencoder.
    Embedding(FrontEnd),
}

/// A trained distance model.
#[derive(Debug, Clone, PartialEq)]
pub struct DdmmModel {
    pub autoencoder: MlpAutoencoder,
    pub delta: f64,
    pub rescale: RescaleMode,
    pub space: InputSpace,
    pub window: usize,
    pub sensors: usize,
    pub ratios: Vec<f64>,
    pub normalization: Option<NormalizationParams>,
    pub seed: u64,
}

impl DdmmModel {
    pub fn input_dim(&self) -> usize {
        self.autoencoder.input_dim()
    }

    /// Distance of `w` from `q`, both already in the model's input space.
    pub fn distance(&self, q: &[f64], w: &[f64]) -> Result<f64> {
        ddm_distance(self, q, w)
    }

    /// Prepare `store` for retrieval (embedding it first when needed).
    pub fn index<'a>(&'a self, store: &'a SegmentStore) -> Result<DdmmIndex<'a>> {
        if store.window() != self.window || store.sensors() != self.sensors {
            return Err(Error::Metadata(format!(
                "model expects K={} m={}, store has K={} m={}",
                self.window,
                self.sensors,
                store.window(),
                store.sensors()
            )));
        }
        let space = match &self.space {
            InputSpace::Segment => Space::Segments(store),
            InputSpace::Embedding(front) => Space::Embedded(front.embed(store)?),
        };
        Ok(DdmmIndex { model: self, space })
    }

    /// Model file with metadata; front-end networks are stored first.
    pub fn to_model_file(&self) -> ModelFile {
        let kind = match self.space {
            InputSpace::Segment => ModelKind::Ddmm,
            InputSpace::Embedding(_) => ModelKind::AeDdmm,
        };
        let mut meta = ModelMetadata::new(kind, self.window, self.sensors, self.seed);
        meta.delta = Some(self.delta);
        meta.rescale = Some(self.rescale);
        meta.normalization = self.normalization.clone();
        let mut networks = Vec::new();
        if let InputSpace::Embedding(front) = &self.space {
            meta.ratios.push(front.ratios.clone());
            meta.embedding_normalization = Some(front.scaling.clone());
            meta.embedding_depth = Some(front.depth);
            networks.push(front.autoencoder.clone());
        }
        meta.ratios.push(self.ratios.clone());
        networks.push(self.autoencoder.clone());
        ModelFile {
            metadata: meta,
            networks,
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        let meta = file.metadata;
        let bad = |m: &str| Error::Metadata(m.to_string());
        let mut nets = file.networks.into_iter();
        let mut ratios = meta.ratios.into_iter();
        let space = match meta.kind {
            ModelKind::Ddmm => InputSpace::Segment,
            ModelKind::AeDdmm => InputSpace::Embedding(FrontEnd {
                autoencoder: nets.next().ok_or_else(|| bad("missing front-end network"))?,
                depth: meta
                    .embedding_depth
                    .ok_or_else(|| bad("missing embedding_depth"))?,
                scaling: meta
                    .embedding_normalization
                    .ok_or_else(|| bad("missing embedding_normalization"))?,
                ratios: ratios.next().unwrap_or_default(),
            }),
            other => return Err(Error::Metadata(format!("not a DDMM model: {other:?}"))),
        };
        let autoencoder = nets.next().ok_or_else(|| bad("missing distance network"))?;
        if nets.next().is_some() {
            return Err(bad("unexpected extra network"));
        }
        Ok(Self {
            autoencoder,
            delta: meta.delta.ok_or_else(|| bad("missing delta"))?,
            rescale: meta.rescale.ok_or_else(|| bad("missing rescale"))?,
            space,
            window: meta.window,
            sensors: meta.sensors,
            ratios: ratios.next().unwrap_or_default(),
            normalization: meta.normalization,
            seed: meta.seed,
        })
    }
}

/// `||AE(r) - r||²` with `r = rescale(q - w)`.
pub fn ddm_distance(model: &DdmmModel, q: &[f64], w: &[f64]) -> Result<f64> {
    let dim = model.input_dim();
    for v in [q, w] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let r = rescale(&difference_vector(q, w)?, model.rescale)?;
    let y = model.autoencoder.forward(&r)?;
    Ok(y.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum())
}

enum Space<'a> {
    Segments(&'a SegmentStore),
    Embedded(EmbeddedSet),
}

impl Space<'_> {
    fn set(&self) -> &dyn VectorSet {
        match self {
            Space::Segments(s) => *s,
            Space::Embedded(e) => e,
        }
    }
}

/// A model bound to an archive, ready to answer queries.
pub struct DdmmIndex<'a> {
    model: &'a DdmmModel,
    space: Space<'a>,
}

impl DdmmIndex<'_> {
    /// Archive vectors in the model's input space.
    pub fn vectors(&self) -> &dyn VectorSet {
        self.space.set()
    }

    /// DDM of every archive position against the vector at `query`.
    fn score(&self, q: &[f64], positions: &[usize]) -> Result<Vec<f64>> {
        let set = self.space.set();
        let d = set.dim();
        let mut batch = Array2::<f64>::zeros((positions.len(), d));
        for (mut row, &p) in batch.rows_mut().into_iter().zip(positions) {
            let w = set.vector(p);
            let r = row.as_slice_mut().expect("standard layout");
            for ((o, a), b) in r.iter_mut().zip(q).zip(w) {
                *o = a - b;
            }
            rescale_in_place(r, self.model.rescale)?;
        }
        Ok(self.model.autoencoder.reconstruction_errors(batch.view())?.to_vec())
    }
}

impl Retriever for DdmmIndex<'_> {
    fn retrieve(&self, query: usize, k: usize) -> Result<RankedResult> {
        let set = self.space.set();
        let qpos = set.position_of(query).ok_or_else(|| Error::OutOfRange {
            index: query,
            valid: "segment time indices".into(),
        })?;
        let q = set.vector(qpos);
        rank_with(set, query, k, |pos| self.score(q, pos))
    }
}

/// Top-k archive segments for the query at time `query`, nearest first,
/// skipping windows that overlap the query.
pub fn retrieve(model: &DdmmModel, store: &SegmentStore, query: usize, k: usize) -> Result<RankedResult> {
    model.index(store)?.retrieve(query, k)
}
