//! Ablation that trains the network to pull encoded pair members together
//! instead of reconstructing their difference.

use super::{fit_pairs, DdmmConfig, PairObjective, TrainConfig, TrainReport, Trained};
use crate::baselines::embed_set;
use crate::error::{Error, Result};
use crate::nn::{MlpAutoencoder, ModelFile, ModelKind, ModelMetadata};
use crate::rank::{euclidean_rank, EmbeddedSet, RankedResult, Retriever};
use crate::segment::{SegmentStore, VectorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonModel {
    pub encoder: MlpAutoencoder,
    pub window: usize,
    pub sensors: usize,
    pub ratios: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl ComparisonModel {
    pub fn index(&self, store: &SegmentStore) -> Result<ComparisonIndex> {
        let depth = self.encoder.layers().len();
        Ok(ComparisonIndex {
            set: embed_set(&self.encoder, depth, store)?,
        })
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut meta = ModelMetadata::new(ModelKind::Comparison, self.window, self.sensors, self.seed);
        meta.delta = Some(self.delta);
        meta.ratios = vec![self.ratios.clone()];
        ModelFile {
            metadata: meta,
            networks: vec![self.encoder.clone()],
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        if file.metadata.kind != ModelKind::Comparison {
            return Err(Error::Metadata(format!(
                "not a comparison model: {:?}",
                file.metadata.kind
            )));
        }
        let [net]: [MlpAutoencoder; 1] = file
            .networks
            .try_into()
            .map_err(|_| Error::Metadata("expected one network".into()))?;
        Ok(Self {
            encoder: net,
            window: file.metadata.window,
            sensors: file.metadata.sensors,
            ratios: file.metadata.ratios.into_iter().next().unwrap_or_default(),
            delta: file.metadata.delta.unwrap_or(super::DEFAULT_DELTA),
            seed: file.metadata.seed,
        })
    }
}

/// Train the encoder on weighted pair distances of its outputs.
pub fn train_comparison_model(
    store: &SegmentStore,
    config: &TrainConfig,
    arch: &DdmmConfig,
) -> Result<Trained<ComparisonModel>> {
    let mut net = MlpAutoencoder::new(store.dim(), &arch.ratios, config.seed)?;
    let report: TrainReport = fit_pairs(store, &mut net, config, PairObjective::Embedding)?;
    Ok(Trained {
        model: ComparisonModel {
            encoder: net,
            window: store.window(),
            sensors: store.sensors(),
            ratios: arch.ratios.clone(),
            delta: config.delta,
            seed: config.seed,
        },
        report,
    })
}

/// `||f(q) - f(w)||²` for the trained encoder `f`.
pub fn dc1_distance(model: &ComparisonModel, q: &[f64], w: &[f64]) -> Result<f64> {
    let fq = model.encoder.forward(q)?;
    let fw = model.encoder.forward(w)?;
    Ok(fq.iter().zip(&fw).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Archive encoded once; queries rank by squared distance of encodings.
pub struct ComparisonIndex {
    set: EmbeddedSet,
}

impl ComparisonIndex {
    pub fn encodings(&self) -> &EmbeddedSet {
        &self.set
    }
}

impl Retriever for ComparisonIndex {
    fn retrieve(&self, query: usize, k: usize) -> Result<RankedResult> {
        euclidean_rank(&self.set, query, k, true)
    }
}
