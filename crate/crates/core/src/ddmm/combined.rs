use super::{train_ddmm_on, DdmmConfig, DdmmModel, InputSpace, TrainConfig, Trained};
use crate::baselines::{embed_set, train_ae_baseline};
use crate::error::Result;
use crate::ingest::NormalizationParams;
use crate::nn::MlpAutoencoder;
use crate::rank::EmbeddedSet;
use crate::segment::{SegmentStore, VectorSet};

/// Front-end autoencoder mapping segments into the space the difference
/// autoencoder works in.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    pub autoencoder: MlpAutoencoder,
    /// Layer whose activations are the embedding.
    pub depth: usize,
    /// Per-dimension min-max scaling fitted on the archive embeddings.
    pub scaling: NormalizationParams,
    pub ratios: Vec<f64>,
}

impl FrontEnd {
    /// Embed and scale every vector of `set`.
    pub fn embed<S: VectorSet + ?Sized>(&self, set: &S) -> Result<EmbeddedSet> {
        let raw = embed_set(&self.autoencoder, self.depth, set)?;
        let mut v = raw.vectors().clone();
        self.scaling.apply(&mut v)?;
        EmbeddedSet::new(v, raw.times().to_vec(), raw.window())
    }
}

/// Baseline autoencoder first, then a difference autoencoder over its
/// min-max scaled embeddings.
pub fn train_ae_ddmm(
    store: &SegmentStore,
    ae_config: &TrainConfig,
    ddmm_config: &TrainConfig,
    ddmm: &DdmmConfig,
) -> Result<Trained<DdmmModel>> {
    let embedder = train_ae_baseline(store, ae_config)?.model;
    let depth = embedder.depth();
    let raw = embed_set(&embedder.autoencoder, depth, store)?;
    let scaling = NormalizationParams::fit(raw.vectors());
    let front = FrontEnd {
        autoencoder: embedder.autoencoder,
        depth,
        scaling,
        ratios: embedder.ratios,
    };
    let embedded = front.embed(store)?;
    let Trained { model: net, report } = train_ddmm_on(&embedded, ddmm_config, ddmm)?;
    Ok(Trained {
        model: DdmmModel {
            autoencoder: net,
            delta: ddmm_config.delta,
            rescale: ddmm.rescale,
            space: InputSpace::Embedding(front),
            window: store.window(),
            sensors: store.sensors(),
            ratios: ddmm.ratios.clone(),
            normalization: None,
            seed: ddmm_config.seed,
        },
        report,
    })
}
