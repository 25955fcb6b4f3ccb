//! Reference retrievers: plain Euclidean k-NN and Euclidean k-NN over the
//! hidden layer of a reconstruction autoencoder.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::ddmm::{EpochLoss, TrainConfig, TrainReport, Trained};
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{
    weighted_mse_gradient, weighted_mse_loss, AdamConfig, AdamState, MlpAutoencoder, ModelFile,
    ModelKind, ModelMetadata, BASELINE_RATIOS,
};
use crate::rank::{euclidean_rank, gather, EmbeddedSet, RankedResult, Retriever, SCORE_CHUNK};
use crate::segment::{SegmentStore, VectorSet};

/// Euclidean retrieval straight on segment vectors.
pub struct EuclideanIndex<'a> {
    store: &'a SegmentStore,
}

impl<'a> EuclideanIndex<'a> {
    pub fn new(store: &'a SegmentStore) -> Self {
        Self { store }
    }
}

impl Retriever for EuclideanIndex<'_> {
    fn retrieve(&self, query: usize, k: usize) -> Result<RankedResult> {
        euclidean_rank(self.store, query, k, false)
    }
}

/// Top-k segments by `||q - w||`, excluding windows overlapping the query.
pub fn euclidean_retrieve(store: &SegmentStore, query: usize, k: usize) -> Result<RankedResult> {
    euclidean_rank(store, query, k, false)
}

/// A trained `1 -> 0.5 -> 1` autoencoder whose hidden layer is the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AeEmbedder {
    pub autoencoder: MlpAutoencoder,
    pub window: usize,
    pub sensors: usize,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

impl AeEmbedder {
    /// Index of the layer whose output is the embedding (the bottleneck).
    pub fn depth(&self) -> usize {
        let dims = self.autoencoder.dims();
        dims.iter()
            .enumerate()
            .skip(1)
            .take(dims.len() - 2)
            .min_by_key(|&(i, &d)| (d, i))
            .map_or(1, |(i, _)| i)
    }

    pub fn embedding_dim(&self) -> usize {
        self.autoencoder.dims()[self.depth()]
    }

    /// Embed every vector of `set`, keeping time indices.
    pub fn embed<S: VectorSet + ?Sized>(&self, set: &S) -> Result<EmbeddedSet> {
        embed_set(&self.autoencoder, self.depth(), set)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut meta = ModelMetadata::new(ModelKind::AeBaseline, self.window, self.sensors, self.seed);
        meta.ratios = vec![self.ratios.clone()];
        meta.embedding_depth = Some(self.depth());
        ModelFile {
            metadata: meta,
            networks: vec![self.autoencoder.clone()],
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        if file.metadata.kind != ModelKind::AeBaseline {
            return Err(Error::Metadata(format!(
                "not a baseline autoencoder: {:?}",
                file.metadata.kind
            )));
        }
        let [net]: [MlpAutoencoder; 1] = file
            .networks
            .try_into()
            .map_err(|_| Error::Metadata("expected one network".into()))?;
        Ok(Self {
            autoencoder: net,
            window: file.metadata.window,
            sensors: file.metadata.sensors,
            ratios: file.metadata.ratios.into_iter().next().unwrap_or_default(),
            seed: file.metadata.seed,
        })
    }
}

/// Activations of layer `depth` for every vector of `set`, chunked across workers.
pub(crate) fn embed_set<S: VectorSet + ?Sized>(
    net: &MlpAutoencoder,
    depth: usize,
    set: &S,
) -> Result<EmbeddedSet> {
    let parts = exec::map_chunks(set.len(), SCORE_CHUNK, |r| {
        let pos: Vec<usize> = r.collect();
        net.encode_batch(gather(set, &pos).view(), depth)
    });
    let width = net.dims()[depth];
    let mut flat = Vec::with_capacity(set.len() * width);
    for p in parts {
        flat.extend(p?.iter().copied());
    }
    let vectors = Array2::from_shape_vec((set.len(), width), flat).expect("embedding shape");
    let times = (0..set.len()).map(|p| set.time_of(p)).collect();
    EmbeddedSet::new(vectors, times, set.window())
}

/// Train the baseline autoencoder under unweighted squared reconstruction error.
pub fn train_ae_baseline(store: &SegmentStore, config: &TrainConfig) -> Result<Trained<AeEmbedder>> {
    train_ae_baseline_with(store, config, &BASELINE_RATIOS)
}

pub fn train_ae_baseline_with(
    store: &SegmentStore,
    config: &TrainConfig,
    ratios: &[f64],
) -> Result<Trained<AeEmbedder>> {
    config.validate()?;
    let n = store.len();
    let mut net = MlpAutoencoder::new(store.dim(), ratios, config.seed)?;
    let mut rng = crate::ddmm::stream_rng(config.seed, crate::ddmm::STREAM_PAIRS);
    let mut val_rng = crate::ddmm::stream_rng(config.seed, crate::ddmm::STREAM_VALIDATION);
    let val_count = (config.validation_fraction * n as f64).round() as usize;
    let validation: Vec<usize> = {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut val_rng);
        all.truncate(val_count);
        all
    };

    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut report = TrainReport::default();
    for epoch in 1..=config.epochs {
        let batches: Vec<Vec<usize>> = match config.iterations {
            None => {
                order.shuffle(&mut rng);
                cursor = n;
                order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
            }
            Some(iters) => (0..iters)
                .map(|_| {
                    (0..config.batch_size)
                        .map(|_| {
                            if cursor >= n {
                                order.shuffle(&mut rng);
                                cursor = 0;
                            }
                            cursor += 1;
                            order[cursor - 1]
                        })
                        .collect()
                })
                .collect(),
        };
        let mut sum = 0.0;
        for (it, pos) in batches.iter().enumerate() {
            let x = gather(store, pos);
            let ones = vec![1.0; pos.len()];
            let (loss, grads) = weighted_mse_gradient(&net, x.view(), &ones)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    iteration: it + 1,
                    loss,
                });
            }
            adam.update(&mut net, &grads)?;
            sum += loss;
        }
        let validation_loss = if validation.is_empty() {
            None
        } else {
            let x = gather(store, &validation);
            Some(weighted_mse_loss(&net, x.view(), &vec![1.0; validation.len()])?)
        };
        report.epochs.push(EpochLoss {
            epoch,
            train: sum / batches.len() as f64,
            validation: validation_loss,
        });
    }
    report.steps = adam.step_count();
    Ok(Trained {
        model: AeEmbedder {
            autoencoder: net,
            window: store.window(),
            sensors: store.sensors(),
            ratios: ratios.to_vec(),
            seed: config.seed,
        },
        report,
    })
}

/// Euclidean retrieval in a precomputed embedding space.
pub struct EmbeddingIndex {
    set: EmbeddedSet,
}

impl EmbeddingIndex {
    pub fn new(embedder: &AeEmbedder, store: &SegmentStore) -> Result<Self> {
        Ok(Self {
            set: embedder.embed(store)?,
        })
    }

    pub fn embeddings(&self) -> &EmbeddedSet {
        &self.set
    }
}

impl Retriever for EmbeddingIndex {
    fn retrieve(&self, query: usize, k: usize) -> Result<RankedResult> {
        euclidean_rank(&self.set, query, k, false)
    }
}

/// Top-k segments by Euclidean distance between embeddings.
pub fn ae_embedding_retrieve(
    embedder: &AeEmbedder,
    store: &SegmentStore,
    query: usize,
    k: usize,
) -> Result<RankedResult> {
    EmbeddingIndex::new(embedder, store)?.retrieve(query, k)
}
