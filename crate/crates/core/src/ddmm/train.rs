use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairs::{PairBatch, PairSampler};
use super::{pair_weight, rescale_in_place, DdmmConfig, DdmmModel, InputSpace, RescaleMode, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{
    paired_embedding_gradient, paired_embedding_loss, weighted_mse_gradient, weighted_mse_loss,
    AdamConfig, AdamState, Gradients, MlpAutoencoder,
};
use crate::segment::{SegmentStore, VectorSet};

// Independent ChaCha streams derived from one seed.
pub(crate) const STREAM_PAIRS: u64 = 1;
pub(crate) const STREAM_VALIDATION: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean training loss (and optional validation loss) of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub steps: u64,
}

impl TrainReport {
    /// Loss log as CSV: `epoch,train_loss,validation_loss`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,validation_loss\n");
        for e in &self.epochs {
            let v = e.validation.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train, v));
        }
        s
    }
}

/// A trained model with its loss history.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub report: TrainReport,
}

/// What a pair batch is trained to minimize.
#[derive(Debug, Clone, Copy)]
pub(crate) enum PairObjective {
    /// Weighted reconstruction of the (rescaled) difference `a - b`.
    Difference(RescaleMode),
    /// Weighted distance between the network outputs of `a` and `b`.
    Embedding,
}

/// Anchor/positive matrices plus pair weights from the raw within-pair distance.
fn pair_inputs<S: VectorSet + ?Sized>(
    set: &S,
    batch: &PairBatch,
    delta: f64,
) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let (a, b) = batch.gather(set);
    let weights = (&a - &b)
        .map_axis(Axis(1), |r| pair_weight(r.dot(&r).sqrt(), delta))
        .to_vec();
    (a, b, weights)
}

fn differences(a: &Array2<f64>, b: &Array2<f64>, mode: RescaleMode) -> Result<Array2<f64>> {
    let mut d = a - b;
    for mut row in d.rows_mut() {
        rescale_in_place(row.as_slice_mut().expect("standard layout"), mode)?;
    }
    Ok(d)
}

fn batch_gradient<S: VectorSet + ?Sized>(
    net: &MlpAutoencoder,
    set: &S,
    batch: &PairBatch,
    delta: f64,
    objective: PairObjective,
) -> Result<(f64, Gradients)> {
    let (a, b, w) = pair_inputs(set, batch, delta);
    match objective {
        PairObjective::Difference(mode) => {
            let d = differences(&a, &b, mode)?;
            weighted_mse_gradient(net, d.view(), &w)
        }
        PairObjective::Embedding => paired_embedding_gradient(net, a.view(), b.view(), &w),
    }
}

/// `(sum of weights, weighted loss sum)` of a batch, for pooling across batches.
fn batch_loss_terms<S: VectorSet + ?Sized>(
    net: &MlpAutoencoder,
    set: &S,
    batch: &PairBatch,
    delta: f64,
    objective: PairObjective,
) -> Result<(f64, f64)> {
    let (a, b, w) = pair_inputs(set, batch, delta);
    let total: f64 = w.iter().sum();
    let loss = match objective {
        PairObjective::Difference(mode) => {
            let d = differences(&a, &b, mode)?;
            weighted_mse_loss(net, d.view(), &w)?
        }
        PairObjective::Embedding => paired_embedding_loss(net, a.view(), b.view(), &w)?,
    };
    Ok((total, loss * total))
}

/// Weighted loss of `net` on one pair batch, as the training loop computes it.
pub fn pair_batch_loss<S: VectorSet + ?Sized>(
    net: &MlpAutoencoder,
    set: &S,
    batch: &PairBatch,
    delta: f64,
    rescale: RescaleMode,
) -> Result<f64> {
    let (total, sum) = batch_loss_terms(net, set, batch, delta, PairObjective::Difference(rescale))?;
    Ok(sum / total)
}

/// Fixed validation pairs drawn from their own stream.
fn validation_batches(n: usize, config: &TrainConfig) -> Result<Vec<PairBatch>> {
    let count = (config.validation_fraction * (n / 2) as f64).round() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut sampler = PairSampler::new(n, config.pairing, stream_rng(config.seed, STREAM_VALIDATION))?;
    let mut out = Vec::new();
    let mut left = count;
    while left > 0 {
        let take = left.min(config.batch_size);
        out.push(sampler.next_batch(take)?);
        left -= take;
    }
    Ok(out)
}

/// Pair-based training loop shared by the difference autoencoder and the
/// comparison model.
pub(crate) fn fit_pairs<S: VectorSet + ?Sized>(
    set: &S,
    net: &mut MlpAutoencoder,
    config: &TrainConfig,
    objective: PairObjective,
) -> Result<TrainReport> {
    config.validate()?;
    if net.input_dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: set.dim(),
        });
    }
    let mut sampler = PairSampler::new(set.len(), config.pairing, stream_rng(config.seed, STREAM_PAIRS))?;
    let validation = validation_batches(set.len(), config)?;
    let mut adam = AdamState::new(
        net,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut report = TrainReport::default();
    for epoch in 1..=config.epochs {
        let batches = match config.iterations {
            None => sampler.epoch(config.batch_size)?,
            Some(i) => (0..i)
                .map(|_| sampler.next_batch(config.batch_size))
                .collect::<Result<_>>()?,
        };
        let mut sum = 0.0;
        for (it, batch) in batches.iter().enumerate() {
            let (loss, grads) = batch_gradient(net, set, batch, config.delta, objective)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    iteration: it + 1,
                    loss,
                });
            }
            adam.update(net, &grads)?;
            sum += loss;
        }
        let validation_loss = if validation.is_empty() {
            None
        } else {
            let (mut w, mut l) = (0.0, 0.0);
            for b in &validation {
                let (bw, bl) = batch_loss_terms(net, set, b, config.delta, objective)?;
                w += bw;
                l += bl;
            }
            Some(l / w)
        };
        report.epochs.push(EpochLoss {
            epoch,
            train: sum / batches.len() as f64,
            validation: validation_loss,
        });
    }
    report.steps = adam.step_count();
    Ok(report)
}

/// Train a difference autoencoder over any vector set.
pub fn train_ddmm_on<S: VectorSet + ?Sized>(
    set: &S,
    config: &TrainConfig,
    ddmm: &DdmmConfig,
) -> Result<Trained<MlpAutoencoder>> {
    let mut net = MlpAutoencoder::new(set.dim(), &ddmm.ratios, config.seed)?;
    let report = fit_pairs(set, &mut net, config, PairObjective::Difference(ddmm.rescale))?;
    Ok(Trained { model: net, report })
}

/// Train the segment-space distance model.
pub fn train_ddmm(
    store: &SegmentStore,
    config: &TrainConfig,
    ddmm: &DdmmConfig,
) -> Result<Trained<DdmmModel>> {
    let Trained { model: net, report } = train_ddmm_on(store, config, ddmm)?;
    Ok(Trained {
        model: DdmmModel {
            autoencoder: net,
            delta: config.delta,
            rescale: ddmm.rescale,
            space: InputSpace::Segment,
            window: store.window(),
            sensors: store.sensors(),
            ratios: ddmm.ratios.clone(),
            normalization: None,
            seed: config.seed,
        },
        report,
    })
}
