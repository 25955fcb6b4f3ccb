//! A small dense autoencoder trained with backpropagation and Adam.
//!
//! All arithmetic is `f64`. Batches are row-major matrices (one sample per
//! row) so each layer is a single matrix product.

mod adam;
mod autoencoder;
mod persist;

pub use adam::{AdamConfig, AdamState};
pub use autoencoder::{
    layer_dims, paired_embedding_gradient, paired_embedding_loss, weighted_mse_gradient,
    weighted_mse_loss, Dense, Gradients, MlpAutoencoder, Trace,
};
pub use persist::{
    persist_model, restore_model, ModelFile, ModelKind, ModelMetadata, FORMAT_VERSION, MAGIC,
};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Layer ratios of the difference autoencoder.
pub const DDMM_RATIOS: [f64; 5] = [1.0, 0.75, 0.5, 0.75, 1.0];
/// Layer ratios of the baseline autoencoder.
pub const BASELINE_RATIOS: [f64; 3] = [1.0, 0.5, 1.0];

/// One weighted reconstruction step: exact gradient, then an Adam update.
///
/// Returns the loss evaluated before the update.
pub fn train_step(
    model: &mut MlpAutoencoder,
    adam: &mut AdamState,
    batch: ArrayView2<f64>,
    weights: &[f64],
) -> Result<f64> {
    let (loss, grads) = weighted_mse_gradient(model, batch, weights)?;
    apply_checked(model, adam, &grads, loss)?;
    Ok(loss)
}

/// Apply `grads` unless they contain NaN or infinity.
pub(crate) fn apply_checked(
    model: &mut MlpAutoencoder,
    adam: &mut AdamState,
    grads: &Gradients,
    loss: f64,
) -> Result<()> {
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            iteration: adam.step_count() as usize,
            loss,
        });
    }
    adam.update(model, grads)
}
