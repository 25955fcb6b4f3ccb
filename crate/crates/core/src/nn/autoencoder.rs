use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One dense layer: `y = sigmoid(W x + b)` with `W` shaped out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z.mapv_inplace(sigmoid);
        z
    }
}

/// Fully connected autoencoder with a logistic sigmoid after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAutoencoder {
    layers: Vec<Dense>,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }
}

/// Activations of every layer for one batch, input included.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace holds at least the input")
    }
}

/// Layer widths from ratios: `max(1, round(ratio * input_dim))`.
///
/// `f64::round` rounds half away from zero on every platform.
pub fn layer_dims(input_dim: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
    }
    if ratios.len() < 2 {
        return Err(Error::InvalidArgument(
            "an autoencoder needs at least input and output ratios".into(),
        ));
    }
    if ratios[0] != 1.0 || *ratios.last().unwrap() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "layer ratios must start and end with 1.0, got {ratios:?}"
        )));
    }
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "layer ratios must be positive, got {ratios:?}"
        )));
    }
    Ok(ratios
        .iter()
        .map(|r| ((r * input_dim as f64).round() as usize).max(1))
        .collect())
}

impl MlpAutoencoder {
    /// Glorot-uniform weights drawn from a seeded stream; zero biases.
    pub fn new(input_dim: usize, ratios: &[f64], seed: u64) -> Result<Self> {
        let dims = layer_dims(input_dim, ratios)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Assemble from explicit layers; shapes must chain and close on the input width.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch {
                    expected: l.outputs(),
                    got: l.bias.len(),
                });
            }
            if let Some(next) = layers.get(i + 1) {
                if next.inputs() != l.outputs() {
                    return Err(Error::DimensionMismatch {
                        expected: l.outputs(),
                        got: next.inputs(),
                    });
                }
            }
        }
        let first = layers[0].inputs();
        let last = layers.last().unwrap().outputs();
        if first != last {
            return Err(Error::DimensionMismatch {
                expected: first,
                got: last,
            });
        }
        let layers: Vec<Dense> = layers
            .into_iter()
            .map(|l| Dense {
                weights: l.weights.as_standard_layout().into_owned(),
                bias: l.bias,
            })
            .collect();
        if !layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
        {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs()];
        d.extend(self.layers.iter().map(Dense::outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Reconstruction of a single vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Reconstructions of every row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        let mut h = self.layers[0].forward(x);
        for l in &self.layers[1..] {
            h = l.forward(h.view());
        }
        Ok(h)
    }

    /// Output of layer `depth` (1 = first hidden layer) for every row of `x`.
    pub fn encode_batch(&self, x: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        if depth == 0 || depth > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "layer depth {depth} outside 1..={}",
                self.layers.len()
            )));
        }
        let mut h = self.layers[0].forward(x);
        for l in &self.layers[1..depth] {
            h = l.forward(h.view());
        }
        Ok(h)
    }

    /// Forward pass keeping every activation for backpropagation.
    pub fn trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check_width(x.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for l in &self.layers {
            let next = l.forward(activations.last().unwrap().view());
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Parameter gradients given dLoss/dOutput for a traced batch.
    pub fn backward(&self, trace: &Trace, grad_output: Array2<f64>) -> Gradients {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.activations[l + 1];
            let input = &trace.activations[l];
            // sigmoid'(z) = y (1 - y)
            let delta = &upstream * &out.mapv(|y| y * (1.0 - y));
            let weights = delta.t().dot(input);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                upstream = delta.dot(&layer.weights);
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Row-wise squared reconstruction error `||AE(x) - x||^2`.
    pub fn reconstruction_errors(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let y = self.forward_batch(x)?;
        Ok((&y - &x)
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect())
    }

    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }
}

fn normalized_weights(weights: &[f64], rows: usize) -> Result<Vec<f64>> {
    if rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if weights.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sample weights must be positive and finite, got {w}"
        )));
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

/// `sum_s w_s ||AE(x_s) - x_s||^2 / sum_s w_s`.
pub fn weighted_mse_loss(model: &MlpAutoencoder, batch: ArrayView2<f64>, weights: &[f64]) -> Result<f64> {
    let c = normalized_weights(weights, batch.nrows())?;
    let errs = model.reconstruction_errors(batch)?;
    Ok(c.iter().zip(errs.iter()).map(|(c, e)| c * e).sum())
}

/// Loss and exact parameter gradient of [`weighted_mse_loss`].
pub fn weighted_mse_gradient(
    model: &MlpAutoencoder,
    batch: ArrayView2<f64>,
    weights: &[f64],
) -> Result<(f64, Gradients)> {
    let c = normalized_weights(weights, batch.nrows())?;
    let trace = model.trace(batch)?;
    let mut residual = trace.output() - &batch;
    let mut loss = 0.0;
    for (mut row, &cs) in residual.rows_mut().into_iter().zip(&c) {
        loss += cs * row.iter().map(|v| v * v).sum::<f64>();
        row.mapv_inplace(|r| 2.0 * cs * r);
    }
    Ok((loss, model.backward(&trace, residual)))
}

/// Loss and gradient of the paired objective
/// `sum_s w_s ||AE(a_s) - AE(b_s)||^2 / sum_s w_s`, differentiated through both branches.
pub fn paired_embedding_gradient(
    model: &MlpAutoencoder,
    anchors: ArrayView2<f64>,
    positives: ArrayView2<f64>,
    weights: &[f64],
) -> Result<(f64, Gradients)> {
    if anchors.dim() != positives.dim() {
        return Err(Error::DimensionMismatch {
            expected: anchors.nrows(),
            got: positives.nrows(),
        });
    }
    let c = normalized_weights(weights, anchors.nrows())?;
    let ta = model.trace(anchors)?;
    let tb = model.trace(positives)?;
    let mut diff = ta.output() - tb.output();
    let mut loss = 0.0;
    for (mut row, &cs) in diff.rows_mut().into_iter().zip(&c) {
        loss += cs * row.iter().map(|v| v * v).sum::<f64>();
        row.mapv_inplace(|r| 2.0 * cs * r);
    }
    let neg = diff.mapv(|v| -v);
    let mut grads = model.backward(&ta, diff);
    grads.add_assign(&model.backward(&tb, neg));
    Ok((loss, grads))
}

/// Value of the paired objective without gradients.
pub fn paired_embedding_loss(
    model: &MlpAutoencoder,
    anchors: ArrayView2<f64>,
    positives: ArrayView2<f64>,
    weights: &[f64],
) -> Result<f64> {
    let c = normalized_weights(weights, anchors.nrows())?;
    let ya = model.forward_batch(anchors)?;
    let yb = model.forward_batch(positives)?;
    Ok((&ya - &yb)
        .rows()
        .into_iter()
        .zip(&c)
        .map(|(r, cs)| cs * r.iter().map(|v| v * v).sum::<f64>())
        .sum())
}
