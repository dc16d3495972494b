//! Tensor math, the MLP/CNN models, and cross-entropy loss with exact
//! gradients.

mod model;
mod params;
mod tensor;
#[cfg(test)]
mod tests;

pub use model::{Activation, Architecture, ConvStage, ModelSpec};
pub use params::{Layout, ParameterVector, Role, Segment};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use model::{Accumulate, AccumulateSquares, Network};

/// Inputs with a leading batch dimension plus one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Tensor,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidBatch("batch size must be >= 1".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::InvalidBatch(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let sample_shape = &self.inputs.shape()[1..];
        if sample_shape != spec.input_shape() {
            return Err(Error::ShapeMismatch {
                layer: "input".into(),
                expected: format!("{:?}", spec.input_shape()),
                actual: format!("{sample_shape:?}"),
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= spec.classes()) {
            return Err(Error::InvalidBatch(format!(
                "label {bad} out of range for {} classes",
                spec.classes()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax (row max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`, evaluated as `(max - z_y) + ln Σ exp(z - max)`.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - m).exp()).sum();
    (m - logits[label]) + total.ln()
}

/// Logits for every sample in the batch, shape `[batch, classes]`.
pub fn forward(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<Tensor> {
    batch.check(spec)?;
    let net = Network::new(spec, params)?;
    let mut cache = net.new_cache();
    let inputs = batch.inputs();
    let mut out = Vec::with_capacity(batch.len() * spec.classes());
    for i in 0..batch.len() {
        out.extend_from_slice(net.forward(inputs.row(i), &mut cache));
    }
    Tensor::new(vec![batch.len(), spec.classes()], out)
}

/// Mean cross-entropy loss over the batch.
pub fn loss(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<f64> {
    batch.check(spec)?;
    let net = Network::new(spec, params)?;
    let mut cache = net.new_cache();
    let inputs = batch.inputs();
    let mut total = 0.0;
    for (i, &y) in batch.labels().iter().enumerate() {
        total += cross_entropy(net.forward(inputs.row(i), &mut cache), y);
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy loss and its exact gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
) -> Result<(f64, ParameterVector)> {
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    let total = accumulate_grad(spec, params, batch, scale, &mut grad)?;
    Ok((total * scale, params.with_values(grad)?))
}

/// Adds `scale * ∇ CE(sample)` for every sample of `batch` into `acc`, in
/// batch order, and returns the summed (unscaled) loss.
pub(crate) fn accumulate_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
    scale: f64,
    acc: &mut [f64],
) -> Result<f64> {
    batch.check(spec)?;
    let net = Network::new(spec, params)?;
    let mut cache = net.new_cache();
    let inputs = batch.inputs();
    let mut total = 0.0;
    for (i, &y) in batch.labels().iter().enumerate() {
        let logits = net.forward(inputs.row(i), &mut cache);
        total += cross_entropy(logits, y);
        let mut delta = softmax(logits);
        delta[y] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= scale);
        net.backward(&cache, &delta, &mut Accumulate(acc));
    }
    Ok(total)
}

/// `∇_θ log p(y|x; θ)` for a single-sample batch.
pub fn per_sample_loglik_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    sample: &Batch,
) -> Result<ParameterVector> {
    if sample.len() != 1 {
        return Err(Error::InvalidBatch(format!(
            "expected a single sample, got {}",
            sample.len()
        )));
    }
    sample.check(spec)?;
    let net = Network::new(spec, params)?;
    let mut cache = net.new_cache();
    let y = sample.labels()[0];
    let logits = net.forward(sample.inputs().row(0), &mut cache);
    // d/dz log softmax(z)_y = onehot(y) - softmax(z)
    let mut delta: Vec<f64> = softmax(logits).into_iter().map(|p| -p).collect();
    delta[y] += 1.0;
    let mut grad = vec![0.0; params.len()];
    net.backward(&cache, &delta, &mut Accumulate(&mut grad));
    params.with_values(grad)
}

/// Σ over samples of the elementwise squared per-sample log-likelihood
/// gradient. Dividing by the sample count gives the empirical Fisher diagonal.
pub(crate) fn sum_squared_sample_grads(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
    acc: &mut [f64],
) -> Result<()> {
    batch.check(spec)?;
    let net = Network::new(spec, params)?;
    let mut cache = net.new_cache();
    let inputs = batch.inputs();
    for (i, &y) in batch.labels().iter().enumerate() {
        let logits = net.forward(inputs.row(i), &mut cache);
        let mut delta = softmax(logits);
        delta[y] -= 1.0;
        let mut sink = AccumulateSquares(acc);
        net.backward(&cache, &delta, &mut sink);
    }
    Ok(())
}

/// `params - lr * grad`.
pub fn sgd_step(
    params: &ParameterVector,
    grad: &ParameterVector,
    lr: f64,
) -> Result<ParameterVector> {
    params.check_layout(grad, "sgd step")?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::InvalidHyperParams(format!("learning rate {lr}")));
    }
    let values = params
        .values()
        .iter()
        .zip(grad.values())
        .map(|(p, g)| p - lr * g)
        .collect();
    finite(params.with_values(values)?, "an SGD step")
}

/// Rejects parameter vectors that left the finite range.
pub(crate) fn finite(params: ParameterVector, after: &str) -> Result<ParameterVector> {
    if params.values().iter().all(|v| v.is_finite()) {
        Ok(params)
    } else {
        Err(Error::Diverged(after.into()))
    }
}

/// Step decay: the rate drops by a factor of three every five epochs.
pub fn lr_schedule(initial_lr: f64, epoch: usize) -> f64 {
    initial_lr / 3f64.powi((epoch / 5) as i32)
}
