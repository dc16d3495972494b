//! Datasets, file loaders, client partitioning, and synthetic data.

mod container;
mod idx;
mod partition;
mod synth;

pub use container::{
    decode_container, encode_container, read_container, write_container, CONTAINER_MAGIC,
    CONTAINER_VERSION,
};
pub use idx::{load_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use partition::{partition, partition_indices, PartitionMode, PartitionPlan};
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use crate::nn::{Batch, Tensor};

/// Stacked samples with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.shape().is_empty() || samples.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: samples.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Malformed(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Shape of one sample (the sample tensor minus its leading dimension).
    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    /// Widens the class count, e.g. so a test split lacking some labels
    /// agrees with its training split.
    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Malformed(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }

    /// Reinterprets each sample with `shape`, which must hold the same
    /// number of values.
    pub fn with_sample_shape(self, shape: &[usize]) -> Result<Self> {
        let rows = self.samples.rows();
        let mut full = vec![rows];
        full.extend_from_slice(shape);
        let samples = Tensor::new(full, self.samples.into_data())
            .map_err(|_| Error::Malformed(format!("samples cannot be viewed as {shape:?}")))?;
        Ok(Self { samples, ..self })
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Batch::new(
            self.samples.gather_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyDataset("cannot batch an empty dataset".into()));
        }
        Batch::new(self.samples.clone(), self.labels.clone())
    }

    /// Appends `copies` extra copies of every sample, in order.
    pub fn repeated(&self, copies: usize) -> Dataset {
        let idx: Vec<usize> = (0..copies).flat_map(|_| 0..self.len()).collect();
        self.subset(&idx)
    }
}
