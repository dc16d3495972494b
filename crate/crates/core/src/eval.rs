//! Classification accuracy.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, ModelSpec, ParameterVector};

const CHUNK: usize = 1000;

/// Index of the largest logit; ties go to the lowest class.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `dataset` classified correctly by `params`.
pub fn accuracy(spec: &ModelSpec, params: &ParameterVector, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot evaluate on no samples".into()));
    }
    let n = dataset.len();
    let mut correct = 0usize;
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let batch = dataset.batch(&idx)?;
        let logits = nn::forward(spec, params, &batch)?;
        correct += batch
            .labels()
            .iter()
            .enumerate()
            .filter(|(r, y)| argmax(logits.row(*r)) == **y)
            .count();
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0, -2.0, 5.0]), 2);
    }

    #[test]
    fn identity_model_accuracy() {
        // Identity logits: label 0 wins when x0 > x1.
        let spec = ModelSpec::mlp(vec![2], vec![], 2).unwrap();
        let mut theta = ParameterVector::zeros(spec.layout());
        theta.values_mut()[..4].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 3.0]).unwrap();
        let ds = Dataset::new(x, vec![0, 1, 1, 1], 2).unwrap();
        assert_eq!(accuracy(&spec, &theta, &ds).unwrap(), 0.75);
    }
}
