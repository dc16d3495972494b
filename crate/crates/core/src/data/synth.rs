use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::data::Dataset;
use crate::nn::Tensor;

/// Gaussian blobs: one isotropic cluster of standard deviation `spread`
/// per class, centered uniformly in `[-2, 2]^dim`. Samples are interleaved
/// by class (`0, 1, .., k-1, 0, 1, ..`) and shaped `[dim]`.
///
/// # Panics
///
/// If any count is zero or `spread` is negative or non-finite.
pub fn synth_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Dataset {
    assert!(
        class_count > 0 && per_class > 0 && dim > 0,
        "counts must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = {
        let u = Uniform::new_inclusive(-2.0, 2.0);
        (0..class_count)
            .map(|_| (0..dim).map(|_| u.sample(&mut rng)).collect())
            .collect()
    };
    let noise = Normal::new(0.0, spread).expect("spread must be finite and >= 0");
    let n = class_count * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (label, center) in centers.iter().enumerate() {
            data.extend(center.iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(label);
        }
    }
    let samples = Tensor::new(vec![n, dim], data).expect("finite by construction");
    Dataset::new(samples, labels, class_count).expect("labels in range")
}
