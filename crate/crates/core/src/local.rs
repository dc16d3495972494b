//! Client-side mini-batch SGD shared by both federated algorithms.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fedcurv::{regularized_gradient, FisherDiagonal, HyperParams};
use crate::nn::{self, ModelSpec, ParameterVector};

/// Where a client's local run sits in the global schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalSchedule {
    /// Seeds the per-epoch batch shuffles.
    pub seed: u64,
    /// Cumulative epoch index of the first local epoch, for step decay.
    pub first_epoch: usize,
}

/// Curvature anchor for regularized training.
pub(crate) struct Anchor<'a> {
    pub theta_global: &'a ParameterVector,
    pub fisher: &'a FisherDiagonal,
    pub lambda: f64,
}

pub(crate) fn learning_rate(hp: &HyperParams, epoch: usize) -> f64 {
    if hp.lr_decay {
        nn::lr_schedule(hp.eta_local, epoch)
    } else {
        hp.eta_local
    }
}

/// `hp.local_epochs` epochs of mini-batch SGD from `start`. Every epoch
/// reshuffles the sample order from one generator seeded by `schedule.seed`.
/// With an anchor of nonzero `lambda` the regularized gradient is used.
pub(crate) fn sgd_epochs(
    spec: &ModelSpec,
    start: &ParameterVector,
    dataset: &Dataset,
    hp: &HyperParams,
    schedule: LocalSchedule,
    anchor: Option<Anchor<'_>>,
) -> Result<ParameterVector> {
    hp.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("local training set is empty".into()));
    }
    let anchor = anchor.filter(|a| a.lambda != 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut theta = start.clone();
    for epoch in 0..hp.local_epochs {
        let lr = learning_rate(hp, schedule.first_epoch + epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            let batch = dataset.batch(chunk)?;
            let grad = match &anchor {
                Some(a) => {
                    regularized_gradient(spec, &theta, a.theta_global, a.fisher, &batch, a.lambda)?
                }
                None => nn::loss_and_grad(spec, &theta, &batch)?.1,
            };
            theta = nn::sgd_step(&theta, &grad, lr)?;
        }
    }
    Ok(theta)
}
