use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fedcurv::{FisherDiagonal, HyperParams};
use crate::local::{sgd_epochs, Anchor, LocalSchedule};
use crate::nn::{self, Batch, ModelSpec, ParameterVector};

// Rows per chunk when streaming a whole local dataset.
const CHUNK: usize = 512;

fn chunks(dataset: &Dataset) -> impl Iterator<Item = Result<Batch>> + '_ {
    let n = dataset.len();
    (0..n).step_by(CHUNK).map(move |start| {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        dataset.batch(&idx)
    })
}

/// Diagonal empirical Fisher at `theta_global`:
/// `F[i] = mean over (x, y) of (∂/∂θ_i log p(y|x; θ_global))²`.
pub fn compute_fisher_diagonal(
    spec: &ModelSpec,
    theta_global: &ParameterVector,
    local_dataset: &Dataset,
) -> Result<FisherDiagonal> {
    if local_dataset.is_empty() {
        return Err(Error::EmptyDataset(
            "Fisher estimate needs at least one sample".into(),
        ));
    }
    let mut acc = vec![0.0; theta_global.len()];
    for batch in chunks(local_dataset) {
        nn::sum_squared_sample_grads(spec, theta_global, &batch?, &mut acc)?;
    }
    let n = local_dataset.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    FisherDiagonal::new(theta_global.with_values(acc)?)
}

fn check_anchor(
    theta: &ParameterVector,
    theta_global: &ParameterVector,
    fisher: &FisherDiagonal,
) -> Result<()> {
    theta.check_layout(theta_global, "theta vs theta_global")?;
    theta.check_layout(fisher.as_params(), "theta vs fisher")
}

/// Local cross-entropy plus `(λ/2) Σ F_i (θ_i − θ_global,i)²`.
pub fn regularized_loss(
    spec: &ModelSpec,
    theta: &ParameterVector,
    theta_global: &ParameterVector,
    fisher: &FisherDiagonal,
    batch: &Batch,
    lambda: f64,
) -> Result<f64> {
    check_anchor(theta, theta_global, fisher)?;
    let local = nn::loss(spec, theta, batch)?;
    let penalty: f64 = theta
        .values()
        .iter()
        .zip(theta_global.values())
        .zip(fisher.values())
        .map(|((t, g), f)| f * (t - g) * (t - g))
        .sum();
    Ok(local + 0.5 * lambda * penalty)
}

/// Gradient of [`regularized_loss`]: `∇L_local + λ F ⊙ (θ − θ_global)`.
pub fn regularized_gradient(
    spec: &ModelSpec,
    theta: &ParameterVector,
    theta_global: &ParameterVector,
    fisher: &FisherDiagonal,
    batch: &Batch,
    lambda: f64,
) -> Result<ParameterVector> {
    check_anchor(theta, theta_global, fisher)?;
    let (_, mut grad) = nn::loss_and_grad(spec, theta, batch)?;
    let pull = theta
        .values()
        .iter()
        .zip(theta_global.values())
        .zip(fisher.values());
    for (g, ((t, tg), f)) in grad.values_mut().iter_mut().zip(pull) {
        *g += lambda * f * (t - tg);
    }
    Ok(grad)
}

/// Curvature-regularized local SGD starting at `theta_global`. `fisher` must
/// have been computed at `theta_global` before training; it stays fixed for
/// all local epochs.
pub fn local_train(
    spec: &ModelSpec,
    theta_global: &ParameterVector,
    fisher: &FisherDiagonal,
    local_dataset: &Dataset,
    hp: &HyperParams,
    schedule: LocalSchedule,
) -> Result<ParameterVector> {
    theta_global.check_layout(fisher.as_params(), "theta_global vs fisher")?;
    sgd_epochs(
        spec,
        theta_global,
        local_dataset,
        hp,
        schedule,
        Some(Anchor {
            theta_global,
            fisher,
            lambda: hp.lambda,
        }),
    )
}

/// Mean unregularized cross-entropy gradient over the whole local dataset,
/// evaluated at `theta_local`. Bit-identical to `loss_and_grad` on the full
/// dataset as one batch.
pub fn server_gradient(
    spec: &ModelSpec,
    theta_local: &ParameterVector,
    local_dataset: &Dataset,
) -> Result<ParameterVector> {
    if local_dataset.is_empty() {
        return Err(Error::EmptyDataset(
            "server gradient needs at least one sample".into(),
        ));
    }
    let scale = 1.0 / local_dataset.len() as f64;
    let mut acc = vec![0.0; theta_local.len()];
    for batch in chunks(local_dataset) {
        nn::accumulate_grad(spec, theta_local, &batch?, scale, &mut acc)?;
    }
    theta_local.with_values(acc)
}
