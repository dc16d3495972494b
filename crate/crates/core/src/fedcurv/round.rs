use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::fedcurv::{
    aggregate_fisher, aggregate_gradients, compute_fisher_diagonal, global_update, invert_fisher,
    local_train, server_gradient, ClientUpdate, GlobalModelState, HyperParams,
};
use crate::local::LocalSchedule;
use crate::nn::{ModelSpec, ParameterVector};

/// An edge device and its private data.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: u64,
    pub data: Dataset,
}

/// Per-round measurements. Accuracies are present only when a test set was
/// supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// Ids of the participating clients, ascending.
    pub sampled: Vec<u64>,
    /// Test accuracy of each participant's `theta_local`, in `sampled` order.
    pub client_accuracy: Vec<f64>,
    /// Test accuracy of the updated global model.
    pub global_accuracy: Option<f64>,
    pub divergence: f64,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome<U> {
    pub state: GlobalModelState,
    pub updates: Vec<U>,
    pub stats: RoundStats,
}

/// Picks `ceil(fraction * n)` distinct indices in `0..n`, returned ascending.
pub fn sample_clients<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidHyperParams("no clients to sample".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidHyperParams(format!(
            "client_fraction must be in (0, 1], got {fraction}"
        )));
    }
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut picked = index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Mean distance of each local model from the mean local model.
pub fn client_divergence(locals: &[&ParameterVector]) -> Result<f64> {
    let first = *locals.first().ok_or(Error::EmptyUpdates)?;
    let k = locals.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for theta in locals {
        first.check_layout(theta, "local models")?;
        mean.iter_mut()
            .zip(theta.values())
            .for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= k);
    let centre = first.with_values(mean)?;
    let total: f64 = locals
        .iter()
        .map(|t| t.distance(&centre))
        .sum::<Result<f64>>()?;
    Ok(total / k)
}

/// Participants for one round paired with their shuffle seeds. The rng is
/// consumed identically by every algorithm.
pub(crate) fn plan_round<'c, R: Rng + ?Sized>(
    clients: &'c [Client],
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Vec<(&'c Client, u64)>> {
    hp.validate()?;
    let picked = sample_clients(clients.len(), hp.client_fraction, rng)?;
    Ok(picked
        .into_iter()
        .map(|i| (&clients[i], rng.gen()))
        .collect())
}

pub(crate) fn schedule(state: &GlobalModelState, hp: &HyperParams, seed: u64) -> LocalSchedule {
    LocalSchedule {
        seed,
        first_epoch: state.round as usize * hp.local_epochs,
    }
}

pub(crate) fn round_stats(
    spec: &ModelSpec,
    sampled: Vec<u64>,
    locals: &[&ParameterVector],
    theta_new: &ParameterVector,
    test: Option<&Dataset>,
) -> Result<RoundStats> {
    let divergence = client_divergence(locals)?;
    let (client_accuracy, global_accuracy) = match test {
        Some(test) => {
            let per_client = locals
                .par_iter()
                .map(|t| accuracy(spec, t, test))
                .collect::<Result<Vec<_>>>()?;
            (per_client, Some(accuracy(spec, theta_new, test)?))
        }
        None => (Vec::new(), None),
    };
    Ok(RoundStats {
        sampled,
        client_accuracy,
        global_accuracy,
        divergence,
    })
}

fn client_step(
    state: &GlobalModelState,
    client: &Client,
    hp: &HyperParams,
    seed: u64,
) -> Result<ClientUpdate> {
    let spec = &state.spec;
    let theta_global = &state.theta_global;
    let fisher = compute_fisher_diagonal(spec, theta_global, &client.data)?;
    let theta_local = local_train(
        spec,
        theta_global,
        &fisher,
        &client.data,
        hp,
        schedule(state, hp, seed),
    )?;
    let gradient = server_gradient(spec, &theta_local, &client.data)?;
    Ok(ClientUpdate {
        client_id: client.id,
        round: state.round,
        fisher,
        gradient,
        theta_local,
        sample_count: client.data.len() as u64,
    })
}

/// One synchronous round: sample clients, run each client's Fisher
/// estimate, regularized training and gradient report in parallel, then
/// aggregate and apply the curvature-scaled global step.
pub fn run_round<R: Rng + ?Sized>(
    state: &GlobalModelState,
    clients: &[Client],
    hp: &HyperParams,
    rng: &mut R,
    test: Option<&Dataset>,
) -> Result<RoundOutcome<ClientUpdate>> {
    let plan = plan_round(clients, hp, rng)?;
    let mut updates = plan
        .par_iter()
        .map(|(client, seed)| client_step(state, client, hp, *seed))
        .collect::<Result<Vec<_>>>()?;
    updates.sort_by_key(|u| u.client_id);

    let f_global = aggregate_fisher(&updates)?;
    let g_global = aggregate_gradients(&updates)?;
    let f_inv = invert_fisher(&f_global, hp.epsilon)?;
    let next = global_update(state, &f_inv, &g_global, hp.global_rate(state.round))?;

    let locals: Vec<&ParameterVector> = updates.iter().map(|u| &u.theta_local).collect();
    let sampled = updates.iter().map(|u| u.client_id).collect();
    let stats = round_stats(&state.spec, sampled, &locals, &next.theta_global, test)?;
    Ok(RoundOutcome {
        state: next,
        updates,
        stats,
    })
}
