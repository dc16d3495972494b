//! First-order baseline: sample-count-weighted averaging of local models.

use rand::Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fedcurv::round::{plan_round, round_stats, schedule};
use crate::fedcurv::{Client, GlobalModelState, HyperParams, RoundOutcome};
use crate::local::{sgd_epochs, LocalSchedule};
use crate::nn::{ModelSpec, ParameterVector};

#[derive(Debug, Clone, PartialEq)]
pub struct FedAvgUpdate {
    pub client_id: u64,
    pub round: u64,
    pub theta_local: ParameterVector,
    pub sample_count: u64,
}

/// `hp.local_epochs` epochs of plain mini-batch SGD from `theta_global`.
/// Consumes `schedule.seed` exactly as the curvature-regularized trainer.
pub fn local_train_plain(
    spec: &ModelSpec,
    theta_global: &ParameterVector,
    local_dataset: &Dataset,
    hp: &HyperParams,
    schedule: LocalSchedule,
) -> Result<ParameterVector> {
    sgd_epochs(spec, theta_global, local_dataset, hp, schedule, None)
}

/// `Σ_k (n_k / Σn) θ_k`, summed in client id order.
pub fn average_models(updates: &[FedAvgUpdate]) -> Result<ParameterVector> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    let mut sorted: Vec<&FedAvgUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for pair in sorted.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(Error::DuplicateClient(pair[0].client_id));
        }
    }
    let mut total = 0u64;
    for u in &sorted {
        if u.round != first.round {
            return Err(Error::MixedRounds {
                expected: first.round,
                found: u.round,
                client_id: u.client_id,
            });
        }
        if u.sample_count == 0 {
            return Err(Error::EmptyDataset(format!(
                "client {} reported no samples",
                u.client_id
            )));
        }
        first
            .theta_local
            .check_layout(&u.theta_local, "local models")?;
        total += u.sample_count;
    }
    let mut acc = vec![0.0; first.theta_local.len()];
    for u in &sorted {
        let w = u.sample_count as f64 / total as f64;
        acc.iter_mut()
            .zip(u.theta_local.values())
            .for_each(|(a, v)| *a += w * v);
    }
    first.theta_local.with_values(acc)
}

/// One synchronous FedAvg round. Client sampling and per-client seeds come
/// from `rng` in the same pattern as the curvature-aware round.
pub fn run_round<R: Rng + ?Sized>(
    state: &GlobalModelState,
    clients: &[Client],
    hp: &HyperParams,
    rng: &mut R,
    test: Option<&Dataset>,
) -> Result<RoundOutcome<FedAvgUpdate>> {
    let plan = plan_round(clients, hp, rng)?;
    let mut updates = plan
        .par_iter()
        .map(|(client, seed)| {
            let theta_local = local_train_plain(
                &state.spec,
                &state.theta_global,
                &client.data,
                hp,
                schedule(state, hp, *seed),
            )?;
            Ok(FedAvgUpdate {
                client_id: client.id,
                round: state.round,
                theta_local,
                sample_count: client.data.len() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    updates.sort_by_key(|u| u.client_id);

    let next = GlobalModelState {
        theta_global: average_models(&updates)?,
        round: state.round + 1,
        spec: state.spec.clone(),
    };
    let locals: Vec<&ParameterVector> = updates.iter().map(|u| &u.theta_local).collect();
    let sampled = updates.iter().map(|u| u.client_id).collect();
    let stats = round_stats(&state.spec, sampled, &locals, &next.theta_global, test)?;
    Ok(RoundOutcome {
        state: next,
        updates,
        stats,
    })
}
