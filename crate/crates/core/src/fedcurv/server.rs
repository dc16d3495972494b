use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fedcurv::{ClientUpdate, FisherDiagonal, GlobalModelState};
use crate::nn::ParameterVector;

/// Updates sorted by client id after checking they form one coherent round.
fn ordered(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    let mut seen = BTreeSet::new();
    for u in updates {
        if u.round != first.round {
            return Err(Error::MixedRounds {
                expected: first.round,
                found: u.round,
                client_id: u.client_id,
            });
        }
        if !seen.insert(u.client_id) {
            return Err(Error::DuplicateClient(u.client_id));
        }
        first
            .gradient
            .check_layout(&u.gradient, "client gradients")?;
        first
            .gradient
            .check_layout(u.fisher.as_params(), "client fisher")?;
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    Ok(sorted)
}

/// Elementwise mean, summed in the given order.
fn mean<'a>(
    vectors: impl ExactSizeIterator<Item = &'a ParameterVector>,
) -> Result<ParameterVector> {
    let k = vectors.len() as f64;
    let mut out: Option<Vec<f64>> = None;
    let mut template = None;
    for v in vectors {
        match out.as_mut() {
            None => {
                out = Some(v.values().to_vec());
                template = Some(v);
            }
            Some(acc) => acc.iter_mut().zip(v.values()).for_each(|(a, b)| *a += b),
        }
    }
    let mut values = out.ok_or(Error::EmptyUpdates)?;
    values.iter_mut().for_each(|v| *v /= k);
    template.expect("non-empty").with_values(values)
}

/// `F_global = (1/K) Σ F_k`, unweighted over the participating clients.
pub fn aggregate_fisher(updates: &[ClientUpdate]) -> Result<FisherDiagonal> {
    let sorted = ordered(updates)?;
    FisherDiagonal::new(mean(sorted.iter().map(|u| u.fisher.as_params()))?)
}

/// `g_global = (1/K) Σ g_k`, unweighted over the participating clients.
pub fn aggregate_gradients(updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let sorted = ordered(updates)?;
    mean(sorted.iter().map(|u| &u.gradient))
}

/// `1 / (F_i + epsilon)` for every entry.
pub fn invert_fisher(fisher: &FisherDiagonal, epsilon: f64) -> Result<FisherDiagonal> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidHyperParams(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let values = fisher
        .values()
        .iter()
        .map(|f| 1.0 / (f + epsilon))
        .collect();
    FisherDiagonal::new(fisher.as_params().with_values(values)?)
}

/// `θ_new = θ_global − η_global · (F⁻¹ ⊙ g_global)`; advances the round.
pub fn global_update(
    state: &GlobalModelState,
    fisher_inv: &FisherDiagonal,
    g_global: &ParameterVector,
    eta_global: f64,
) -> Result<GlobalModelState> {
    let theta = &state.theta_global;
    theta.check_layout(fisher_inv.as_params(), "theta vs inverse fisher")?;
    theta.check_layout(g_global, "theta vs gradient")?;
    let values = theta
        .values()
        .iter()
        .zip(fisher_inv.values())
        .zip(g_global.values())
        .map(|((t, finv), g)| t - eta_global * (finv * g))
        .collect();
    Ok(GlobalModelState {
        theta_global: crate::nn::finite(theta.with_values(values)?, "the global update")?,
        round: state.round + 1,
        spec: state.spec.clone(),
    })
}
