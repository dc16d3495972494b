//! Curvature-aware federated learning.
//!
//! Each round, a client estimates the diagonal empirical Fisher of its data
//! at the received global parameters, trains locally with a Fisher-weighted
//! quadratic pull toward those parameters, and reports the Fisher plus the
//! plain loss gradient at its trained parameters. The server averages both,
//! inverts the averaged Fisher (damped by `epsilon`), and takes a step along
//! the inverse-Fisher-scaled gradient.

mod client;
pub(crate) mod round;
mod server;

use std::sync::Arc;

pub use client::{
    compute_fisher_diagonal, local_train, regularized_gradient, regularized_loss, server_gradient,
};
pub use round::{client_divergence, run_round, sample_clients, Client, RoundOutcome, RoundStats};
pub use server::{aggregate_fisher, aggregate_gradients, global_update, invert_fisher};

use crate::error::{Error, Result};
use crate::nn::{ModelSpec, ParameterVector};

/// Per-parameter nonnegative curvature scores sharing the model's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiagonal(ParameterVector);

impl FisherDiagonal {
    pub fn new(values: ParameterVector) -> Result<Self> {
        if let Some((i, v)) = values
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Malformed(format!(
                "Fisher entry {i} is {v}; entries must be finite and >= 0"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn as_params(&self) -> &ParameterVector {
        &self.0
    }

    pub fn into_params(self) -> ParameterVector {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Strength of the curvature penalty.
    pub lambda: f64,
    pub local_epochs: usize,
    /// Initial client learning rate.
    pub eta_local: f64,
    pub eta_global: f64,
    /// Damping added before inverting the Fisher diagonal.
    pub epsilon: f64,
    pub batch_size: usize,
    pub client_fraction: f64,
    /// Divide the local rate by three every five (cumulative) epochs.
    pub lr_decay: bool,
    /// Divide the server rate by three every five rounds.
    pub global_lr_decay: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            local_epochs: 1,
            eta_local: 1e-4,
            eta_global: 1e-3,
            epsilon: 1e-8,
            batch_size: 10,
            client_fraction: 0.25,
            lr_decay: true,
            global_lr_decay: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperParams(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return bad(format!(
                "client_fraction must be in (0, 1], got {}",
                self.client_fraction
            ));
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        for (name, v) in [
            ("eta_local", self.eta_local),
            ("eta_global", self.eta_global),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Server rate for the update that ends `round` (0-based).
    pub fn global_rate(&self, round: u64) -> f64 {
        if self.global_lr_decay {
            crate::nn::lr_schedule(self.eta_global, round as usize)
        } else {
            self.eta_global
        }
    }
}

/// What a client reports after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u64,
    pub round: u64,
    pub fisher: FisherDiagonal,
    pub gradient: ParameterVector,
    pub theta_local: ParameterVector,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModelState {
    pub theta_global: ParameterVector,
    /// Number of global updates applied so far.
    pub round: u64,
    pub spec: Arc<ModelSpec>,
}

impl GlobalModelState {
    pub fn new(spec: Arc<ModelSpec>, theta_global: ParameterVector) -> Result<Self> {
        if *theta_global.layout().as_ref() != *spec.layout() {
            return Err(Error::LayoutMismatch(
                "initial parameters do not match the model spec".into(),
            ));
        }
        Ok(Self {
            theta_global,
            round: 0,
            spec,
        })
    }
}
