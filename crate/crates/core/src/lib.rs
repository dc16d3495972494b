//! Federated edge learning simulator.

pub mod data;
pub mod error;
pub mod eval;
pub mod fedavg;
pub mod fedcurv;
pub mod ledger;
pub mod local;
pub mod nn;
pub mod sim;

pub use error::{Error, Result};
