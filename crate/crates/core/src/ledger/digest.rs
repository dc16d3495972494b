//! Payload digests for ledger transactions.

use crate::fedavg::FedAvgUpdate;
use crate::fedcurv::{ClientUpdate, GlobalModelState};
use crate::ledger::chain::{sha256, Hash};
use crate::ledger::codec::Writer;
use crate::nn::ParameterVector;

fn params(w: &mut Writer, p: &ParameterVector) {
    w.u64(p.len() as u64);
    for v in p.values() {
        w.f64(*v);
    }
}

pub fn digest_client_update(u: &ClientUpdate) -> Hash {
    let mut w = Writer::default();
    w.raw(b"bfel/client-update/v1")
        .u64(u.client_id)
        .u64(u.round)
        .u64(u.sample_count);
    params(&mut w, u.fisher.as_params());
    params(&mut w, &u.gradient);
    params(&mut w, &u.theta_local);
    sha256(&w.finish())
}

pub fn digest_fedavg_update(u: &FedAvgUpdate) -> Hash {
    let mut w = Writer::default();
    w.raw(b"bfel/fedavg-update/v1")
        .u64(u.client_id)
        .u64(u.round)
        .u64(u.sample_count);
    params(&mut w, &u.theta_local);
    sha256(&w.finish())
}

pub fn digest_global_state(s: &GlobalModelState) -> Hash {
    let mut w = Writer::default();
    w.raw(b"bfel/global-model/v1").u64(s.round);
    params(&mut w, &s.theta_global);
    sha256(&w.finish())
}
