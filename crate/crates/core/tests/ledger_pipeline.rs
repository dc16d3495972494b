//! Ledger records of real training rounds.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedsim::data::{partition, synth_blobs, PartitionMode, PartitionPlan};
use fedsim::fedcurv::{run_round, Client, GlobalModelState, HyperParams};
use fedsim::ledger::{
    digest_client_update, digest_global_state, export_chain, import_chain, keygen, validate_chain,
    validate_log, Chain, SignedTransaction, TxKind,
};
use fedsim::nn::ModelSpec;

#[test]
fn training_rounds_are_recorded_and_verifiable() {
    let spec = Arc::new(ModelSpec::mlp(vec![2], vec![6], 3).unwrap());
    let data = synth_blobs(3, 20, 2, 0.4, 2);
    let plan = PartitionPlan {
        client_count: 4,
        mode: PartitionMode::Iid,
        seed: 2,
    };
    let clients: Vec<Client> = partition(&data, &plan)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(id, data)| Client {
            id: id as u64,
            data,
        })
        .collect();
    let hp = HyperParams {
        client_fraction: 0.5,
        eta_local: 0.05,
        ..HyperParams::default()
    };
    let manager = keygen(77);
    let mut state = GlobalModelState::new(spec.clone(), spec.init_params(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut chain = Chain::new();
    for _ in 0..4 {
        let out = run_round(&state, &clients, &hp, &mut rng, None).unwrap();
        let mut txs: Vec<SignedTransaction> = out
            .updates
            .iter()
            .map(|u| {
                SignedTransaction::sign(
                    TxKind::ClientUpdate,
                    out.state.round,
                    digest_client_update(u),
                    &keygen(u.client_id),
                )
            })
            .collect();
        txs.push(SignedTransaction::sign(
            TxKind::GlobalModel,
            out.state.round,
            digest_global_state(&out.state),
            &manager,
        ));
        chain = chain.append_block(txs, &manager).unwrap();
        state = out.state;
    }
    assert_eq!(chain.len(), 5);
    assert!(validate_chain(&chain).valid);
    // ceil(0.5 * 4) = 2 clients plus the global model.
    assert!(chain.blocks()[1..]
        .iter()
        .all(|b| b.transactions.len() == 3));

    let last = chain.tip().unwrap();
    assert_eq!(last.transactions[2].digest, digest_global_state(&state));

    let log = export_chain(&chain);
    assert_eq!(import_chain(&log).unwrap(), chain);
    assert!(validate_log(&log).valid);
}

#[test]
fn digests_track_every_field() {
    let spec = Arc::new(ModelSpec::mlp(vec![2], vec![3], 2).unwrap());
    let a = GlobalModelState::new(spec.clone(), spec.init_params(0)).unwrap();
    let mut b = a.clone();
    assert_eq!(digest_global_state(&a), digest_global_state(&b));
    b.round += 1;
    assert_ne!(digest_global_state(&a), digest_global_state(&b));
    let mut c = a.clone();
    c.theta_global.values_mut()[0] += 1e-12;
    assert_ne!(digest_global_state(&a), digest_global_state(&c));
}
