mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{round, run, synthetic};
use fedpop_core::crypto::{Digest, GroupElement, Scalar};
use fedpop_core::oprf::{oprf_direct, OprfKey};
use fedpop_core::protocol::{
    prove_against, prove_phase, Blinding, Envelope, GlobalToken, Message, ProofBundle, ProtocolError,
    RoundFailure, RoundRegistry, ServiceProvider,
};
use fedpop_core::secagg::{decode_fixed_point, SecAggError};
use fedpop_core::sim::{
    sample_dropout, Address, DeliveryOrder, DropStep, DropoutSchedule, Outbox, Party, Transport,
};
use fedpop_core::trainer::Trainer;
use fedpop_core::tsig::{ts_verify, ThresholdSignature};

/// Client `i` contributes the basis vector `e_i`.
struct Basis(usize);

impl Trainer for Basis {
    fn dimension(&self) -> usize {
        self.0
    }

    fn train(&self, _params: &[f64], client_seed: u64) -> Vec<f64> {
        let mut v = vec![0.0; self.0];
        v[client_seed as usize - 1] = 1.0;
        v
    }
}

fn sp_for(outcome: &fedpop_core::protocol::RoundOutcome) -> ServiceProvider {
    let out = outcome.result.as_ref().unwrap();
    let mut sp = ServiceProvider::new();
    sp.accept_reveal(&out.model, out.token.clone());
    sp
}

#[test]
fn basis_updates_sum_to_all_ones() {
    let mut r = round(6, 1, 6, 1, 1, Arc::new(Basis(6)), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let out = outcome.result.unwrap();
    assert_eq!(decode_fixed_point(&out.model).unwrap(), vec![1.0; 6]);
    assert_eq!(outcome.bundles.len(), 6);
}

#[test]
fn ten_percent_dropout_with_t9_yields_nine_bundles() {
    let mut r = round(10, 1, 4, 1, 2, synthetic(4), false);
    let outcome = run(&mut r, &DropoutSchedule::from_indices([4], DropStep::BeforeProtect));
    let out = outcome.result.as_ref().unwrap();
    assert_eq!(outcome.bundles.len(), 9);
    assert!(!outcome.bundles.contains_key(&4));
    assert_eq!(out.signers.len(), 9);
    for b in outcome.bundles.values() {
        assert!(ts_verify(&b.sigma, &b.mhash, &out.token.group_key));
        assert_eq!(out.token.r, oprf_direct(&b.key, &out.token.group_key.to_bytes()));
    }
}

#[test]
fn too_many_dropouts_fail_the_threshold() {
    let mut r = round(10, 1, 4, 1, 3, synthetic(4), false);
    let outcome = run(&mut r, &DropoutSchedule::from_indices([2, 7], DropStep::BeforeProtect));
    assert_eq!(outcome.result, Err(RoundFailure::Threshold { have: 8, need: 9 }));
    assert!(outcome.bundles.is_empty());
    assert!(r.clients.iter().filter(|c| c.index() != 2 && c.index() != 7).all(|c| c.aborted().is_some()));
}

#[test]
fn drop_steps_are_classified_where_they_happen() {
    let dim = 3;
    let updates = |i: u32| synthetic(dim).train(&[], i as u64);
    // 1 never protects, 2 protects then goes silent, 3 finishes aggregation but never signs.
    let schedule = DropoutSchedule::none()
        .with(1, DropStep::BeforeProtect)
        .with(2, DropStep::AfterProtect)
        .with(3, DropStep::BeforeSign);
    let mut r = round(8, 3, dim, 1, 4, synthetic(dim), false);
    let outcome = run(&mut r, &schedule);
    let out = outcome.result.as_ref().unwrap();
    let expected: Vec<f64> = (0..dim)
        .map(|k| (2..=8).map(|i| updates(i)[k]).sum::<f64>())
        .collect();
    let got = decode_fixed_point(&out.model).unwrap();
    for k in 0..dim {
        assert!((got[k] - expected[k]).abs() < 8.0 * 2f64.powi(-17));
    }
    assert_eq!(out.signers, (4..=8).collect::<BTreeSet<u32>>());
    assert_eq!(outcome.bundles.keys().copied().collect::<BTreeSet<_>>(), out.signers);
    let sent_by = |i: u32, kind: &str| {
        outcome
            .transcript
            .entries()
            .iter()
            .any(|e| e.from == Address::Client(i) && serde_json::to_value(e.envelope.kind).unwrap() == kind)
    };
    assert!(!sent_by(1, "masked_update"));
    assert!(sent_by(2, "masked_update") && !sent_by(2, "recovery_shares"));
    assert!(sent_by(3, "recovery_shares") && !sent_by(3, "signing_commitment"));
}

#[test]
fn unmaskable_round_aborts_before_signing() {
    use fedpop_core::protocol::{setup_phase, ClientParty, FlServer, SetupConfig};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
    let mut config = SetupConfig::new(5, 3, 2);
    config.recovery_threshold = Some(4);
    let (keys, server_keys) = setup_phase(&config, 1, &mut rng).unwrap();
    let trainer = synthetic(2);
    let mut clients: Vec<ClientParty> = keys.into_iter().map(|k| ClientParty::new(k, trainer.clone(), 9)).collect();
    let mut server = FlServer::new(server_keys, vec![0.0; 2], 1);
    let outcome = fedpop_core::protocol::generate_phase(
        &mut server,
        &mut clients,
        &DropoutSchedule::from_indices([1, 2], DropStep::BeforeProtect),
        &mut Transport::fifo(),
    )
    .unwrap();
    assert!(matches!(
        outcome.result,
        Err(RoundFailure::Unmaskable(SecAggError::Unmaskable { .. }))
    ));
    assert!(!outcome
        .transcript
        .entries()
        .iter()
        .any(|e| e.envelope.kind == fedpop_core::protocol::MessageType::SigningPackage));
}

#[test]
fn seventy_percent_dropout_with_low_threshold_succeeds() {
    let n = 20;
    let schedule = sample_dropout(0.7, n, 11);
    let mut r = round(n, 14, 4, 1, 6, synthetic(4), false);
    let outcome = run(&mut r, &schedule);
    assert!(outcome.result.is_ok(), "{:?}", outcome.result);
    assert_eq!(outcome.bundles.len(), 6);
}

#[test]
fn same_seed_gives_identical_transcripts() {
    let schedule = sample_dropout(0.3, 10, 2);
    let run_once = |order| {
        let mut r = round(10, 3, 3, 1, 7, synthetic(3), false);
        let mut transport = Transport::new(order);
        let outcome =
            fedpop_core::protocol::generate_phase(&mut r.server, &mut r.clients, &schedule, &mut transport).unwrap();
        (outcome.transcript.to_json_lines(), outcome.result.unwrap().model)
    };
    let (a, ma) = run_once(DeliveryOrder::Fifo);
    assert_eq!(a, run_once(DeliveryOrder::Fifo).0);
    let (b, mb) = run_once(DeliveryOrder::Shuffle { seed: 3 });
    assert_eq!(b, run_once(DeliveryOrder::Shuffle { seed: 3 }).0);
    assert_ne!(a, b);
    assert_eq!(ma, mb);
    let parsed = fedpop_core::sim::Transcript::from_json_lines(&a).unwrap();
    assert_eq!(parsed.to_json_lines(), a);
}

#[test]
fn honest_prove_accepts_and_reports_bytes() {
    let mut r = round(6, 2, 4, 3, 8, synthetic(4), false);
    let outcome = run(&mut r, &DropoutSchedule::from_indices([5], DropStep::BeforeProtect));
    let sp = sp_for(&outcome);
    for bundle in outcome.bundles.values() {
        let p = prove_phase(bundle, &sp, Blinding::Seeded(1)).unwrap();
        assert!(p.client && p.sp);
        assert!(p.bytes_sp_to_client > 0 && p.bytes_client_to_sp > 0);
        assert!(p.transcript.entries().iter().all(|e| matches!(e.from, Address::Prover | Address::ServiceProvider)));
    }
}

#[test]
fn wrong_model_is_rejected_at_the_hash_check() {
    let mut r = round(4, 1, 2, 1, 9, synthetic(2), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let sp = sp_for(&outcome);
    let mut bundle = outcome.bundles[&1].clone();
    bundle.mhash = Digest([7; 32]);
    let p = prove_phase(&bundle, &sp, Blinding::Seeded(1)).unwrap();
    assert!(!p.client && !p.sp);
    assert_eq!(p.transcript.entries().len(), 2);
}

#[test]
fn key_from_another_round_is_rejected() {
    let mut r1 = round(4, 1, 2, 1, 10, synthetic(2), false);
    let mut r2 = round(4, 1, 2, 2, 11, synthetic(2), false);
    let o1 = run(&mut r1, &DropoutSchedule::none());
    let o2 = run(&mut r2, &DropoutSchedule::none());
    let sp = sp_for(&o1);
    let mut bundle = o1.bundles[&2].clone();
    bundle.key = o2.bundles[&2].key;
    let p = prove_phase(&bundle, &sp, Blinding::Seeded(2)).unwrap();
    assert!(!p.client && !p.sp);
    // A round-2 bundle against an SP that only saw round 1.
    let p = prove_phase(&o2.bundles[&1], &sp, Blinding::Seeded(2)).unwrap();
    assert!(!p.sp);
}

#[test]
fn client_refuses_identity_blind() {
    struct Evil;
    impl Party for Evil {
        fn address(&self) -> Address {
            Address::ServiceProvider
        }
        fn start(&mut self, _: &mut Outbox) -> Result<(), ProtocolError> {
            Ok(())
        }
        fn handle(&mut self, _: Address, env: &Envelope, out: &mut Outbox) -> Result<(), ProtocolError> {
            out.send(Address::Prover, Message::Blind(GroupElement::identity()).encode(env.round));
            Ok(())
        }
        fn on_timeout(&mut self, _: &mut Outbox) -> Result<(), ProtocolError> {
            Ok(())
        }
        fn is_finished(&self) -> bool {
            true
        }
    }
    let mut r = round(3, 0, 2, 1, 12, synthetic(2), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let (accepted, transcript) = prove_against(&outcome.bundles[&1], &mut Evil).unwrap();
    assert!(!accepted);
    assert!(!transcript.entries().iter().any(|e| e.envelope.kind == fedpop_core::protocol::MessageType::Response));
}

#[test]
fn alt_witness_path_proves_end_to_end() {
    let mut r = round(6, 2, 3, 1, 13, synthetic(3), true);
    let outcome = run(&mut r, &DropoutSchedule::from_indices([2], DropStep::BeforeProtect));
    let out = outcome.result.as_ref().unwrap();
    let keys: BTreeSet<[u8; 32]> = outcome.bundles.values().map(|b| b.key.to_bytes()).collect();
    assert_eq!(keys.len(), 1);
    let sp = sp_for(&outcome);
    for b in outcome.bundles.values() {
        assert!(prove_phase(b, &sp, Blinding::Seeded(4)).unwrap().sp);
    }
    assert_eq!(out.signers.len(), 5);
}

#[test]
fn reveal_is_idempotent_and_unknown_rounds_fail() {
    let mut r = round(4, 1, 2, 5, 14, synthetic(2), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let mut registry = RoundRegistry::default();
    registry.record(outcome.result.as_ref().unwrap());
    let (m1, t1) = registry.reveal(5).unwrap();
    let (m2, t2) = registry.reveal(5).unwrap();
    assert_eq!((m1, t1), (m2, t2));
    assert_eq!(registry.reveal(6), Err(ProtocolError::UnknownRound(6)));
}

#[test]
fn bundle_and_token_json_shapes() {
    let mut r = round(3, 0, 2, 9, 15, synthetic(2), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let bundle = &outcome.bundles[&1];
    let value = serde_json::to_value(bundle).unwrap();
    let mut fields: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    fields.sort();
    assert_eq!(fields, ["K", "l", "mhash", "sigma"]);
    assert_eq!(serde_json::from_value::<ProofBundle>(value).unwrap(), *bundle);
    let token = &outcome.result.as_ref().unwrap().token;
    let value = serde_json::to_value(token).unwrap();
    let mut fields: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    fields.sort();
    assert_eq!(fields, ["R", "VK", "l"]);
    assert_eq!(serde_json::from_value::<GlobalToken>(value).unwrap(), *token);
}

#[test]
fn bundle_creation_checks_the_signature() {
    let mut r = round(3, 0, 2, 1, 16, synthetic(2), false);
    let outcome = run(&mut r, &DropoutSchedule::none());
    let b = &outcome.bundles[&1];
    let vk = outcome.result.as_ref().unwrap().token.group_key;
    let forged = ThresholdSignature {
        commitment: GroupElement::generator(),
        response: Scalar::ONE,
    };
    let key = OprfKey::new(Scalar::ONE).unwrap();
    assert!(ProofBundle::new(1, b.mhash, b.sigma, key, &vk).is_ok());
    assert_eq!(ProofBundle::new(1, b.mhash, forged, key, &vk), Err(ProtocolError::BadSignature));
}

#[test]
fn stuck_coordinator_is_reported_as_deadlock() {
    struct Waiter;
    impl Party for Waiter {
        fn address(&self) -> Address {
            Address::Server
        }
        fn start(&mut self, _: &mut Outbox) -> Result<(), ProtocolError> {
            Ok(())
        }
        fn handle(&mut self, _: Address, _: &Envelope, _: &mut Outbox) -> Result<(), ProtocolError> {
            Ok(())
        }
        fn is_finished(&self) -> bool {
            false
        }
        fn status(&self) -> String {
            "waiting forever".into()
        }
    }
    let err = fedpop_core::sim::run_round(
        &mut [&mut Waiter],
        &DropoutSchedule::none(),
        &mut Transport::fifo(),
        Address::Server,
    )
    .unwrap_err();
    assert!(err.to_string().contains("waiting forever"));
}
