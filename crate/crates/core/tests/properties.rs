mod common;

use common::{round, synthetic};
use fedpop_core::protocol::{generate_phase, setup_phase, Envelope, MessageType, SetupConfig};
use fedpop_core::sim::{sample_dropout, DeliveryOrder, Transport};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn signing_threshold_is_n_minus_n_drop(n in 2u32..12, drop_frac in 0.0f64..1.0, seed: u64) {
        let n_drop = ((n - 1) as f64 * drop_frac) as u32;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (keys, server) = setup_phase(&SetupConfig::new(n, n_drop, 2), 1, &mut rng).unwrap();
        prop_assert_eq!(server.threshold(), n - n_drop);
        prop_assert_eq!(keys.len() as u32, n);
        for k in &keys {
            prop_assert_eq!(k.signer.threshold, n - n_drop);
            prop_assert!(k.sa.threshold() >= 1 && k.sa.threshold() < n);
        }
    }

    #[test]
    fn simulation_is_deterministic(n in 3u32..7, rate in 0.0f64..0.6, seed in 0u64..1000, shuffle: bool) {
        let n_drop = (rate * n as f64) as u32;
        let schedule = sample_dropout(rate, n, seed);
        let order = if shuffle { DeliveryOrder::Shuffle { seed } } else { DeliveryOrder::Fifo };
        let once = || {
            let mut r = round(n, n_drop, 2, 1, seed, synthetic(2), false);
            let outcome = generate_phase(&mut r.server, &mut r.clients, &schedule, &mut Transport::new(order)).unwrap();
            (outcome.transcript.to_json_lines(), outcome.result.map(|o| o.model))
        };
        prop_assert_eq!(once(), once());
    }

    #[test]
    fn envelope_json_roundtrips(round: u64, payload in proptest::collection::vec(any::<u8>(), 0..200)) {
        let env = Envelope { round, kind: MessageType::Blind, payload };
        let json = env.to_json();
        prop_assert_eq!(env.wire_len(), json.len());
        prop_assert_eq!(Envelope::from_json(&json).unwrap(), env);
    }
}
