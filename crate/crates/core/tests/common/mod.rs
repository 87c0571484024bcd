#![allow(dead_code)]

use std::sync::Arc;

use fedpop_core::protocol::{
    generate_phase, setup_phase, ClientParty, FlServer, RoundOutcome, SetupConfig,
};
use fedpop_core::sim::{DropoutSchedule, Transport};
use fedpop_core::trainer::{SyntheticTrainer, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct Round {
    pub clients: Vec<ClientParty>,
    pub server: FlServer,
}

/// Fresh keys and parties for one round.
pub fn round(n: u32, n_drop: u32, dim: usize, l: u64, seed: u64, trainer: Arc<dyn Trainer>, alt: bool) -> Round {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (keys, server_keys) = setup_phase(&SetupConfig::new(n, n_drop, dim), l, &mut rng).unwrap();
    let clients = keys
        .into_iter()
        .map(|k| {
            let s = seed ^ ((k.index() as u64) << 32);
            ClientParty::new(k, trainer.clone(), s).with_alt_witness(alt)
        })
        .collect();
    let server = FlServer::new(server_keys, vec![0.0; dim], seed.wrapping_add(1)).with_alt_witness(alt);
    Round { clients, server }
}

pub fn synthetic(dim: usize) -> Arc<dyn Trainer> {
    Arc::new(SyntheticTrainer {
        dimension: dim,
        data_seed: 5,
    })
}

pub fn run(r: &mut Round, schedule: &DropoutSchedule) -> RoundOutcome {
    generate_phase(&mut r.server, &mut r.clients, schedule, &mut Transport::fifo()).unwrap()
}
