//! Trusted-party reference for conformance tests: the outputs a perfect
//! implementation must produce, computed from bookkeeping alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;

/// One Prove attempt, described by the inputs a client brings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProveAttempt {
    /// The client presents what it received in `round`.
    Honest { client: u32, round: u64 },
    /// The client claims a model other than the round's.
    WrongModel { client: u32, round: u64 },
    /// Signature and key invented by the client.
    Forged { client: u32, round: u64 },
    /// Signature from `round`, key from `key_round`.
    CrossRound { client: u32, round: u64, key_round: u64 },
}

impl ProveAttempt {
    pub fn client(&self) -> u32 {
        match *self {
            ProveAttempt::Honest { client, .. }
            | ProveAttempt::WrongModel { client, .. }
            | ProveAttempt::Forged { client, .. }
            | ProveAttempt::CrossRound { client, .. } => client,
        }
    }

    pub fn round(&self) -> u64 {
        match *self {
            ProveAttempt::Honest { round, .. }
            | ProveAttempt::WrongModel { round, .. }
            | ProveAttempt::Forged { round, .. }
            | ProveAttempt::CrossRound { round, .. } => round,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IdealFedPop {
    rounds: BTreeMap<u64, (Digest, BTreeSet<u32>)>,
    revealed: BTreeSet<u64>,
}

impl IdealFedPop {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records round `l` if at least `t` clients sign; returns whether it completed.
    pub fn generate(&mut self, l: u64, model: Digest, signers: BTreeSet<u32>, t: u32) -> bool {
        if signers.len() < t as usize {
            return false;
        }
        self.rounds.insert(l, (model, signers));
        true
    }

    pub fn reveal(&mut self, l: u64) -> Option<Digest> {
        let (model, _) = self.rounds.get(&l)?;
        self.revealed.insert(l);
        Some(*model)
    }

    pub fn participated(&self, client: u32, l: u64) -> bool {
        self.rounds.get(&l).is_some_and(|(_, s)| s.contains(&client))
    }

    /// The decision delivered to both the client and the service provider.
    pub fn prove(&self, attempt: ProveAttempt) -> bool {
        let round = attempt.round();
        let genuine = match attempt {
            ProveAttempt::Honest { .. } => true,
            ProveAttempt::CrossRound { key_round, .. } => key_round == round,
            ProveAttempt::WrongModel { .. } | ProveAttempt::Forged { .. } => false,
        };
        genuine && self.revealed.contains(&round) && self.participated(attempt.client(), round)
    }
}
