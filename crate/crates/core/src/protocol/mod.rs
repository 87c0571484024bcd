//! Party state machines for Setup, Generate, Reveal and Prove.
//!
//! Generate runs secure aggregation over the clients' local updates, has the
//! online clients threshold-sign `H(M)`, and hands each signer `(σ, K)`.
//! The server publishes `(VK, R = F_K(VK))`. In Prove a client convinces a
//! service provider that it holds `σ` on the revealed model and knows `K`,
//! without revealing which client it is.

mod generate;
mod ideal;
mod messages;
mod prove;
mod setup;
mod witness;

pub use generate::{
    generate_phase, ClientParty, ClientTimings, FlServer, GenerateOutput, RoundFailure, RoundOutcome, ServerTimings,
};
pub use ideal::{IdealFedPop, ProveAttempt};
pub use messages::{Envelope, Message, MessageType, Phase};
pub use prove::{
    prove_against, prove_phase, Blinding, ProveOutcome, ProverParty, RevealedRound, ServiceProvider, VerifierParty,
};
pub use setup::{setup_phase, ClientKeyMaterial, ServerKeyMaterial, SetupConfig};
pub use witness::{alt_group_witness, witness_contribution};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Digest, EncodingError, GroupElement};
use crate::oprf::{oprf_direct, OprfError, OprfKey};
use crate::secagg::{ModelVector, SecAggError};
use crate::tsig::{ts_verify, SignError, ThresholdSignature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    SecAgg(#[from] SecAggError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Oprf(#[from] OprfError),
    #[error("unexpected {kind:?} message from {from}")]
    Unexpected { kind: MessageType, from: String },
    #[error("no witness contribution from online client {0}")]
    MissingWitness(u32),
    #[error("round {0} is unknown or did not complete")]
    UnknownRound(u64),
    #[error("signature on the round model does not verify")]
    BadSignature,
}

/// What a participating client keeps from a round: `⟨H(M), σ, K⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBundle {
    pub l: u64,
    pub mhash: Digest,
    pub sigma: ThresholdSignature,
    #[serde(rename = "K")]
    pub key: OprfKey,
}

impl ProofBundle {
    /// Checks `σ` on `H(M)` under the round's `VK` before accepting it.
    pub fn new(
        l: u64,
        mhash: Digest,
        sigma: ThresholdSignature,
        key: OprfKey,
        group_key: &GroupElement,
    ) -> Result<Self, ProtocolError> {
        if !ts_verify(&sigma, &mhash, group_key) {
            return Err(ProtocolError::BadSignature);
        }
        Ok(Self { l, mhash, sigma, key })
    }
}

/// Public per-round verification material `tk_g = (VK, R)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalToken {
    pub l: u64,
    #[serde(rename = "VK")]
    pub group_key: GroupElement,
    #[serde(rename = "R")]
    pub r: Digest,
}

impl GlobalToken {
    pub fn derive(l: u64, group_key: GroupElement, key: &OprfKey) -> Self {
        Self {
            l,
            group_key,
            r: oprf_direct(key, &group_key.to_bytes()),
        }
    }
}

/// Server-side archive of completed rounds, queried by Reveal.
#[derive(Clone, Debug, Default)]
pub struct RoundRegistry {
    rounds: BTreeMap<u64, (ModelVector, GlobalToken)>,
}

impl RoundRegistry {
    pub fn record(&mut self, output: &GenerateOutput) {
        self.rounds
            .insert(output.token.l, (output.model.clone(), output.token.clone()));
    }

    /// `(M_l, tk_g^l)` for a completed round. Idempotent.
    pub fn reveal(&self, l: u64) -> Result<(ModelVector, GlobalToken), ProtocolError> {
        self.rounds.get(&l).cloned().ok_or(ProtocolError::UnknownRound(l))
    }
}
