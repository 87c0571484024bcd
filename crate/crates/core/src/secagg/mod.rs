//! Masking-based secure aggregation with self-masks, cancelling pairwise
//! masks, and Shamir-backed recovery for dropped clients.
//!
//! Client `i` sends `c_i = m_i + PRG(b_i) + Σ_j ±PRG(H(g^{k_i k_j}))` where
//! the sign is `+` when `i < j`. The server recovers `b_i` for every online
//! client and `k_j` for every dropped one, then strips what does not cancel.

mod aggregate;
mod client;
mod fixed_point;
mod graph;

pub use aggregate::{sa_aggregate, Classification, SaServerState};
pub use client::{RecoveryShares, SaClientState, SharePair};
pub use fixed_point::{decode_fixed_point, encode_fixed_point, model_digest, FixedPoint, ModelVector};
pub use graph::NeighborGraph;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_to_digest, shamir_share, Digest, GroupElement, Scalar, ShamirError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecAggError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("encoding: {0}")]
    Encoding(String),
    #[error("coordinate {coordinate} is out of the decodable range")]
    Decode { coordinate: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("no public key for neighbor {0}")]
    MissingNeighborKey(u32),
    #[error("self-mask already used to protect an update in round {round}")]
    AlreadyProtected { round: u64 },
    #[error("unknown client {0}")]
    UnknownClient(u32),
    #[error("inconsistent recovery shares: {0}")]
    InconsistentRecovery(String),
    #[error("cannot unmask round: {secret} of client {client} has {have} shares, needs {need}")]
    Unmaskable {
        client: u32,
        secret: &'static str,
        have: usize,
        need: u32,
    },
    #[error("recovered key of client {0} does not match its registered public key")]
    RecoveredKeyMismatch(u32),
    #[error("no masked updates received")]
    NoUpdates,
    #[error(transparent)]
    Shamir(#[from] ShamirError),
}

/// Setup inputs shared by clients and server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub graph: NeighborGraph,
    /// Shares needed to recover a client's `b_i` or `k_i`.
    pub threshold: u32,
    pub dimension: usize,
    pub encoding: FixedPoint,
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), SecAggError> {
        let degree = self.graph.min_degree();
        if self.threshold == 0 || self.threshold > degree {
            return Err(SecAggError::Params(format!(
                "recovery threshold {} must lie in 1..={degree} (graph degree)",
                self.threshold
            )));
        }
        if self.dimension == 0 {
            return Err(SecAggError::Params("dimension must be at least 1".into()));
        }
        self.encoding.validate()
    }
}

/// Recovery threshold for a graph of the given degree.
///
/// Starts from `ceil(2·degree/3)` and is capped at `signers - 1` so that any
/// round with at least `signers` online clients stays unmaskable on a complete
/// graph.
pub fn default_recovery_threshold(degree: u32, signers: u32) -> u32 {
    let two_thirds = (2 * degree).div_ceil(3);
    two_thirds.min(signers.saturating_sub(1)).max(1)
}

/// Runs the dealer-free setup: every client draws `(k_i, g^{k_i})` and `b_i`
/// and Shamir-shares both to its neighbors.
pub fn sa_setup<R: RngCore + CryptoRng + ?Sized>(
    config: &SaConfig,
    rng: &mut R,
) -> Result<(Vec<SaClientState>, SaServerState), SecAggError> {
    config.validate()?;
    let graph = &config.graph;
    let n = graph.len();
    let mut clients: Vec<SaClientState> = (1..=n)
        .map(|i| SaClientState::generate(i, config, rng))
        .collect();

    let publics: std::collections::BTreeMap<u32, GroupElement> =
        clients.iter().map(|c| (c.index(), c.dh_public())).collect();

    // Shares are evaluated at the recipient's index; delivery through the
    // server is modelled as already end-to-end encrypted.
    for owner in 1..=n {
        let neighbors: Vec<u32> = graph.neighbors(owner).collect();
        let degree = neighbors.len() as u32;
        let state = &clients[owner as usize - 1];
        let (b, k) = (state.self_mask_seed(), state.dh_secret());
        let b_shares = shamir_share(b, config.threshold, n, rng)?;
        let k_shares = shamir_share(k, config.threshold, n, rng)?;
        debug_assert!(degree >= config.threshold);
        for j in neighbors {
            let pair = SharePair {
                self_mask: b_shares[j as usize - 1],
                dh_key: k_shares[j as usize - 1],
            };
            clients[j as usize - 1].hold_share(owner, pair, publics[&owner]);
        }
    }
    let server = SaServerState::new(config.clone(), publics);
    Ok((clients, server))
}

pub(crate) fn pair_seed(secret: &Scalar, peer_public: &GroupElement) -> Digest {
    let shared = peer_public * secret;
    hash_to_digest(b"fedpop/pair", &[&shared.to_bytes()])
}

pub(crate) fn self_seed(b: &Scalar) -> Digest {
    Digest(b.to_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_threshold_defaults() {
        assert_eq!(default_recovery_threshold(9, 9), 6);
        assert_eq!(default_recovery_threshold(9, 3), 2);
        assert_eq!(default_recovery_threshold(3, 1), 1);
        assert_eq!(default_recovery_threshold(16, 90), 11);
    }
}
