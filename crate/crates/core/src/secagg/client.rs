use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::{pair_seed, self_seed, FixedPoint, ModelVector, SaConfig, SecAggError};
use crate::crypto::{prg_expand, Digest, GroupElement, Scalar, ShamirShare};

/// Shares of one neighbor's `(b_j, k_j)` held by this client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharePair {
    pub self_mask: ShamirShare,
    pub dh_key: ShamirShare,
}

/// Shares a client releases after the server classifies the round.
///
/// `self_mask` holds shares of `b_j` for online neighbors `j`, `dh_key`
/// shares of `k_j` for dropped ones; no owner appears in both.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecoveryShares {
    pub holder: u32,
    pub self_mask: BTreeMap<u32, ShamirShare>,
    pub dh_key: BTreeMap<u32, ShamirShare>,
}

/// Client-side secure-aggregation state for one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaClientState {
    index: u32,
    dh_secret: Scalar,
    dh_public: GroupElement,
    self_mask_seed: Scalar,
    neighbor_publics: BTreeMap<u32, GroupElement>,
    held_shares: BTreeMap<u32, SharePair>,
    threshold: u32,
    dimension: usize,
    encoding: FixedPoint,
    protected_in: Option<u64>,
}

impl SaClientState {
    pub(super) fn generate<R: RngCore + CryptoRng + ?Sized>(index: u32, config: &SaConfig, rng: &mut R) -> Self {
        let dh_secret = Scalar::random_nonzero(rng);
        Self {
            index,
            dh_secret,
            dh_public: GroupElement::mul_base(&dh_secret),
            self_mask_seed: Scalar::random(rng),
            neighbor_publics: BTreeMap::new(),
            held_shares: BTreeMap::new(),
            threshold: config.threshold,
            dimension: config.dimension,
            encoding: config.encoding,
            protected_in: None,
        }
    }

    pub(super) fn hold_share(&mut self, owner: u32, pair: SharePair, owner_public: GroupElement) {
        self.held_shares.insert(owner, pair);
        self.neighbor_publics.insert(owner, owner_public);
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn dh_public(&self) -> GroupElement {
        self.dh_public
    }

    pub(crate) fn dh_secret(&self) -> Scalar {
        self.dh_secret
    }

    pub(crate) fn self_mask_seed(&self) -> Scalar {
        self.self_mask_seed
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn encoding(&self) -> FixedPoint {
        self.encoding
    }

    pub fn neighbors(&self) -> impl Iterator<Item = u32> + '_ {
        self.held_shares.keys().copied()
    }

    pub fn held_shares(&self) -> &BTreeMap<u32, SharePair> {
        &self.held_shares
    }

    /// Round in which the self-mask was spent, if any.
    pub fn protected_in(&self) -> Option<u64> {
        self.protected_in
    }

    /// Total mask `PRG(b_i) + Σ_j ±PRG(H(k_{i,j}))` added by [`Self::protect`].
    pub fn mask(&self) -> Result<Vec<Scalar>, SecAggError> {
        self.mask_with(prg_expand)
    }

    fn mask_with(&self, expand: impl Fn(&Digest, usize) -> Vec<Scalar>) -> Result<Vec<Scalar>, SecAggError> {
        let d = self.dimension;
        let mut mask = expand(&self_seed(&self.self_mask_seed), d);
        for &j in self.held_shares.keys() {
            let public = self.neighbor_public(j)?;
            let pairwise = expand(&pair_seed(&self.dh_secret, &public), d);
            if self.index < j {
                mask.iter_mut().zip(&pairwise).for_each(|(a, b)| *a += *b);
            } else {
                mask.iter_mut().zip(&pairwise).for_each(|(a, b)| *a -= *b);
            }
        }
        Ok(mask)
    }

    /// Masks `update` for `round`. The self-mask is single-use.
    pub fn protect(&mut self, round: u64, update: &ModelVector) -> Result<ModelVector, SecAggError> {
        self.protect_with(round, update, prg_expand)
    }

    pub(crate) fn protect_with(
        &mut self,
        round: u64,
        update: &ModelVector,
        expand: impl Fn(&Digest, usize) -> Vec<Scalar>,
    ) -> Result<ModelVector, SecAggError> {
        if let Some(round) = self.protected_in {
            return Err(SecAggError::AlreadyProtected { round });
        }
        if update.dimension() != self.dimension {
            return Err(SecAggError::Dimension {
                expected: self.dimension,
                actual: update.dimension(),
            });
        }
        let mask = self.mask_with(expand)?;
        let mut masked = update.clone();
        masked
            .coords_mut()
            .iter_mut()
            .zip(&mask)
            .for_each(|(c, m)| *c += *m);
        self.protected_in = Some(round);
        Ok(masked)
    }

    /// Releases `b`-shares of online neighbors and `k`-shares of dropped ones.
    pub fn recovery_shares(
        &self,
        online: &BTreeSet<u32>,
        dropped: &BTreeSet<u32>,
    ) -> Result<RecoveryShares, SecAggError> {
        if let Some(both) = online.intersection(dropped).next() {
            return Err(SecAggError::InconsistentRecovery(format!(
                "client {both} listed as both online and dropped"
            )));
        }
        let mut out = RecoveryShares {
            holder: self.index,
            ..Default::default()
        };
        for (&owner, pair) in &self.held_shares {
            if online.contains(&owner) {
                out.self_mask.insert(owner, pair.self_mask);
            } else if dropped.contains(&owner) {
                out.dh_key.insert(owner, pair.dh_key);
            }
        }
        Ok(out)
    }

    /// Public key of neighbor `j`, needed before protecting.
    pub fn neighbor_public(&self, j: u32) -> Result<GroupElement, SecAggError> {
        self.neighbor_publics
            .get(&j)
            .copied()
            .ok_or(SecAggError::MissingNeighborKey(j))
    }
}
