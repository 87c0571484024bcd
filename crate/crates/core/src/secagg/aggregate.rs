use std::collections::{BTreeMap, BTreeSet};

use super::{
    pair_seed, self_seed, ModelVector, RecoveryShares, SaConfig, SecAggError,
};
use crate::crypto::{prg_expand, shamir_reconstruct, GroupElement, Scalar, ShamirShare};

/// Online/dropped split fixed when the server stops waiting for masked updates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub online: BTreeSet<u32>,
    pub dropped: BTreeSet<u32>,
}

/// Server-side secure-aggregation state for one round.
#[derive(Clone, Debug)]
pub struct SaServerState {
    config: SaConfig,
    publics: BTreeMap<u32, GroupElement>,
    masked: BTreeMap<u32, ModelVector>,
    recovery: BTreeMap<u32, RecoveryShares>,
    classification: Option<Classification>,
}

impl SaServerState {
    pub fn new(config: SaConfig, publics: BTreeMap<u32, GroupElement>) -> Self {
        Self {
            config,
            publics,
            masked: BTreeMap::new(),
            recovery: BTreeMap::new(),
            classification: None,
        }
    }

    pub fn config(&self) -> &SaConfig {
        &self.config
    }

    pub fn publics(&self) -> &BTreeMap<u32, GroupElement> {
        &self.publics
    }

    pub fn received(&self) -> usize {
        self.masked.len()
    }

    pub fn receive_masked(&mut self, client: u32, masked: ModelVector) -> Result<(), SecAggError> {
        if !self.publics.contains_key(&client) {
            return Err(SecAggError::UnknownClient(client));
        }
        if self.classification.is_some() {
            return Err(SecAggError::InconsistentRecovery(format!(
                "masked update from {client} arrived after classification"
            )));
        }
        if masked.dimension() != self.config.dimension {
            return Err(SecAggError::Dimension {
                expected: self.config.dimension,
                actual: masked.dimension(),
            });
        }
        self.masked.insert(client, masked);
        Ok(())
    }

    /// Fixes the online set to the clients whose masked update arrived.
    pub fn classify(&mut self) -> &Classification {
        let online: BTreeSet<u32> = self.masked.keys().copied().collect();
        let dropped = self
            .publics
            .keys()
            .copied()
            .filter(|i| !online.contains(i))
            .collect();
        self.classification.get_or_insert(Classification { online, dropped })
    }

    pub fn classification(&self) -> Option<&Classification> {
        self.classification.as_ref()
    }

    /// `(N(i)_o, N(i)_d)` for client `i`.
    pub fn neighbor_status(&self, client: u32) -> Option<(BTreeSet<u32>, BTreeSet<u32>)> {
        let class = self.classification.as_ref()?;
        let (mut online, mut dropped) = (BTreeSet::new(), BTreeSet::new());
        for j in self.config.graph.neighbors(client) {
            if class.online.contains(&j) {
                online.insert(j);
            } else {
                dropped.insert(j);
            }
        }
        Some((online, dropped))
    }

    pub fn receive_recovery(&mut self, shares: RecoveryShares) -> Result<(), SecAggError> {
        let class = self
            .classification
            .as_ref()
            .ok_or_else(|| SecAggError::InconsistentRecovery("round not classified yet".into()))?;
        if !class.online.contains(&shares.holder) {
            return Err(SecAggError::InconsistentRecovery(format!(
                "recovery shares from non-online client {}",
                shares.holder
            )));
        }
        self.recovery.insert(shares.holder, shares);
        Ok(())
    }

    pub fn recovery_count(&self) -> usize {
        self.recovery.len()
    }

    /// Removes all masks and returns `Σ_{i∈C_o} m_i`.
    pub fn aggregate(&self) -> Result<ModelVector, SecAggError> {
        let recovery: Vec<RecoveryShares> = self.recovery.values().cloned().collect();
        sa_aggregate(&self.config, &self.publics, &self.masked, &recovery)
    }
}

fn collect_shares<'a>(
    owner: u32,
    recovery: &'a [RecoveryShares],
    pick: impl Fn(&'a RecoveryShares) -> &'a BTreeMap<u32, ShamirShare>,
) -> Result<Vec<ShamirShare>, SecAggError> {
    recovery
        .iter()
        .filter_map(|r| pick(r).get(&owner).map(|s| (r.holder, *s)))
        .map(|(holder, share)| {
            if share.index != holder {
                return Err(SecAggError::InconsistentRecovery(format!(
                    "client {holder} sent a share evaluated at {}",
                    share.index
                )));
            }
            Ok(share)
        })
        .collect()
}

fn subtract_scaled(acc: &mut [Scalar], mask: &[Scalar], negate: bool) {
    if negate {
        acc.iter_mut().zip(mask).for_each(|(a, m)| *a += *m);
    } else {
        acc.iter_mut().zip(mask).for_each(|(a, m)| *a -= *m);
    }
}

/// Unmasks the sum of `masked` updates.
///
/// Every client absent from `masked` is treated as dropped. Fails closed:
/// if any needed `b_i` or `k_j` cannot be reconstructed, no sum is returned.
pub fn sa_aggregate(
    config: &SaConfig,
    publics: &BTreeMap<u32, GroupElement>,
    masked: &BTreeMap<u32, ModelVector>,
    recovery: &[RecoveryShares],
) -> Result<ModelVector, SecAggError> {
    let Some(first) = masked.values().next() else {
        return Err(SecAggError::NoUpdates);
    };
    let d = config.dimension;
    let t = config.threshold;
    let online: BTreeSet<u32> = masked.keys().copied().collect();
    let graph = &config.graph;

    // Shares from clients that are not online were never requested.
    let recovery: Vec<RecoveryShares> = recovery
        .iter()
        .filter(|r| online.contains(&r.holder))
        .cloned()
        .collect();

    let mut sum = ModelVector::zeros(d, first.encoding());
    for (&i, c) in masked {
        if !publics.contains_key(&i) {
            return Err(SecAggError::UnknownClient(i));
        }
        sum.accumulate(c)?;
    }

    for &i in &online {
        if recovery.iter().any(|r| r.dh_key.contains_key(&i)) {
            return Err(SecAggError::InconsistentRecovery(format!(
                "key share released for online client {i}"
            )));
        }
        let shares = collect_shares(i, &recovery, |r| &r.self_mask)?;
        if shares.len() < t as usize {
            return Err(SecAggError::Unmaskable {
                client: i,
                secret: "self-mask b_i",
                have: shares.len(),
                need: t,
            });
        }
        let b = shamir_reconstruct(&shares, t)?;
        subtract_scaled(sum.coords_mut(), &prg_expand(&self_seed(&b), d), false);
    }

    for (&j, public_j) in publics.iter().filter(|(j, _)| !online.contains(j)) {
        if recovery.iter().any(|r| r.self_mask.contains_key(&j)) {
            return Err(SecAggError::InconsistentRecovery(format!(
                "self-mask share released for dropped client {j}"
            )));
        }
        let partners: Vec<u32> = graph.neighbors(j).filter(|i| online.contains(i)).collect();
        if partners.is_empty() {
            continue;
        }
        let shares = collect_shares(j, &recovery, |r| &r.dh_key)?;
        if shares.len() < t as usize {
            return Err(SecAggError::Unmaskable {
                client: j,
                secret: "key k_j",
                have: shares.len(),
                need: t,
            });
        }
        let k_j = shamir_reconstruct(&shares, t)?;
        if GroupElement::mul_base(&k_j) != *public_j {
            return Err(SecAggError::RecoveredKeyMismatch(j));
        }
        for i in partners {
            let public_i = publics.get(&i).ok_or(SecAggError::UnknownClient(i))?;
            let mask = prg_expand(&pair_seed(&k_j, public_i), d);
            // c_i carries +mask when i < j.
            subtract_scaled(sum.coords_mut(), &mask, i > j);
        }
    }

    Ok(ModelVector::from_coords(
        sum.coords().to_vec(),
        first.encoding(),
        online.len() as u32,
    ))
}
