use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::crypto::GroupElement;
use crate::secagg::{default_recovery_threshold, sa_setup, FixedPoint, NeighborGraph, SaClientState, SaConfig};
use crate::tsig::{ts_keygen, PublicKeyPackage, SignerKeys};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupConfig {
    pub n: u32,
    pub n_drop: u32,
    pub dimension: usize,
    /// Defaults to [`NeighborGraph::default_for`].
    #[serde(default)]
    pub graph: Option<NeighborGraph>,
    /// Defaults to [`default_recovery_threshold`].
    #[serde(default)]
    pub recovery_threshold: Option<u32>,
}

impl SetupConfig {
    pub fn new(n: u32, n_drop: u32, dimension: usize) -> Self {
        Self {
            n,
            n_drop,
            dimension,
            graph: None,
            recovery_threshold: None,
        }
    }

    /// Signing threshold `t = n − n_drop`.
    pub fn threshold(&self) -> u32 {
        self.n - self.n_drop
    }
}

/// One client's keys for one round. The index never leaves Generate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientKeyMaterial {
    pub round: u64,
    pub sa: SaClientState,
    pub signer: SignerKeys,
}

impl ClientKeyMaterial {
    pub fn index(&self) -> u32 {
        self.signer.index
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerKeyMaterial {
    pub round: u64,
    pub sa_config: SaConfig,
    pub dh_publics: BTreeMap<u32, GroupElement>,
    pub signing: PublicKeyPackage,
}

impl ServerKeyMaterial {
    pub fn threshold(&self) -> u32 {
        self.signing.threshold
    }

    pub fn clients(&self) -> u32 {
        self.dh_publics.len() as u32
    }
}

/// Fresh secure-aggregation and signing keys for round `round`.
pub fn setup_phase<R: RngCore + CryptoRng + ?Sized>(
    config: &SetupConfig,
    round: u64,
    rng: &mut R,
) -> Result<(Vec<ClientKeyMaterial>, ServerKeyMaterial), ProtocolError> {
    if config.n_drop >= config.n {
        return Err(ProtocolError::Params(format!(
            "n_drop = {} must be below n = {}",
            config.n_drop, config.n
        )));
    }
    let t = config.threshold();
    let graph = match &config.graph {
        Some(g) => g.clone(),
        None => NeighborGraph::default_for(config.n)?,
    };
    if graph.len() != config.n {
        return Err(ProtocolError::Params(format!(
            "graph has {} vertices, expected {}",
            graph.len(),
            config.n
        )));
    }
    let recovery = config
        .recovery_threshold
        .unwrap_or_else(|| default_recovery_threshold(graph.min_degree(), t));
    let sa_config = SaConfig {
        graph,
        threshold: recovery,
        dimension: config.dimension,
        encoding: FixedPoint::with_contributors(config.n)?,
    };
    let (sa_clients, sa_server) = sa_setup(&sa_config, rng)?;
    let (signing, signer_keys) = ts_keygen(t, config.n, rng)?;
    let clients = sa_clients
        .into_iter()
        .zip(signer_keys)
        .map(|(sa, signer)| ClientKeyMaterial { round, sa, signer })
        .collect();
    let server = ServerKeyMaterial {
        round,
        sa_config,
        dh_publics: sa_server.publics().clone(),
        signing,
    };
    Ok((clients, server))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn threshold_is_n_minus_ndrop() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for (n, d, t) in [(100, 10, 90), (10, 0, 10), (10, 7, 3)] {
            let (clients, server) = setup_phase(&SetupConfig::new(n, d, 2), 1, &mut rng).unwrap();
            assert_eq!(server.threshold(), t);
            assert_eq!(clients.len(), n as usize);
            assert!(clients.iter().all(|c| c.signer.threshold == t));
        }
    }

    #[test]
    fn ndrop_equal_to_n_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(matches!(
            setup_phase(&SetupConfig::new(5, 5, 2), 1, &mut rng),
            Err(ProtocolError::Params(_))
        ));
    }
}
