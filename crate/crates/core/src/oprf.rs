//! 2HashDH oblivious PRF: `F_K(x) = H2(x, H1(x)^K)`.
//!
//! The key holder only ever sees the blinded `α = H1(x)^ρ`; the receiver
//! unblinds `β = α^K` with `ρ^{-1}`.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_to_digest, hash_to_group, Digest, EncodingError, GroupElement, Scalar};

const TAG_H2: &[u8] = b"fedpop/H2";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OprfError {
    #[error("OPRF key must be nonzero")]
    ZeroKey,
    #[error("group element is the identity")]
    IdentityElement,
    #[error("blind state was already used")]
    StateReused,
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// PRF key `K`, never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OprfKey(Scalar);

impl OprfKey {
    pub fn new(k: Scalar) -> Result<Self, OprfError> {
        if k.is_zero() {
            return Err(OprfError::ZeroKey);
        }
        Ok(Self(k))
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Self(Scalar::random_nonzero(rng))
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OprfError> {
        Self::new(Scalar::from_bytes(bytes)?)
    }
}

impl Serialize for OprfKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for OprfKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(text).map_err(serde::de::Error::custom)?;
        Self::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

fn h2(x: &[u8], y: &GroupElement) -> Digest {
    hash_to_digest(TAG_H2, &[x, &y.to_bytes()])
}

pub fn oprf_direct(key: &OprfKey, x: &[u8]) -> Digest {
    h2(x, &(hash_to_group(x) * *key.scalar()))
}

/// Receiver-side blinding state. Single use.
#[derive(Clone, Debug)]
pub struct BlindState {
    rho: Scalar,
    input: Vec<u8>,
    alpha: GroupElement,
    used: bool,
}

impl BlindState {
    pub fn alpha(&self) -> &GroupElement {
        &self.alpha
    }

    pub fn rho(&self) -> &Scalar {
        &self.rho
    }

    pub fn input(&self) -> &[u8] {
        &self.input
    }

    pub fn is_used(&self) -> bool {
        self.used
    }
}

pub fn oprf_blind<R: RngCore + CryptoRng + ?Sized>(x: &[u8], rng: &mut R) -> BlindState {
    blind_with_factor(x, Scalar::random_nonzero(rng)).expect("random_nonzero is nonzero")
}

/// Blinds with a caller-chosen `ρ`. Used where the receiver's randomness must be fixed.
pub fn blind_with_factor(x: &[u8], rho: Scalar) -> Result<BlindState, OprfError> {
    if rho.is_zero() {
        return Err(OprfError::ZeroKey);
    }
    Ok(BlindState {
        alpha: hash_to_group(x) * rho,
        rho,
        input: x.to_vec(),
        used: false,
    })
}

/// `β = α^K`. Refuses the identity.
pub fn oprf_evaluate(alpha: &GroupElement, key: &OprfKey) -> Result<GroupElement, OprfError> {
    if alpha.is_identity() {
        return Err(OprfError::IdentityElement);
    }
    Ok(alpha * key.scalar())
}

/// Decodes `α` from the wire and evaluates it.
pub fn oprf_evaluate_encoded(alpha: &[u8], key: &OprfKey) -> Result<GroupElement, OprfError> {
    oprf_evaluate(&GroupElement::from_bytes(alpha)?, key)
}

/// `H2(x, β^{1/ρ})`. Marks the state used.
pub fn oprf_unblind(beta: &GroupElement, state: &mut BlindState) -> Result<Digest, OprfError> {
    if state.used {
        return Err(OprfError::StateReused);
    }
    if beta.is_identity() {
        return Err(OprfError::IdentityElement);
    }
    state.used = true;
    let inv = state.rho.invert().expect("rho is nonzero");
    Ok(h2(&state.input, &(beta * &inv)))
}
