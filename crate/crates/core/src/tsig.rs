//! `(t, n)` threshold Schnorr signatures with a trusted dealer and
//! two-round, coordinator-mediated signing (FROST-style).
//!
//! Round one: every participant commits to a hiding and a binding nonce.
//! The coordinator fixes the participant set and message in a
//! [`SigningSession`]. Round two: each participant returns
//! `z_i = d_i + ρ_i·e_i + λ_i·c·sk_i`, which the coordinator checks against
//! `vk_i` and sums into an ordinary Schnorr signature `(R, z)` under `VK`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::shamir::lagrange_at_zero;
use crate::crypto::{
    fixed, hash_to_digest, hash_to_scalar, shamir_share, Digest, EncodingError, GroupElement, Scalar,
    ShamirError,
};

const TAG_COMMITMENTS: &[u8] = b"fedpop/commitments";
const TAG_BINDING: &[u8] = b"fedpop/binding";
const TAG_CHALLENGE: &[u8] = b"fedpop/challenge";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("not enough signatures: have {have}, need {need}")]
    Threshold { have: usize, need: u32 },
    #[error("signer {0} is not a participant of this session")]
    NotParticipant(u32),
    #[error("nonces for session {0:?} were already used")]
    NonceReuse(SessionId),
    #[error("no nonces committed for session {0:?}")]
    MissingNonces(SessionId),
    #[error("session commitment for signer {0} does not match its nonces")]
    CommitmentMismatch(u32),
    #[error("message does not match the session message")]
    MessageMismatch,
    #[error("session was built for a different group key")]
    KeyMismatch,
    #[error("partial signature belongs to a different session")]
    SessionMismatch,
    #[error("duplicate partial signature from signer {0}")]
    DuplicatePartial(u32),
    #[error("missing partial signature from participant {0}")]
    MissingPartial(u32),
    #[error("partial signature from signer {index} is invalid")]
    InvalidShare { index: u32 },
    #[error("session has no participants")]
    EmptySession,
    #[error(transparent)]
    Keygen(#[from] ShamirError),
}

/// One signer's key material from the dealer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignerKeys {
    pub index: u32,
    pub signing_share: Scalar,
    pub verifying_share: GroupElement,
    pub group_key: GroupElement,
    pub threshold: u32,
    pub signers: u32,
}

/// Public output of keygen: `VK` plus every `vk_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKeyPackage {
    pub group_key: GroupElement,
    pub verifying_shares: BTreeMap<u32, GroupElement>,
    pub threshold: u32,
}

/// Dealer keygen: samples the group secret, Shamir-shares it, and forgets it.
pub fn ts_keygen<R: RngCore + CryptoRng + ?Sized>(
    t: u32,
    n: u32,
    rng: &mut R,
) -> Result<(PublicKeyPackage, Vec<SignerKeys>), SignError> {
    let secret = Scalar::random_nonzero(rng);
    let shares = shamir_share(secret, t, n, rng)?;
    let group_key = GroupElement::mul_base(&secret);
    let keys: Vec<SignerKeys> = shares
        .iter()
        .map(|s| SignerKeys {
            index: s.index,
            signing_share: s.value,
            verifying_share: GroupElement::mul_base(&s.value),
            group_key,
            threshold: t,
            signers: n,
        })
        .collect();
    let public = PublicKeyPackage {
        group_key,
        verifying_shares: keys.iter().map(|k| (k.index, k.verifying_share)).collect(),
        threshold: t,
    };
    Ok((public, keys))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(pub u64);

/// Round-one commitments `(D_i, E_i) = (g^{d_i}, g^{e_i})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SigningCommitments {
    pub hiding: GroupElement,
    pub binding: GroupElement,
}

impl SigningCommitments {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.hiding.to_bytes());
        out[32..].copy_from_slice(&self.binding.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let raw: [u8; 64] = fixed(bytes)?;
        Ok(Self {
            hiding: GroupElement::from_bytes(&raw[..32])?,
            binding: GroupElement::from_bytes(&raw[32..])?,
        })
    }
}

struct SigningNonces {
    hiding: Scalar,
    binding: Scalar,
    commitments: SigningCommitments,
}

/// Coordinator-fixed context of one signing attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigningSession {
    id: SessionId,
    message: Digest,
    group_key: GroupElement,
    commitments: BTreeMap<u32, SigningCommitments>,
}

impl SigningSession {
    pub fn new(
        id: SessionId,
        message: Digest,
        group_key: GroupElement,
        commitments: BTreeMap<u32, SigningCommitments>,
    ) -> Result<Self, SignError> {
        if commitments.is_empty() {
            return Err(SignError::EmptySession);
        }
        if commitments.contains_key(&0) {
            return Err(SignError::NotParticipant(0));
        }
        Ok(Self {
            id,
            message,
            group_key,
            commitments,
        })
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn message(&self) -> &Digest {
        &self.message
    }

    pub fn group_key(&self) -> &GroupElement {
        &self.group_key
    }

    pub fn commitments(&self) -> &BTreeMap<u32, SigningCommitments> {
        &self.commitments
    }

    pub fn participants(&self) -> Vec<u32> {
        self.commitments.keys().copied().collect()
    }

    fn binding_factors(&self) -> BTreeMap<u32, Scalar> {
        let mut encoded = Vec::with_capacity(self.commitments.len() * 68);
        for (i, c) in &self.commitments {
            encoded.extend_from_slice(&i.to_be_bytes());
            encoded.extend_from_slice(&c.to_bytes());
        }
        let list = hash_to_digest(
            TAG_COMMITMENTS,
            &[&self.id.0.to_be_bytes(), self.message.as_bytes(), &encoded],
        );
        let vk = self.group_key.to_bytes();
        self.commitments
            .keys()
            .map(|&i| {
                let rho = hash_to_scalar(
                    TAG_BINDING,
                    &[&vk, self.message.as_bytes(), list.as_bytes(), &i.to_be_bytes()],
                );
                (i, rho)
            })
            .collect()
    }

    fn group_commitment(&self, binding: &BTreeMap<u32, Scalar>) -> GroupElement {
        let one = Scalar::ONE;
        let terms: Vec<(Scalar, GroupElement)> = self
            .commitments
            .iter()
            .flat_map(|(i, c)| [(one, c.hiding), (binding[i], c.binding)])
            .collect();
        GroupElement::multiscalar_mul(terms.iter().map(|(s, p)| (s, p)))
    }
}

fn challenge(commitment: &GroupElement, group_key: &GroupElement, message: &Digest) -> Scalar {
    hash_to_scalar(
        TAG_CHALLENGE,
        &[&commitment.to_bytes(), &group_key.to_bytes(), message.as_bytes()],
    )
}

/// One signer's round-two response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartialSignature {
    pub session: SessionId,
    pub index: u32,
    pub response: Scalar,
}

impl PartialSignature {
    pub const LEN: usize = 8 + 4 + 32;

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let mut out = [0u8; Self::LEN];
        out[..8].copy_from_slice(&self.session.0.to_be_bytes());
        out[8..12].copy_from_slice(&self.index.to_be_bytes());
        out[12..].copy_from_slice(&self.response.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let raw: [u8; Self::LEN] = fixed(bytes)?;
        Ok(Self {
            session: SessionId(u64::from_be_bytes(raw[..8].try_into().unwrap())),
            index: u32::from_be_bytes(raw[8..12].try_into().unwrap()),
            response: Scalar::from_bytes(&raw[12..])?,
        })
    }
}

/// A signer holding its key share and single-use nonces per session.
pub struct Signer {
    keys: SignerKeys,
    pending: BTreeMap<SessionId, SigningNonces>,
    spent: BTreeSet<SessionId>,
}

impl Signer {
    pub fn new(keys: SignerKeys) -> Self {
        Self {
            keys,
            pending: BTreeMap::new(),
            spent: BTreeSet::new(),
        }
    }

    pub fn keys(&self) -> &SignerKeys {
        &self.keys
    }

    pub fn index(&self) -> u32 {
        self.keys.index
    }

    /// Round one: draws fresh nonces bound to `session`.
    pub fn commit<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        session: SessionId,
        rng: &mut R,
    ) -> Result<SigningCommitments, SignError> {
        if self.spent.contains(&session) || self.pending.contains_key(&session) {
            return Err(SignError::NonceReuse(session));
        }
        let hiding = Scalar::random_nonzero(rng);
        let binding = Scalar::random_nonzero(rng);
        let commitments = SigningCommitments {
            hiding: GroupElement::mul_base(&hiding),
            binding: GroupElement::mul_base(&binding),
        };
        self.pending.insert(
            session,
            SigningNonces {
                hiding,
                binding,
                commitments,
            },
        );
        Ok(commitments)
    }

    /// Round two: the partial signature on `message`. Consumes the nonces.
    pub fn sign(&mut self, session: &SigningSession, message: &Digest) -> Result<PartialSignature, SignError> {
        if *message != session.message {
            return Err(SignError::MessageMismatch);
        }
        if session.group_key != self.keys.group_key {
            return Err(SignError::KeyMismatch);
        }
        let index = self.keys.index;
        let Some(committed) = session.commitments.get(&index) else {
            return Err(SignError::NotParticipant(index));
        };
        if self.spent.contains(&session.id) {
            return Err(SignError::NonceReuse(session.id));
        }
        let nonces = self
            .pending
            .remove(&session.id)
            .ok_or(SignError::MissingNonces(session.id))?;
        self.spent.insert(session.id);
        if nonces.commitments != *committed {
            return Err(SignError::CommitmentMismatch(index));
        }

        let binding = session.binding_factors();
        let commitment = session.group_commitment(&binding);
        let c = challenge(&commitment, &session.group_key, message);
        let lambda = lagrange_at_zero::<Scalar>(index, &session.participants());
        let response = nonces.hiding + nonces.binding * binding[&index] + lambda * c * self.keys.signing_share;
        Ok(PartialSignature {
            session: session.id,
            index,
            response,
        })
    }
}

/// Aggregated signature `(R, z)`, a plain Schnorr signature under `VK`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdSignature {
    pub commitment: GroupElement,
    pub response: Scalar,
}

impl ThresholdSignature {
    pub const LEN: usize = 64;

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let mut out = [0u8; Self::LEN];
        out[..32].copy_from_slice(&self.commitment.to_bytes());
        out[32..].copy_from_slice(&self.response.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let raw: [u8; Self::LEN] = fixed(bytes)?;
        Ok(Self {
            commitment: GroupElement::from_bytes(&raw[..32])?,
            response: Scalar::from_bytes(&raw[32..])?,
        })
    }
}

crate::crypto::impl_hex_serde!(ThresholdSignature);

/// Checks every partial against its `vk_i` and combines them.
///
/// Requires at least `t` partials and one from every session participant.
/// A bad partial is rejected with the culprit's index.
pub fn ts_sign_agg(
    partials: &[PartialSignature],
    session: &SigningSession,
    public: &PublicKeyPackage,
) -> Result<ThresholdSignature, SignError> {
    if session.group_key != public.group_key {
        return Err(SignError::KeyMismatch);
    }
    let mut by_index = BTreeMap::new();
    for p in partials {
        if p.session != session.id {
            return Err(SignError::SessionMismatch);
        }
        if !session.commitments.contains_key(&p.index) {
            return Err(SignError::NotParticipant(p.index));
        }
        if by_index.insert(p.index, p.response).is_some() {
            return Err(SignError::DuplicatePartial(p.index));
        }
    }
    if by_index.len() < public.threshold as usize {
        return Err(SignError::Threshold {
            have: by_index.len(),
            need: public.threshold,
        });
    }
    if let Some(&missing) = session.commitments.keys().find(|i| !by_index.contains_key(i)) {
        return Err(SignError::MissingPartial(missing));
    }

    let binding = session.binding_factors();
    let commitment = session.group_commitment(&binding);
    let c = challenge(&commitment, &session.group_key, &session.message);
    let participants = session.participants();
    for (&i, z_i) in &by_index {
        let vk_i = public
            .verifying_shares
            .get(&i)
            .ok_or(SignError::NotParticipant(i))?;
        let commit = &session.commitments[&i];
        let lambda_c = lagrange_at_zero::<Scalar>(i, &participants) * c;
        let expected = commit.hiding + commit.binding * binding[&i] + vk_i * &lambda_c;
        if GroupElement::mul_base(z_i) != expected {
            return Err(SignError::InvalidShare { index: i });
        }
    }
    Ok(ThresholdSignature {
        commitment,
        response: by_index.values().copied().sum(),
    })
}

/// `g^z == R · VK^c` with `c = H(R, VK, msg)`.
pub fn ts_verify(signature: &ThresholdSignature, message: &Digest, group_key: &GroupElement) -> bool {
    let c = challenge(&signature.commitment, group_key, message);
    GroupElement::mul_base(&signature.response) == signature.commitment + group_key * &c
}
