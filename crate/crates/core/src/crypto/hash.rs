use std::fmt;

use curve25519_dalek::ristretto::RistrettoPoint;
use sha2::{Digest as _, Sha256, Sha512};

use super::{fixed, impl_hex_serde, EncodingError, GroupElement, Scalar};

pub const DIGEST_LEN: usize = 32;

const TAG_H1: &[u8] = b"fedpop/H1";

/// A 256-bit hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn to_bytes(&self) -> [u8; DIGEST_LEN] {
        self.0
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        fixed(bytes).map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

impl_hex_serde!(Digest);

fn absorb_framed<H: sha2::Digest>(hasher: &mut H, tag: &[u8], parts: &[&[u8]]) {
    hasher.update((tag.len() as u64).to_be_bytes());
    hasher.update(tag);
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
}

/// Domain-separated SHA-256 over length-prefixed parts.
pub fn hash_to_digest(tag: &[u8], parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    absorb_framed(&mut hasher, tag, parts);
    Digest(hasher.finalize().into())
}

/// Domain-separated hash into `Z_q` (SHA-512, wide reduction).
pub fn hash_to_scalar(tag: &[u8], parts: &[&[u8]]) -> Scalar {
    let mut hasher = Sha512::new();
    absorb_framed(&mut hasher, tag, parts);
    Scalar::from_wide_bytes(&hasher.finalize().into())
}

/// Hashes arbitrary bytes onto the group. Never returns the identity.
pub fn hash_to_group(input: &[u8]) -> GroupElement {
    let mut counter: u32 = 0;
    loop {
        let mut hasher = Sha512::new();
        absorb_framed(&mut hasher, TAG_H1, &[input, &counter.to_be_bytes()]);
        let point = GroupElement(RistrettoPoint::from_uniform_bytes(&hasher.finalize().into()));
        if !point.is_identity() {
            return point;
        }
        counter += 1;
    }
}
