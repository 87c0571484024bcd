//! Group arithmetic, hashing, Shamir sharing and mask expansion.
//!
//! The prime-order group is ristretto255: a group of order
//! `q = 2^252 + 27742317777372353535851937790883648493` with canonical
//! 32-byte compressed encodings. Scalars are serialized big-endian.

mod field;
mod group;
mod hash;
mod prg;
mod scalar;
pub mod shamir;

pub use field::{Fp, PrimeField};
pub use group::{GroupElement, GroupParams};
pub use hash::{hash_to_digest, hash_to_group, hash_to_scalar, Digest, DIGEST_LEN};
pub use prg::prg_expand;
pub use scalar::{Scalar, SCALAR_LEN};
pub use shamir::{shamir_reconstruct, shamir_share, ShamirError, ShamirShare, Share};

use thiserror::Error;

/// Failure to decode a wire or file encoding.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("scalar encoding is not reduced modulo the group order")]
    NonCanonicalScalar,
    #[error("bytes do not encode an element of the group")]
    InvalidGroupElement,
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("truncated message: {0}")]
    Truncated(&'static str),
    #[error("malformed message: {0}")]
    Malformed(String),
}

pub(crate) fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], EncodingError> {
    bytes.try_into().map_err(|_| EncodingError::Length {
        expected: N,
        actual: bytes.len(),
    })
}

/// Implements hex-string serde for a type with `to_bytes`/`from_bytes`.
macro_rules! impl_hex_serde {
    ($ty:ty) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.to_bytes()))
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                let bytes = hex::decode(text.as_ref()).map_err(serde::de::Error::custom)?;
                <$ty>::from_bytes(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use impl_hex_serde;
