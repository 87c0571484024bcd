use std::fmt;
use std::ops::{Add, Mul, Sub};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::traits::{Identity, MultiscalarMul};

use super::{fixed, impl_hex_serde, EncodingError, Scalar, SCALAR_LEN};

// 2^252 + 27742317777372353535851937790883648493
const ORDER_BE: [u8; SCALAR_LEN] = [
    0x10, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
    0x14, 0xde, 0xf9, 0xde, 0xa2, 0xf7, 0x9c, 0xd6, 0x58, 0x12, 0x63, 0x1a, 0x5c, 0xf5, 0xd3, 0xed,
];

/// Published description of the group used throughout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub name: &'static str,
    /// Group order `q`, big-endian.
    pub order: [u8; SCALAR_LEN],
    pub generator: GroupElement,
    pub element_len: usize,
    pub scalar_len: usize,
}

impl GroupParams {
    pub fn ristretto255() -> Self {
        Self {
            name: "ristretto255",
            order: ORDER_BE,
            generator: GroupElement::generator(),
            element_len: GroupElement::LEN,
            scalar_len: SCALAR_LEN,
        }
    }
}

/// An element of the prime-order group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub const LEN: usize = 32;

    pub fn generator() -> Self {
        Self(RISTRETTO_BASEPOINT_POINT)
    }

    pub fn identity() -> Self {
        Self(RistrettoPoint::identity())
    }

    /// `g^s`.
    pub fn mul_base(s: &Scalar) -> Self {
        Self(RISTRETTO_BASEPOINT_POINT * s.0)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    /// `Σ s_i · P_i`, variable time (public inputs only).
    pub fn multiscalar_mul<'a, I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (&'a Scalar, &'a GroupElement)>,
    {
        let (scalars, points): (Vec<_>, Vec<_>) = terms.into_iter().map(|(s, p)| (s.0, p.0)).unzip();
        Self(RistrettoPoint::multiscalar_mul(scalars, points))
    }

    /// Canonical compressed encoding.
    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        self.0.compress().to_bytes()
    }

    /// Decodes a canonical encoding; anything outside the group is rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let raw: [u8; Self::LEN] = fixed(bytes)?;
        CompressedRistretto(raw)
            .decompress()
            .map(Self)
            .ok_or(EncodingError::InvalidGroupElement)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.to_bytes()))
    }
}

impl_hex_serde!(GroupElement);

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

impl Mul<&Scalar> for &GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: &Scalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Mul<Scalar> for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: Scalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}
