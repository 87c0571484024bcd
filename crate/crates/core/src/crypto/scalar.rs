use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use curve25519_dalek::scalar::Scalar as DalekScalar;
use rand::{CryptoRng, RngCore};

use super::{fixed, impl_hex_serde, EncodingError, PrimeField};

/// Width of a serialized scalar.
pub const SCALAR_LEN: usize = 32;

/// An element of `Z_q`, always reduced.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Scalar(pub(crate) DalekScalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(DalekScalar::ZERO);
    pub const ONE: Scalar = Scalar(DalekScalar::ONE);

    pub fn from_u64(value: u64) -> Self {
        Self(DalekScalar::from(value))
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self(DalekScalar::from_bytes_mod_order_wide(&wide))
    }

    /// Uniform over `Z_q \ {0}`.
    pub fn random_nonzero<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Reduces 64 uniformly distributed bytes into `Z_q`.
    pub fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        Self(DalekScalar::from_bytes_mod_order_wide(bytes))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == DalekScalar::ZERO
    }

    pub fn invert(&self) -> Option<Self> {
        (!self.is_zero()).then(|| Self(self.0.invert()))
    }

    /// Big-endian fixed-width encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        let mut out = self.0.to_bytes();
        out.reverse();
        out
    }

    /// Parses a big-endian encoding, rejecting values `>= q`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut le: [u8; SCALAR_LEN] = fixed(bytes)?;
        le.reverse();
        Option::from(DalekScalar::from_canonical_bytes(le))
            .map(Self)
            .ok_or(EncodingError::NonCanonicalScalar)
    }

    /// Value as an unsigned integer when it fits in 128 bits.
    pub(crate) fn to_u128(self) -> Option<u128> {
        let le = self.0.to_bytes();
        if le[16..].iter().any(|&b| b != 0) {
            return None;
        }
        Some(u128::from_le_bytes(le[..16].try_into().unwrap()))
    }

    pub(crate) fn from_u128(value: u128) -> Self {
        let mut le = [0u8; 32];
        le[..16].copy_from_slice(&value.to_le_bytes());
        Self(DalekScalar::from_bytes_mod_order(le))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_bytes()))
    }
}

impl_hex_serde!(Scalar);

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Scalar {
    fn sub_assign(&mut self, rhs: Scalar) {
        self.0 -= rhs.0;
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |acc, s| acc + s)
    }
}

impl PrimeField for Scalar {
    fn zero() -> Self {
        Scalar::ZERO
    }

    fn one() -> Self {
        Scalar::ONE
    }

    fn from_u64(value: u64) -> Self {
        Scalar::from_u64(value)
    }

    fn invert(&self) -> Option<Self> {
        Scalar::invert(self)
    }

    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Scalar::random(rng)
    }

    fn has_points(_n: u64) -> bool {
        // q > 2^252
        true
    }
}
