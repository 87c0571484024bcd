use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{CryptoRng, Rng, RngCore};

/// Arithmetic needed by Shamir sharing and Lagrange interpolation.
pub trait PrimeField:
    Copy
    + Debug
    + Eq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(value: u64) -> Self;
    /// Multiplicative inverse, `None` for zero.
    fn invert(&self) -> Option<Self>;
    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self;
    /// True when `1..=n` are distinct nonzero field elements, i.e. `n < q`.
    fn has_points(n: u64) -> bool;
}

/// Integers modulo a small prime `P`.
///
/// Used for exhaustive checks over toy fields; `P` must be prime and below
/// `2^32`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fp<const P: u64>(u64);

impl<const P: u64> Fp<P> {
    pub fn new(value: u64) -> Self {
        Self(value % P)
    }

    pub fn value(&self) -> u64 {
        self.0
    }

    fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self(1 % P);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self((self.0 + rhs.0) % P)
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self((self.0 + P - rhs.0) % P)
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(((self.0 as u128 * rhs.0 as u128) % P as u128) as u64)
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    fn neg(self) -> Self {
        Self((P - self.0) % P)
    }
}

impl<const P: u64> PrimeField for Fp<P> {
    fn zero() -> Self {
        Self(0)
    }

    fn one() -> Self {
        Self(1 % P)
    }

    fn from_u64(value: u64) -> Self {
        Self::new(value)
    }

    fn invert(&self) -> Option<Self> {
        // Fermat: a^(P-2)
        (self.0 != 0).then(|| self.pow(P - 2))
    }

    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen_range(0..P))
    }

    fn has_points(n: u64) -> bool {
        n < P
    }
}
