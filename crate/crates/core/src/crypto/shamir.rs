//! Shamir secret sharing over a prime field.
//!
//! Share indices are the evaluation points `1..=n`; index 0 would be the
//! secret itself and is never issued.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PrimeField, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShamirError {
    #[error("invalid threshold: need 1 <= t <= n, got t={t}, n={n}")]
    InvalidThreshold { t: u32, n: u32 },
    #[error("{n} shares do not fit in the field")]
    TooManyShares { n: u32 },
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: u32 },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
}

/// One evaluation `(index, f(index))` of a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share<F> {
    pub index: u32,
    pub value: F,
}

pub type ShamirShare = Share<Scalar>;

/// Splits `secret` into `n` shares, any `t` of which reconstruct it.
pub fn shamir_share<F, R>(secret: F, t: u32, n: u32, rng: &mut R) -> Result<Vec<Share<F>>, ShamirError>
where
    F: PrimeField,
    R: RngCore + CryptoRng + ?Sized,
{
    check_params::<F>(t, n)?;
    let coefficients: Vec<F> = (1..t).map(|_| F::random(rng)).collect();
    share_with_coefficients(secret, &coefficients, n)
}

/// Evaluates `secret + a_1 x + ... + a_{t-1} x^{t-1}` at `1..=n`.
pub fn share_with_coefficients<F: PrimeField>(
    secret: F,
    coefficients: &[F],
    n: u32,
) -> Result<Vec<Share<F>>, ShamirError> {
    check_params::<F>(coefficients.len() as u32 + 1, n)?;
    Ok((1..=n)
        .map(|index| {
            let x = F::from_u64(index as u64);
            // Horner
            let value = coefficients
                .iter()
                .rev()
                .fold(F::zero(), |acc, &a| acc * x + a)
                * x
                + secret;
            Share { index, value }
        })
        .collect())
}

fn check_params<F: PrimeField>(t: u32, n: u32) -> Result<(), ShamirError> {
    if t == 0 || t > n {
        return Err(ShamirError::InvalidThreshold { t, n });
    }
    if !F::has_points(n as u64) {
        return Err(ShamirError::TooManyShares { n });
    }
    Ok(())
}

/// Lagrange basis coefficient for `index` at `x = 0` over `indices`.
pub fn lagrange_at_zero<F: PrimeField>(index: u32, indices: &[u32]) -> F {
    let xi = F::from_u64(index as u64);
    let (num, den) = indices
        .iter()
        .filter(|&&j| j != index)
        .fold((F::one(), F::one()), |(num, den), &j| {
            let xj = F::from_u64(j as u64);
            (num * xj, den * (xj - xi))
        });
    // Distinct nonzero indices make the denominator invertible.
    num * den.invert().expect("distinct indices")
}

/// Recovers the secret from at least `t` shares by interpolation at zero.
///
/// Only the first `t` shares are interpolated; all indices must be distinct.
pub fn shamir_reconstruct<F: PrimeField>(shares: &[Share<F>], t: u32) -> Result<F, ShamirError> {
    let mut seen = BTreeSet::new();
    for share in shares {
        if share.index == 0 {
            return Err(ShamirError::ZeroIndex);
        }
        if !seen.insert(share.index) {
            return Err(ShamirError::DuplicateIndex(share.index));
        }
    }
    if t == 0 || shares.len() < t as usize {
        return Err(ShamirError::InsufficientShares {
            have: shares.len(),
            need: t,
        });
    }
    let used = &shares[..t as usize];
    let indices: Vec<u32> = used.iter().map(|s| s.index).collect();
    Ok(used
        .iter()
        .fold(F::zero(), |acc, s| acc + lagrange_at_zero::<F>(s.index, &indices) * s.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Fp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type F97 = Fp<97>;
    type F13 = Fp<13>;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn degree_zero_sharing_is_constant() {
        let shares = shamir_share(Scalar::from_u64(5), 1, 3, &mut rng()).unwrap();
        assert!(shares.iter().all(|s| s.value == Scalar::from_u64(5)));
        assert_eq!(shares.iter().map(|s| s.index).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn fixed_coefficient_sharing_over_f97() {
        let shares = share_with_coefficients(F97::new(5), &[F97::new(3)], 3).unwrap();
        let pairs: Vec<_> = shares.iter().map(|s| (s.index, s.value.value())).collect();
        assert_eq!(pairs, [(1, 8), (2, 11), (3, 14)]);
    }

    #[test]
    fn zero_polynomial() {
        let zero = F97::zero();
        let shares = share_with_coefficients(zero, &[zero, zero], 3).unwrap();
        assert!(shares.iter().all(|s| s.value == zero));
    }

    #[test]
    fn reconstruct_by_hand_over_f97() {
        // lambda_1 = 2/(2-1) = 2, lambda_2 = 1/(1-2) = -1: 2*8 - 11 = 5
        let shares = [
            Share { index: 1, value: F97::new(8) },
            Share { index: 2, value: F97::new(11) },
        ];
        assert_eq!(shamir_reconstruct(&shares, 2).unwrap(), F97::new(5));
    }

    #[test]
    fn threshold_boundary_and_parameter_errors() {
        let shares = shamir_share(Scalar::from_u64(9), 2, 3, &mut rng()).unwrap();
        assert_eq!(
            shamir_reconstruct(&shares[..1], 2),
            Err(ShamirError::InsufficientShares { have: 1, need: 2 })
        );
        assert_eq!(
            shamir_reconstruct(&[shares[0], shares[0]], 2),
            Err(ShamirError::DuplicateIndex(1))
        );
        assert_eq!(
            shamir_share(Scalar::ONE, 4, 3, &mut rng()),
            Err(ShamirError::InvalidThreshold { t: 4, n: 3 })
        );
        assert_eq!(
            shamir_share(F13::one(), 2, 13, &mut rng()),
            Err(ShamirError::TooManyShares { n: 13 })
        );
    }

    fn subsets(n: u32, k: usize) -> Vec<Vec<u32>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (1..=n).filter(|i| m & (1 << (i - 1)) != 0).collect())
            .collect()
    }

    #[test]
    fn every_t_subset_reconstructs() {
        let mut rng = rng();
        for n in 1..=6u32 {
            for t in 1..=n {
                let secret = Scalar::random(&mut rng);
                let shares = shamir_share(secret, t, n, &mut rng).unwrap();
                for subset in subsets(n, t as usize) {
                    let picked: Vec<_> = subset.iter().map(|&i| shares[i as usize - 1]).collect();
                    assert_eq!(shamir_reconstruct(&picked, t).unwrap(), secret);
                }
            }
        }
    }

    #[test]
    fn fewer_than_t_shares_hide_the_secret_over_f13() {
        let mut rng = rng();
        for (t, n) in [(2u32, 3u32), (3, 4), (3, 3)] {
            let shares = shamir_share(F13::new(7), t, n, &mut rng).unwrap();
            for subset in subsets(n, t as usize - 1) {
                let seen: Vec<_> = subset.iter().map(|&i| shares[i as usize - 1]).collect();
                for candidate in 0..13 {
                    // Enumerate every polynomial with constant term `candidate`.
                    let degree = t as usize - 1;
                    let consistent = (0..13u64.pow(degree as u32)).any(|code| {
                        let coeffs: Vec<F13> = (0..degree)
                            .map(|k| F13::new(code / 13u64.pow(k as u32) % 13))
                            .collect();
                        let eval = share_with_coefficients(F13::new(candidate), &coeffs, n).unwrap();
                        seen.iter().all(|s| eval[s.index as usize - 1] == *s)
                    });
                    assert!(consistent, "t={t} n={n} subset={subset:?} candidate={candidate}");
                }
            }
        }
    }
}
