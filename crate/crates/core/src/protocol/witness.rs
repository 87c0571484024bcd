//! Group witness built from the signers' own keys instead of server randomness.
//!
//! Each online signer sends `K_i = vk_i^{r_i}`; the server hashes
//! `P = Π K_i` to a nonzero scalar and uses it as `K`.

use std::collections::{BTreeMap, BTreeSet};

use super::ProtocolError;
use crate::crypto::{hash_to_scalar, GroupElement, Scalar};
use crate::oprf::OprfKey;
use crate::tsig::SignerKeys;

const TAG_ALT_K: &[u8] = b"fedpop/altK";

/// `K_i = vk_i^{r_i}`.
pub fn witness_contribution(keys: &SignerKeys, r: &Scalar) -> GroupElement {
    &keys.verifying_share * r
}

pub fn alt_group_witness(
    contributions: &BTreeMap<u32, GroupElement>,
    online: &BTreeSet<u32>,
) -> Result<OprfKey, ProtocolError> {
    if let Some(&missing) = online.iter().find(|i| !contributions.contains_key(i)) {
        return Err(ProtocolError::MissingWitness(missing));
    }
    let product = online
        .iter()
        .map(|i| contributions[i])
        .fold(GroupElement::identity(), |acc, k| acc + k);
    let mut counter: u32 = 0;
    loop {
        let k = hash_to_scalar(TAG_ALT_K, &[&product.to_bytes(), &counter.to_be_bytes()]);
        if let Ok(key) = OprfKey::new(k) {
            return Ok(key);
        }
        counter += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsig::ts_keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn unit_exponent_gives_the_verifying_share() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, keys) = ts_keygen(1, 1, &mut rng).unwrap();
        assert_eq!(witness_contribution(&keys[0], &Scalar::ONE), keys[0].verifying_share);
    }

    #[test]
    fn order_does_not_matter_and_missing_is_reported() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (_, keys) = ts_keygen(2, 3, &mut rng).unwrap();
        let shares: Vec<(u32, GroupElement)> = keys
            .iter()
            .map(|k| (k.index, witness_contribution(k, &Scalar::random_nonzero(&mut rng))))
            .collect();
        let online: BTreeSet<u32> = [1, 2, 3].into();
        let forward: BTreeMap<_, _> = shares.iter().copied().collect();
        let backward: BTreeMap<_, _> = shares.iter().rev().copied().collect();
        assert_eq!(
            alt_group_witness(&forward, &online).unwrap(),
            alt_group_witness(&backward, &online).unwrap()
        );
        let partial: BTreeMap<_, _> = shares[..2].iter().copied().collect();
        assert_eq!(alt_group_witness(&partial, &online), Err(ProtocolError::MissingWitness(3)));
    }
}
