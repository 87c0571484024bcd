use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use super::{Digest, Scalar};

const TAG_PRG: &[u8] = b"fedpop/prg";

/// Expands a seed into `dimension` field elements.
///
/// SHAKE256 keyed by the seed; each element is a wide reduction of 64 output
/// bytes, so shorter expansions are prefixes of longer ones.
pub fn prg_expand(seed: &Digest, dimension: usize) -> Vec<Scalar> {
    let mut xof = Shake256::default();
    xof.update(&(TAG_PRG.len() as u64).to_be_bytes());
    xof.update(TAG_PRG);
    xof.update(seed.as_bytes());
    let mut reader = xof.finalize_xof();
    let mut block = [0u8; 64];
    (0..dimension)
        .map(|_| {
            reader.read(&mut block);
            Scalar::from_wide_bytes(&block)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_prefix_consistent() {
        let seed = Digest([3u8; 32]);
        let four = prg_expand(&seed, 4);
        assert_eq!(four, prg_expand(&seed, 4));
        assert_eq!(prg_expand(&seed, 2), four[..2]);
    }

    #[test]
    fn distinct_seeds_give_distinct_streams() {
        let a = prg_expand(&Digest([1u8; 32]), 4);
        let b = prg_expand(&Digest([2u8; 32]), 4);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }
}
