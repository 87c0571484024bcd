use serde::{Deserialize, Serialize};

use super::SecAggError;
use crate::crypto::{hash_to_digest, Digest, EncodingError, Scalar, SCALAR_LEN};

const TAG_MODEL: &[u8] = b"fedpop/model";
// floor(log2 q)
const FIELD_BITS: u32 = 252;

/// Fixed-point encoding of reals into `Z_q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    /// Fractional bits `f`: resolution is `2^-f`.
    pub frac_bits: u32,
    /// Inputs are clamped to `[-clamp, clamp]`.
    pub clamp: f64,
    /// Largest number of encodings that may be summed without wraparound.
    pub max_contributors: u32,
}

impl FixedPoint {
    pub const DEFAULT_FRAC_BITS: u32 = 16;
    pub const DEFAULT_CLAMP: f64 = 1024.0;

    pub fn new(frac_bits: u32, clamp: f64, max_contributors: u32) -> Result<Self, SecAggError> {
        let encoding = Self {
            frac_bits,
            clamp,
            max_contributors,
        };
        encoding.validate()?;
        Ok(encoding)
    }

    pub fn with_contributors(max_contributors: u32) -> Result<Self, SecAggError> {
        Self::new(Self::DEFAULT_FRAC_BITS, Self::DEFAULT_CLAMP, max_contributors)
    }

    /// `f + ceil(log2 B) + ceil(log2 n) < log2(q) - 1`
    pub fn validate(&self) -> Result<(), SecAggError> {
        if !(self.clamp.is_finite() && self.clamp > 0.0) || self.max_contributors == 0 {
            return Err(SecAggError::Encoding(format!(
                "clamp must be positive and finite, contributors nonzero ({self:?})"
            )));
        }
        let clamp_bits = self.clamp.log2().ceil().max(0.0) as u32;
        let count_bits = 32 - (self.max_contributors - 1).leading_zeros();
        let needed = self.frac_bits + clamp_bits + count_bits;
        if needed >= FIELD_BITS - 1 {
            return Err(SecAggError::Encoding(format!(
                "{needed} bits of headroom exceed the field ({FIELD_BITS} bits)"
            )));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    /// Largest magnitude (in field units) a sum of `contributors` encodings can reach.
    fn bound(&self, contributors: u32) -> u128 {
        ((self.clamp * self.scale()).round() as u128) * contributors.max(1) as u128
    }
}

/// A model or update encoded coordinate-wise into `Z_q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector {
    coords: Vec<Scalar>,
    encoding: FixedPoint,
    contributors: u32,
}

impl ModelVector {
    pub fn from_coords(coords: Vec<Scalar>, encoding: FixedPoint, contributors: u32) -> Self {
        Self {
            coords,
            encoding,
            contributors,
        }
    }

    pub fn zeros(dimension: usize, encoding: FixedPoint) -> Self {
        Self::from_coords(vec![Scalar::ZERO; dimension], encoding, 0)
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Scalar] {
        &self.coords
    }

    pub fn encoding(&self) -> FixedPoint {
        self.encoding
    }

    /// Number of encoded updates summed into this vector.
    pub fn contributors(&self) -> u32 {
        self.contributors
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [Scalar] {
        &mut self.coords
    }

    /// Adds another vector coordinate-wise.
    pub fn accumulate(&mut self, other: &ModelVector) -> Result<(), SecAggError> {
        if other.dimension() != self.dimension() {
            return Err(SecAggError::Dimension {
                expected: self.dimension(),
                actual: other.dimension(),
            });
        }
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += *b;
        }
        self.contributors += other.contributors;
        Ok(())
    }

    /// Canonical bytes: 4-byte big-endian dimension, then each coordinate
    /// as a 32-byte big-endian field element.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.coords.len() * SCALAR_LEN);
        out.extend_from_slice(&(self.coords.len() as u32).to_be_bytes());
        for c in &self.coords {
            out.extend_from_slice(&c.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], encoding: FixedPoint, contributors: u32) -> Result<Self, EncodingError> {
        if bytes.len() < 4 {
            return Err(EncodingError::Truncated("model dimension"));
        }
        let dimension = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = &bytes[4..];
        if body.len() != dimension * SCALAR_LEN {
            return Err(EncodingError::Length {
                expected: 4 + dimension * SCALAR_LEN,
                actual: bytes.len(),
            });
        }
        let coords = body
            .chunks_exact(SCALAR_LEN)
            .map(Scalar::from_bytes)
            .collect::<Result<_, _>>()?;
        Ok(Self::from_coords(coords, encoding, contributors))
    }

    /// `H(M)` over the canonical serialization.
    pub fn digest(&self) -> Digest {
        model_digest(&self.to_bytes())
    }
}

/// `H(M)` from canonical model bytes.
pub fn model_digest(bytes: &[u8]) -> Digest {
    hash_to_digest(TAG_MODEL, &[bytes])
}

/// Encodes reals as `round(x * 2^f) mod q`, clamping to `[-B, B]`.
pub fn encode_fixed_point(values: &[f64], encoding: FixedPoint) -> Result<ModelVector, SecAggError> {
    encoding.validate()?;
    let scale = encoding.scale();
    let coords = values
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(SecAggError::Encoding(format!("non-finite input {x}")));
            }
            let scaled = (x.clamp(-encoding.clamp, encoding.clamp) * scale).round();
            let magnitude = Scalar::from_u128(scaled.abs() as u128);
            Ok(if scaled < 0.0 { -magnitude } else { magnitude })
        })
        .collect::<Result<_, _>>()?;
    Ok(ModelVector::from_coords(coords, encoding, 1))
}

/// Inverse of [`encode_fixed_point`] for sums of up to `contributors` encodings.
///
/// A coordinate outside `±contributors·B·2^f` means masks were not removed.
pub fn decode_fixed_point(vector: &ModelVector) -> Result<Vec<f64>, SecAggError> {
    let bound = vector.encoding.bound(vector.contributors);
    let scale = vector.encoding.scale();
    vector
        .coords
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let signed = match (c.to_u128(), (-*c).to_u128()) {
                (Some(v), _) if v <= bound => v as f64,
                (_, Some(v)) if v <= bound => -(v as f64),
                _ => return Err(SecAggError::Decode { coordinate: i }),
            };
            Ok(signed / scale)
        })
        .collect()
}
