//! Wire messages and their binary payload encodings.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, EncodingError, GroupElement, Scalar, Share};
use crate::oprf::OprfKey;
use crate::secagg::{FixedPoint, ModelVector, RecoveryShares};
use crate::tsig::{PartialSignature, SessionId, SigningCommitments, ThresholdSignature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    ModelParams,
    MaskedUpdate,
    NeighborStatus,
    RecoveryShares,
    AggregateModel,
    SigningCommitment,
    SigningPackage,
    PartialSignature,
    WitnessShare,
    Finalize,
    Abort,
    ModelHash,
    Blind,
    Response,
    Decision,
}

/// Protocol step a message belongs to; used to cut off dropped clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Params,
    Protect,
    Recover,
    Sign,
    Prove,
}

impl MessageType {
    pub fn phase(self) -> Phase {
        use MessageType::*;
        match self {
            ModelParams | Abort => Phase::Params,
            MaskedUpdate => Phase::Protect,
            NeighborStatus | RecoveryShares => Phase::Recover,
            AggregateModel | SigningCommitment | SigningPackage | PartialSignature | WitnessShare | Finalize => {
                Phase::Sign
            }
            ModelHash | Blind | Response | Decision => Phase::Prove,
        }
    }
}

/// `{round, type, payload}` with the payload hex-encoded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub round: u64,
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

impl Envelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EncodingError> {
        serde_json::from_str(text).map_err(|e| EncodingError::Malformed(e.to_string()))
    }

    /// Bytes this envelope occupies on the wire.
    pub fn wire_len(&self) -> usize {
        self.to_json().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    ModelParams(Vec<f64>),
    MaskedUpdate(ModelVector),
    NeighborStatus {
        online: BTreeSet<u32>,
        dropped: BTreeSet<u32>,
    },
    RecoveryShares(RecoveryShares),
    AggregateModel {
        session: SessionId,
        model: ModelVector,
    },
    SigningCommitment(SigningCommitments),
    SigningPackage {
        session: SessionId,
        message: Digest,
        commitments: BTreeMap<u32, SigningCommitments>,
    },
    PartialSignature(PartialSignature),
    WitnessShare(GroupElement),
    Finalize {
        signature: ThresholdSignature,
        key: OprfKey,
    },
    Abort(String),
    ModelHash(Digest),
    Blind(GroupElement),
    Response {
        signature: ThresholdSignature,
        beta: GroupElement,
    },
    Decision(bool),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }

    fn set(&mut self, ids: &BTreeSet<u32>) -> &mut Self {
        self.u32(ids.len() as u32);
        ids.iter().for_each(|&i| {
            self.u32(i);
        });
        self
    }

    fn shares(&mut self, shares: &BTreeMap<u32, Share<Scalar>>) -> &mut Self {
        self.u32(shares.len() as u32);
        for (&owner, share) in shares {
            self.u32(owner).u32(share.index).bytes(&share.value.to_bytes());
        }
        self
    }
}

struct Reader<'a> {
    rest: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { rest: bytes, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        if self.rest.len() < n {
            return Err(EncodingError::Truncated(self.what));
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, EncodingError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EncodingError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, item_len: usize) -> Result<usize, EncodingError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_len) > self.rest.len() {
            return Err(EncodingError::Truncated(self.what));
        }
        Ok(n)
    }

    fn set(&mut self) -> Result<BTreeSet<u32>, EncodingError> {
        let n = self.count(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    fn shares(&mut self) -> Result<BTreeMap<u32, Share<Scalar>>, EncodingError> {
        let n = self.count(40)?;
        (0..n)
            .map(|_| {
                let owner = self.u32()?;
                let index = self.u32()?;
                let value = Scalar::from_bytes(self.take(32)?)?;
                Ok((owner, Share { index, value }))
            })
            .collect()
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.rest)
    }

    fn finish(self) -> Result<(), EncodingError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(EncodingError::Malformed(format!("{} trailing bytes in {}", self.rest.len(), self.what)))
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::ModelParams(_) => MessageType::ModelParams,
            Message::MaskedUpdate(_) => MessageType::MaskedUpdate,
            Message::NeighborStatus { .. } => MessageType::NeighborStatus,
            Message::RecoveryShares(_) => MessageType::RecoveryShares,
            Message::AggregateModel { .. } => MessageType::AggregateModel,
            Message::SigningCommitment(_) => MessageType::SigningCommitment,
            Message::SigningPackage { .. } => MessageType::SigningPackage,
            Message::PartialSignature(_) => MessageType::PartialSignature,
            Message::WitnessShare(_) => MessageType::WitnessShare,
            Message::Finalize { .. } => MessageType::Finalize,
            Message::Abort(_) => MessageType::Abort,
            Message::ModelHash(_) => MessageType::ModelHash,
            Message::Blind(_) => MessageType::Blind,
            Message::Response { .. } => MessageType::Response,
            Message::Decision(_) => MessageType::Decision,
        }
    }

    pub fn encode(&self, round: u64) -> Envelope {
        let mut w = Writer(Vec::new());
        match self {
            Message::ModelParams(values) => {
                w.u32(values.len() as u32);
                values.iter().for_each(|v| {
                    w.bytes(&v.to_be_bytes());
                });
            }
            Message::MaskedUpdate(model) => {
                w.bytes(&model.to_bytes());
            }
            Message::NeighborStatus { online, dropped } => {
                w.set(online).set(dropped);
            }
            Message::RecoveryShares(r) => {
                w.u32(r.holder).shares(&r.self_mask).shares(&r.dh_key);
            }
            Message::AggregateModel { session, model } => {
                w.u64(session.0).u32(model.contributors()).bytes(&model.to_bytes());
            }
            Message::SigningCommitment(c) => {
                w.bytes(&c.to_bytes());
            }
            Message::SigningPackage {
                session,
                message,
                commitments,
            } => {
                w.u64(session.0).bytes(message.as_bytes()).u32(commitments.len() as u32);
                for (&i, c) in commitments {
                    w.u32(i).bytes(&c.to_bytes());
                }
            }
            Message::PartialSignature(p) => {
                w.bytes(&p.to_bytes());
            }
            Message::WitnessShare(e) | Message::Blind(e) => {
                w.bytes(&e.to_bytes());
            }
            Message::Finalize { signature, key } => {
                w.bytes(&signature.to_bytes()).bytes(&key.to_bytes());
            }
            Message::Abort(reason) => {
                w.bytes(reason.as_bytes());
            }
            Message::ModelHash(d) => {
                w.bytes(d.as_bytes());
            }
            Message::Response { signature, beta } => {
                w.bytes(&signature.to_bytes()).bytes(&beta.to_bytes());
            }
            Message::Decision(accept) => {
                w.bytes(&[*accept as u8]);
            }
        }
        Envelope {
            round,
            kind: self.kind(),
            payload: w.0,
        }
    }

    /// Parses an envelope. `encoding` is needed only for model-carrying messages.
    pub fn decode(envelope: &Envelope, encoding: Option<FixedPoint>) -> Result<Self, EncodingError> {
        let need_encoding = || encoding.ok_or_else(|| EncodingError::Malformed("model message without encoding".into()));
        let mut r = Reader::new(&envelope.payload, "message payload");
        let message = match envelope.kind {
            MessageType::ModelParams => {
                let n = r.count(8)?;
                let values = (0..n)
                    .map(|_| Ok(f64::from_be_bytes(r.take(8)?.try_into().unwrap())))
                    .collect::<Result<_, EncodingError>>()?;
                Message::ModelParams(values)
            }
            MessageType::MaskedUpdate => Message::MaskedUpdate(ModelVector::from_bytes(r.rest(), need_encoding()?, 1)?),
            MessageType::NeighborStatus => Message::NeighborStatus {
                online: r.set()?,
                dropped: r.set()?,
            },
            MessageType::RecoveryShares => Message::RecoveryShares(RecoveryShares {
                holder: r.u32()?,
                self_mask: r.shares()?,
                dh_key: r.shares()?,
            }),
            MessageType::AggregateModel => {
                let session = SessionId(r.u64()?);
                let contributors = r.u32()?;
                let model = ModelVector::from_bytes(r.rest(), need_encoding()?, contributors)?;
                Message::AggregateModel { session, model }
            }
            MessageType::SigningCommitment => Message::SigningCommitment(SigningCommitments::from_bytes(r.rest())?),
            MessageType::SigningPackage => {
                let session = SessionId(r.u64()?);
                let message = Digest::from_bytes(r.take(32)?)?;
                let n = r.count(68)?;
                let commitments = (0..n)
                    .map(|_| Ok((r.u32()?, SigningCommitments::from_bytes(r.take(64)?)?)))
                    .collect::<Result<_, EncodingError>>()?;
                Message::SigningPackage {
                    session,
                    message,
                    commitments,
                }
            }
            MessageType::PartialSignature => Message::PartialSignature(PartialSignature::from_bytes(r.rest())?),
            MessageType::WitnessShare => Message::WitnessShare(GroupElement::from_bytes(r.rest())?),
            MessageType::Finalize => {
                let signature = ThresholdSignature::from_bytes(r.take(64)?)?;
                let key = OprfKey::from_bytes(r.take(32)?).map_err(|e| EncodingError::Malformed(e.to_string()))?;
                Message::Finalize { signature, key }
            }
            MessageType::Abort => Message::Abort(String::from_utf8_lossy(r.rest()).into_owned()),
            MessageType::ModelHash => Message::ModelHash(Digest::from_bytes(r.rest())?),
            MessageType::Blind => Message::Blind(GroupElement::from_bytes(r.rest())?),
            MessageType::Response => Message::Response {
                signature: ThresholdSignature::from_bytes(r.take(64)?)?,
                beta: GroupElement::from_bytes(r.take(32)?)?,
            },
            MessageType::Decision => match r.take(1)?[0] {
                0 => Message::Decision(false),
                1 => Message::Decision(true),
                b => return Err(EncodingError::Malformed(format!("decision byte {b}"))),
            },
        };
        r.finish()?;
        Ok(message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secagg::encode_fixed_point;

    #[test]
    fn envelope_json_shape() {
        let env = Message::Decision(true).encode(7);
        assert_eq!(env.to_json(), r#"{"round":7,"type":"decision","payload":"01"}"#);
        assert_eq!(Envelope::from_json(&env.to_json()).unwrap(), env);
    }

    #[test]
    fn roundtrips() {
        let fp = FixedPoint::with_contributors(4).unwrap();
        let model = encode_fixed_point(&[1.0, -2.5], fp).unwrap();
        let status = Message::NeighborStatus {
            online: [1, 2].into(),
            dropped: [3].into(),
        };
        let recovery = Message::RecoveryShares(RecoveryShares {
            holder: 2,
            self_mask: [(1, Share { index: 2, value: Scalar::from_u64(5) })].into(),
            dh_key: BTreeMap::new(),
        });
        for m in [
            Message::ModelParams(vec![0.5, -1.0]),
            Message::MaskedUpdate(model.clone()),
            status,
            recovery,
            Message::Abort("threshold".into()),
            Message::Decision(false),
        ] {
            let env = m.encode(3);
            assert_eq!(Message::decode(&env, Some(fp)).unwrap(), m);
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let mut env = Message::ModelHash(Digest([1; 32])).encode(1);
        env.payload.pop();
        assert!(Message::decode(&env, None).is_err());
        let mut env = Message::Decision(true).encode(1);
        env.payload.push(0);
        assert!(Message::decode(&env, None).is_err());
        let env = Envelope {
            round: 1,
            kind: MessageType::NeighborStatus,
            payload: vec![0xff, 0xff, 0xff, 0xff],
        };
        assert!(Message::decode(&env, None).is_err());
    }

    #[test]
    fn phases_are_ordered_along_the_round() {
        assert!(MessageType::MaskedUpdate.phase() < MessageType::RecoveryShares.phase());
        assert!(MessageType::RecoveryShares.phase() < MessageType::SigningCommitment.phase());
    }
}
