use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::witness::{alt_group_witness, witness_contribution};
use super::{ClientKeyMaterial, GlobalToken, Message, MessageType, ProofBundle, ProtocolError, ServerKeyMaterial};
use crate::crypto::{Digest, GroupElement, Scalar};
use crate::oprf::OprfKey;
use crate::secagg::{encode_fixed_point, FixedPoint, ModelVector, SaServerState, SecAggError};
use crate::sim::{run_round, Address, DropoutSchedule, Outbox, Party, SimError, Transcript, Transport};
use crate::trainer::Trainer;
use crate::tsig::{ts_sign_agg, PartialSignature, SessionId, SignError, Signer, SigningCommitments, SigningSession};

fn unexpected(kind: MessageType, from: Address) -> ProtocolError {
    ProtocolError::Unexpected {
        kind,
        from: from.to_string(),
    }
}

fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *acc += start.elapsed();
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClientTimings {
    /// Local training plus masking.
    pub sa_train: Duration,
    /// Nonce commitment plus partial signing.
    pub ts_sign: Duration,
}

pub struct ClientParty {
    keys: ClientKeyMaterial,
    signer: Signer,
    trainer: Arc<dyn Trainer>,
    data_seed: u64,
    alt_witness: bool,
    retain_model: bool,
    rng: ChaCha20Rng,
    model_digest: Option<Digest>,
    model: Option<ModelVector>,
    bundle: Option<ProofBundle>,
    aborted: Option<String>,
    timings: ClientTimings,
}

impl ClientParty {
    pub fn new(keys: ClientKeyMaterial, trainer: Arc<dyn Trainer>, rng_seed: u64) -> Self {
        let data_seed = keys.index() as u64;
        Self {
            signer: Signer::new(keys.signer.clone()),
            keys,
            trainer,
            data_seed,
            alt_witness: false,
            retain_model: false,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
            model_digest: None,
            model: None,
            bundle: None,
            aborted: None,
            timings: ClientTimings::default(),
        }
    }

    /// Seed identifying this client's local data (defaults to its index).
    pub fn with_data_seed(mut self, seed: u64) -> Self {
        self.data_seed = seed;
        self
    }

    pub fn with_alt_witness(mut self, on: bool) -> Self {
        self.alt_witness = on;
        self
    }

    /// Keep `M` alongside `H(M)`, for debugging.
    pub fn retaining_model(mut self, on: bool) -> Self {
        self.retain_model = on;
        self
    }

    pub fn index(&self) -> u32 {
        self.keys.index()
    }

    pub fn bundle(&self) -> Option<&ProofBundle> {
        self.bundle.as_ref()
    }

    pub fn model(&self) -> Option<&ModelVector> {
        self.model.as_ref()
    }

    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    pub fn timings(&self) -> ClientTimings {
        self.timings
    }

    fn round(&self) -> u64 {
        self.keys.round
    }

    fn send(&self, out: &mut Outbox, message: Message) {
        out.send(Address::Server, message.encode(self.round()));
    }
}

impl Party for ClientParty {
    fn address(&self) -> Address {
        Address::Client(self.index())
    }

    fn start(&mut self, _out: &mut Outbox) -> Result<(), ProtocolError> {
        Ok(())
    }

    fn handle(&mut self, from: Address, envelope: &crate::protocol::Envelope, out: &mut Outbox) -> Result<(), ProtocolError> {
        if from != Address::Server || envelope.round != self.round() {
            return Err(unexpected(envelope.kind, from));
        }
        let encoding = self.keys.sa.encoding();
        match Message::decode(envelope, Some(encoding))? {
            Message::ModelParams(params) => {
                let round = self.round();
                let mut timings = self.timings;
                let masked = timed(&mut timings.sa_train, || {
                    let update = self.trainer.train(&params, self.data_seed);
                    let encoded = encode_fixed_point(&update, encoding)?;
                    self.keys.sa.protect(round, &encoded)
                })?;
                self.timings = timings;
                self.send(out, Message::MaskedUpdate(masked));
            }
            Message::NeighborStatus { online, dropped } => {
                let shares = self.keys.sa.recovery_shares(&online, &dropped)?;
                self.send(out, Message::RecoveryShares(shares));
            }
            Message::AggregateModel { session, model } => {
                self.model_digest = Some(model.digest());
                if self.retain_model {
                    self.model = Some(model);
                }
                let mut timings = self.timings;
                let commitments = timed(&mut timings.ts_sign, || self.signer.commit(session, &mut self.rng))?;
                self.timings = timings;
                self.send(out, Message::SigningCommitment(commitments));
            }
            Message::SigningPackage {
                session,
                message,
                commitments,
            } => {
                let digest = self.model_digest.ok_or_else(|| unexpected(envelope.kind, from))?;
                let group_key = self.keys.signer.group_key;
                let mut timings = self.timings;
                let partial = timed(&mut timings.ts_sign, || {
                    let session = SigningSession::new(session, message, group_key, commitments)?;
                    self.signer.sign(&session, &digest)
                })?;
                self.timings = timings;
                self.send(out, Message::PartialSignature(partial));
                if self.alt_witness {
                    let r = Scalar::random_nonzero(&mut self.rng);
                    let share = witness_contribution(&self.keys.signer, &r);
                    self.send(out, Message::WitnessShare(share));
                }
            }
            Message::Finalize { signature, key } => {
                let digest = self.model_digest.ok_or_else(|| unexpected(envelope.kind, from))?;
                match ProofBundle::new(self.round(), digest, signature, key, &self.keys.signer.group_key) {
                    Ok(bundle) => self.bundle = Some(bundle),
                    Err(e) => self.aborted = Some(e.to_string()),
                }
            }
            Message::Abort(reason) => self.aborted = Some(reason),
            _ => return Err(unexpected(envelope.kind, from)),
        }
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.bundle.is_some() || self.aborted.is_some()
    }
}

/// Why a round ended without a signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundFailure {
    /// Fewer than `t` clients were available to sign.
    Threshold { have: usize, need: u32 },
    /// Secure aggregation could not remove every mask.
    Unmaskable(SecAggError),
    Sign(SignError),
    Witness(ProtocolError),
}

impl std::fmt::Display for RoundFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoundFailure::Threshold { have, need } => write!(f, "threshold not met: {have} online, {need} needed"),
            RoundFailure::Unmaskable(e) => write!(f, "aggregation failed: {e}"),
            RoundFailure::Sign(e) => write!(f, "signing failed: {e}"),
            RoundFailure::Witness(e) => write!(f, "group witness failed: {e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServerTimings {
    /// Receiving masked updates and recovery shares, then unmasking.
    pub sa_agg: Duration,
    /// Partial verification and combination.
    pub ts_agg: Duration,
    /// Wall time from the unmasked sum to the final broadcast.
    pub post_sa: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOutput {
    pub model: ModelVector,
    pub token: GlobalToken,
    pub signers: BTreeSet<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    AwaitMasked,
    AwaitRecovery,
    AwaitCommitments,
    AwaitPartials,
    Done,
}

pub struct FlServer {
    keys: ServerKeyMaterial,
    sa: SaServerState,
    params: Vec<f64>,
    alt_witness: bool,
    rng: ChaCha20Rng,
    stage: Stage,
    online: BTreeSet<u32>,
    model: Option<ModelVector>,
    commitments: BTreeMap<u32, SigningCommitments>,
    session: Option<SigningSession>,
    partials: BTreeMap<u32, PartialSignature>,
    witness: BTreeMap<u32, GroupElement>,
    outcome: Option<Result<GenerateOutput, RoundFailure>>,
    timings: ServerTimings,
    sa_done: Option<Instant>,
}

impl FlServer {
    pub fn new(keys: ServerKeyMaterial, params: Vec<f64>, rng_seed: u64) -> Self {
        let sa = SaServerState::new(keys.sa_config.clone(), keys.dh_publics.clone());
        Self {
            keys,
            sa,
            params,
            alt_witness: false,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
            stage: Stage::AwaitMasked,
            online: BTreeSet::new(),
            model: None,
            commitments: BTreeMap::new(),
            session: None,
            partials: BTreeMap::new(),
            witness: BTreeMap::new(),
            outcome: None,
            timings: ServerTimings::default(),
            sa_done: None,
        }
    }

    pub fn with_alt_witness(mut self, on: bool) -> Self {
        self.alt_witness = on;
        self
    }

    pub fn round(&self) -> u64 {
        self.keys.round
    }

    pub fn encoding(&self) -> FixedPoint {
        self.keys.sa_config.encoding
    }

    pub fn outcome(&self) -> Option<&Result<GenerateOutput, RoundFailure>> {
        self.outcome.as_ref()
    }

    pub fn timings(&self) -> ServerTimings {
        self.timings
    }

    /// The unmasked sum, once secure aggregation has finished.
    pub fn model(&self) -> Option<&ModelVector> {
        self.model.as_ref()
    }

    fn send(&self, out: &mut Outbox, to: u32, message: &Message) {
        out.send(Address::Client(to), message.encode(self.round()));
    }

    fn fail(&mut self, failure: RoundFailure, out: &mut Outbox) {
        let notice = Message::Abort(failure.to_string());
        for &i in &self.online {
            self.send(out, i, &notice);
        }
        self.outcome = Some(Err(failure));
        self.stage = Stage::Done;
    }

    fn classify(&mut self, out: &mut Outbox) {
        let class = self.sa.classify().clone();
        self.online = class.online.clone();
        let need = self.keys.threshold();
        if self.online.len() < need as usize {
            return self.fail(
                RoundFailure::Threshold {
                    have: self.online.len(),
                    need,
                },
                out,
            );
        }
        for &i in &class.online {
            let (online, dropped) = self.sa.neighbor_status(i).expect("classified");
            self.send(out, i, &Message::NeighborStatus { online, dropped });
        }
        self.stage = Stage::AwaitRecovery;
    }

    fn unmask(&mut self, out: &mut Outbox) {
        let mut t = self.timings;
        let result = timed(&mut t.sa_agg, || self.sa.aggregate());
        self.timings = t;
        let model = match result {
            Ok(m) => m,
            Err(e) => return self.fail(RoundFailure::Unmaskable(e), out),
        };
        self.sa_done = Some(Instant::now());
        let notice = Message::AggregateModel {
            session: SessionId(self.round()),
            model: model.clone(),
        };
        for &i in &self.online {
            self.send(out, i, &notice);
        }
        self.model = Some(model);
        self.stage = Stage::AwaitCommitments;
    }

    fn open_session(&mut self, out: &mut Outbox) {
        let need = self.keys.threshold();
        if self.commitments.len() < need as usize {
            return self.fail(
                RoundFailure::Threshold {
                    have: self.commitments.len(),
                    need,
                },
                out,
            );
        }
        let digest = self.model.as_ref().expect("unmasked").digest();
        let session = match SigningSession::new(
            SessionId(self.round()),
            digest,
            self.keys.signing.group_key,
            std::mem::take(&mut self.commitments),
        ) {
            Ok(s) => s,
            Err(e) => return self.fail(RoundFailure::Sign(e), out),
        };
        let package = Message::SigningPackage {
            session: session.id(),
            message: digest,
            commitments: session.commitments().clone(),
        };
        for i in session.participants() {
            self.send(out, i, &package);
        }
        self.session = Some(session);
        self.stage = Stage::AwaitPartials;
    }

    fn partials_complete(&self) -> bool {
        let session = self.session.as_ref().expect("session open");
        let n = session.commitments().len();
        self.partials.len() == n && (!self.alt_witness || self.witness.len() == n)
    }

    fn finalize(&mut self, out: &mut Outbox) {
        let session = self.session.take().expect("session open");
        let partials: Vec<PartialSignature> = self.partials.values().copied().collect();
        let mut t = self.timings;
        let signed = timed(&mut t.ts_agg, || ts_sign_agg(&partials, &session, &self.keys.signing));
        self.timings = t;
        let signature = match signed {
            Ok(s) => s,
            Err(e) => return self.fail(RoundFailure::Sign(e), out),
        };
        let signers: BTreeSet<u32> = session.participants().into_iter().collect();
        let key = if self.alt_witness {
            match alt_group_witness(&self.witness, &signers) {
                Ok(k) => k,
                Err(e) => return self.fail(RoundFailure::Witness(e), out),
            }
        } else {
            OprfKey::random(&mut self.rng)
        };
        let token = GlobalToken::derive(self.round(), self.keys.signing.group_key, &key);
        let notice = Message::Finalize { signature, key };
        for &i in &signers {
            self.send(out, i, &notice);
        }
        if let Some(start) = self.sa_done {
            self.timings.post_sa = start.elapsed();
        }
        self.outcome = Some(Ok(GenerateOutput {
            model: self.model.clone().expect("unmasked"),
            token,
            signers,
        }));
        self.stage = Stage::Done;
    }
}

impl Party for FlServer {
    fn address(&self) -> Address {
        Address::Server
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let params = Message::ModelParams(self.params.clone());
        for i in 1..=self.keys.clients() {
            self.send(out, i, &params);
        }
        Ok(())
    }

    fn handle(&mut self, from: Address, envelope: &crate::protocol::Envelope, out: &mut Outbox) -> Result<(), ProtocolError> {
        let Address::Client(i) = from else {
            return Err(unexpected(envelope.kind, from));
        };
        if envelope.round != self.round() {
            return Err(unexpected(envelope.kind, from));
        }
        let encoding = self.encoding();
        match (self.stage, envelope.kind) {
            (Stage::AwaitMasked, MessageType::MaskedUpdate) => {
                let mut t = self.timings;
                timed(&mut t.sa_agg, || -> Result<(), ProtocolError> {
                    let Message::MaskedUpdate(masked) = Message::decode(envelope, Some(encoding))? else {
                        unreachable!()
                    };
                    self.sa.receive_masked(i, masked)?;
                    Ok(())
                })?;
                self.timings = t;
                if self.sa.received() == self.keys.clients() as usize {
                    self.classify(out);
                }
            }
            (Stage::AwaitRecovery, MessageType::RecoveryShares) => {
                let mut t = self.timings;
                timed(&mut t.sa_agg, || -> Result<(), ProtocolError> {
                    let Message::RecoveryShares(shares) = Message::decode(envelope, Some(encoding))? else {
                        unreachable!()
                    };
                    if shares.holder != i {
                        return Err(unexpected(envelope.kind, from));
                    }
                    self.sa.receive_recovery(shares)?;
                    Ok(())
                })?;
                self.timings = t;
                if self.sa.recovery_count() == self.online.len() {
                    self.unmask(out);
                }
            }
            (Stage::AwaitCommitments, MessageType::SigningCommitment) if self.online.contains(&i) => {
                let Message::SigningCommitment(c) = Message::decode(envelope, None)? else {
                    unreachable!()
                };
                self.commitments.insert(i, c);
                if self.commitments.len() == self.online.len() {
                    self.open_session(out);
                }
            }
            (Stage::AwaitPartials, MessageType::PartialSignature | MessageType::WitnessShare) => {
                match Message::decode(envelope, None)? {
                    Message::PartialSignature(p) if p.index == i => {
                        self.partials.insert(i, p);
                    }
                    Message::WitnessShare(share) => {
                        self.witness.insert(i, share);
                    }
                    _ => return Err(unexpected(envelope.kind, from)),
                }
                if self.partials_complete() {
                    self.finalize(out);
                }
            }
            // Late messages from a finished phase are ignored.
            (Stage::Done, _) => {}
            _ => return Err(unexpected(envelope.kind, from)),
        }
        Ok(())
    }

    fn on_timeout(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        match self.stage {
            Stage::AwaitMasked => self.classify(out),
            Stage::AwaitRecovery => self.unmask(out),
            Stage::AwaitCommitments => self.open_session(out),
            Stage::AwaitPartials => self.finalize(out),
            Stage::Done => {}
        }
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.stage == Stage::Done
    }

    fn status(&self) -> String {
        format!("{:?}", self.stage)
    }
}

/// Result of one Generate run.
#[derive(Debug)]
pub struct RoundOutcome {
    pub result: Result<GenerateOutput, RoundFailure>,
    /// Bundles held by clients at the end of the round, by index.
    pub bundles: BTreeMap<u32, ProofBundle>,
    pub transcript: Transcript,
}

/// Runs Generate for one round over the simulator.
pub fn generate_phase(
    server: &mut FlServer,
    clients: &mut [ClientParty],
    schedule: &DropoutSchedule,
    transport: &mut Transport,
) -> Result<RoundOutcome, SimError> {
    {
        let mut parties: Vec<&mut dyn Party> = Vec::with_capacity(clients.len() + 1);
        parties.push(server);
        parties.extend(clients.iter_mut().map(|c| c as &mut dyn Party));
        run_round(&mut parties, schedule, transport, Address::Server)?;
    }
    let result = server.outcome().cloned().expect("server finished");
    let bundles = clients
        .iter()
        .filter_map(|c| c.bundle().map(|b| (c.index(), b.clone())))
        .collect();
    Ok(RoundOutcome {
        result,
        bundles,
        transcript: transport.take_transcript(),
    })
}
