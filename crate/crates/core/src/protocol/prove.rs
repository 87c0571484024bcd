use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{Envelope, GlobalToken, Message, ProofBundle, ProtocolError};
use crate::crypto::{Digest, Scalar};
use crate::oprf::{blind_with_factor, oprf_blind, oprf_evaluate, oprf_unblind, BlindState};
use crate::secagg::ModelVector;
use crate::sim::{run_round, Address, DropoutSchedule, Outbox, Party, SimError, Transcript, Transport};
use crate::tsig::ts_verify;

/// What the service provider keeps per revealed round: `(H(M′), VK′, R′)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealedRound {
    pub mhash: Digest,
    pub token: GlobalToken,
}

#[derive(Clone, Debug, Default)]
pub struct ServiceProvider {
    rounds: BTreeMap<u64, RevealedRound>,
}

impl ServiceProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accept_reveal(&mut self, model: &ModelVector, token: GlobalToken) {
        self.accept_digest(model.digest(), token);
    }

    pub fn accept_digest(&mut self, mhash: Digest, token: GlobalToken) {
        self.rounds.insert(token.l, RevealedRound { mhash, token });
    }

    pub fn round(&self, l: u64) -> Option<&RevealedRound> {
        self.rounds.get(&l)
    }
}

/// Source of the verifier's blinding factor `ρ`.
#[derive(Clone, Copy, Debug)]
pub enum Blinding {
    Seeded(u64),
    Fixed(Scalar),
}

/// Client side of Prove. Knows nothing but its bundle.
pub struct ProverParty {
    bundle: ProofBundle,
    decision: Option<bool>,
    elapsed: Duration,
}

impl ProverParty {
    pub fn new(bundle: ProofBundle) -> Self {
        Self {
            bundle,
            decision: None,
            elapsed: Duration::ZERO,
        }
    }

    pub fn decision(&self) -> Option<bool> {
        self.decision
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed
    }

    fn respond(&mut self, envelope: &Envelope, out: &mut Outbox) {
        match Message::decode(envelope, None) {
            Ok(Message::Blind(alpha)) => match oprf_evaluate(&alpha, &self.bundle.key) {
                Ok(beta) => {
                    let response = Message::Response {
                        signature: self.bundle.sigma,
                        beta,
                    };
                    out.send(Address::ServiceProvider, response.encode(self.bundle.l));
                }
                Err(_) => self.decision = Some(false),
            },
            Ok(Message::Decision(accept)) => self.decision = Some(accept),
            _ => self.decision = Some(false),
        }
    }
}

impl Party for ProverParty {
    fn address(&self) -> Address {
        Address::Prover
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        out.send(
            Address::ServiceProvider,
            Message::ModelHash(self.bundle.mhash).encode(self.bundle.l),
        );
        Ok(())
    }

    fn handle(&mut self, _from: Address, envelope: &Envelope, out: &mut Outbox) -> Result<(), ProtocolError> {
        let start = Instant::now();
        if self.decision.is_none() {
            self.respond(envelope, out);
        }
        self.elapsed += start.elapsed();
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.decision.is_some()
    }
}

/// Service-provider side of one Prove run.
pub struct VerifierParty<'a> {
    sp: &'a ServiceProvider,
    blinding: Blinding,
    pending: Option<(RevealedRound, BlindState)>,
    decision: Option<bool>,
    elapsed: Duration,
}

impl<'a> VerifierParty<'a> {
    pub fn new(sp: &'a ServiceProvider, blinding: Blinding) -> Self {
        Self {
            sp,
            blinding,
            pending: None,
            decision: None,
            elapsed: Duration::ZERO,
        }
    }

    pub fn decision(&self) -> Option<bool> {
        self.decision
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed
    }

    fn decide(&mut self, round: u64, accept: bool, out: &mut Outbox) {
        self.decision = Some(accept);
        out.send(Address::Prover, Message::Decision(accept).encode(round));
    }

    fn step(&mut self, envelope: &Envelope, out: &mut Outbox) {
        let round = envelope.round;
        match (Message::decode(envelope, None), self.pending.take()) {
            (Ok(Message::ModelHash(h)), None) => {
                let Some(revealed) = self.sp.round(round).cloned() else {
                    return self.decide(round, false, out);
                };
                if revealed.mhash != h {
                    return self.decide(round, false, out);
                }
                let x = revealed.token.group_key.to_bytes();
                let state = match self.blinding {
                    Blinding::Fixed(rho) => blind_with_factor(&x, rho).expect("fixed rho is nonzero"),
                    Blinding::Seeded(seed) => oprf_blind(&x, &mut ChaCha20Rng::seed_from_u64(seed)),
                };
                out.send(Address::Prover, Message::Blind(*state.alpha()).encode(round));
                self.pending = Some((revealed, state));
            }
            (Ok(Message::Response { signature, beta }), Some((revealed, mut state))) if revealed.token.l == round => {
                let signed = ts_verify(&signature, &revealed.mhash, &revealed.token.group_key);
                let knows_key = oprf_unblind(&beta, &mut state).is_ok_and(|r| r == revealed.token.r);
                self.decide(round, signed && knows_key, out);
            }
            _ => self.decide(round, false, out),
        }
    }
}

impl Party for VerifierParty<'_> {
    fn address(&self) -> Address {
        Address::ServiceProvider
    }

    fn start(&mut self, _out: &mut Outbox) -> Result<(), ProtocolError> {
        Ok(())
    }

    fn handle(&mut self, _from: Address, envelope: &Envelope, out: &mut Outbox) -> Result<(), ProtocolError> {
        let start = Instant::now();
        if self.decision.is_none() {
            self.step(envelope, out);
        }
        self.elapsed += start.elapsed();
        Ok(())
    }

    fn on_timeout(&mut self, _out: &mut Outbox) -> Result<(), ProtocolError> {
        // The client went quiet (e.g. refused a bad α): reject.
        self.decision.get_or_insert(false);
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.decision.is_some()
    }
}

#[derive(Debug)]
pub struct ProveOutcome {
    pub client: bool,
    pub sp: bool,
    pub transcript: Transcript,
    pub bytes_client_to_sp: usize,
    pub bytes_sp_to_client: usize,
    pub client_time: Duration,
    pub sp_time: Duration,
}

/// Runs Prove between a bundle holder and the service provider.
pub fn prove_phase(bundle: &ProofBundle, sp: &ServiceProvider, blinding: Blinding) -> Result<ProveOutcome, SimError> {
    let mut prover = ProverParty::new(bundle.clone());
    let mut verifier = VerifierParty::new(sp, blinding);
    let transcript = drive(&mut prover, &mut verifier)?;
    Ok(ProveOutcome {
        client: prover.decision().unwrap_or(false),
        sp: verifier.decision().unwrap_or(false),
        bytes_client_to_sp: transcript.bytes_between(Address::Prover, Address::ServiceProvider),
        bytes_sp_to_client: transcript.bytes_between(Address::ServiceProvider, Address::Prover),
        transcript,
        client_time: prover.elapsed(),
        sp_time: verifier.elapsed(),
    })
}

/// Runs Prove against an arbitrary verifier implementation; returns the
/// client's decision and the transcript.
pub fn prove_against(bundle: &ProofBundle, verifier: &mut dyn Party) -> Result<(bool, Transcript), SimError> {
    let mut prover = ProverParty::new(bundle.clone());
    let transcript = drive(&mut prover, verifier)?;
    Ok((prover.decision().unwrap_or(false), transcript))
}

fn drive(prover: &mut ProverParty, verifier: &mut dyn Party) -> Result<Transcript, SimError> {
    let mut transport = Transport::fifo();
    let mut parties: [&mut dyn Party; 2] = [prover, verifier];
    run_round(&mut parties, &DropoutSchedule::none(), &mut transport, Address::ServiceProvider)?;
    Ok(transport.take_transcript())
}
