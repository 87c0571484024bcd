//! Deterministic in-process transport for party state machines.
//!
//! Messages are queued and delivered one at a time, in FIFO or seeded
//! shuffled order. When nothing is in flight every party gets a timeout
//! tick; if that still produces no traffic before the coordinator finishes,
//! the run is reported as deadlocked.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Envelope, Phase, ProtocolError};

/// A party's role on the wire. Prove-phase clients carry no index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Address {
    Server,
    Client(u32),
    Prover,
    ServiceProvider,
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Server => f.write_str("server"),
            Address::Client(i) => write!(f, "client-{i}"),
            Address::Prover => f.write_str("client"),
            Address::ServiceProvider => f.write_str("sp"),
        }
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        match text.as_str() {
            "server" => Ok(Address::Server),
            "client" => Ok(Address::Prover),
            "sp" => Ok(Address::ServiceProvider),
            other => other
                .strip_prefix("client-")
                .and_then(|i| i.parse().ok())
                .map(Address::Client)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown address {other}"))),
        }
    }
}

/// Messages a party wants sent after handling an event.
#[derive(Debug, Default)]
pub struct Outbox {
    messages: Vec<(Address, Envelope)>,
}

impl Outbox {
    pub fn send(&mut self, to: Address, envelope: Envelope) {
        self.messages.push((to, envelope));
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

pub trait Party {
    fn address(&self) -> Address;
    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError>;
    fn handle(&mut self, from: Address, envelope: &Envelope, out: &mut Outbox) -> Result<(), ProtocolError>;
    /// Called when no message is in flight.
    fn on_timeout(&mut self, _out: &mut Outbox) -> Result<(), ProtocolError> {
        Ok(())
    }
    fn is_finished(&self) -> bool;
    /// Short description of what the party is waiting for.
    fn status(&self) -> String {
        String::new()
    }
}

/// Step after which a client stops responding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropStep {
    /// Never sends its masked update.
    BeforeProtect,
    /// Sends its masked update, then nothing else.
    AfterProtect,
    /// Completes secure aggregation but never signs.
    BeforeSign,
}

impl DropStep {
    fn cutoff(self) -> Phase {
        match self {
            DropStep::BeforeProtect => Phase::Protect,
            DropStep::AfterProtect => Phase::Recover,
            DropStep::BeforeSign => Phase::Sign,
        }
    }
}

/// Which clients drop in one round, and when.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutSchedule {
    drops: BTreeMap<u32, DropStep>,
}

impl DropoutSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = u32>, step: DropStep) -> Self {
        Self {
            drops: indices.into_iter().map(|i| (i, step)).collect(),
        }
    }

    pub fn with(mut self, index: u32, step: DropStep) -> Self {
        self.drops.insert(index, step);
        self
    }

    /// Same indices, all dropping at `step`.
    pub fn at_step(&self, step: DropStep) -> Self {
        Self::from_indices(self.drops.keys().copied(), step)
    }

    pub fn step(&self, index: u32) -> Option<DropStep> {
        self.drops.get(&index).copied()
    }

    pub fn dropped(&self) -> BTreeSet<u32> {
        self.drops.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.drops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drops.is_empty()
    }
}

/// `floor(rate · n)` distinct clients from `1..=n`, dropping before protect.
pub fn sample_dropout(rate: f64, n: u32, seed: u64) -> DropoutSchedule {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let count = (rate * n as f64 + 1e-9).floor() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picked = (1..=n).choose_multiple(&mut rng, count);
    picked.sort_unstable();
    DropoutSchedule::from_indices(picked, DropStep::BeforeProtect)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "order")]
pub enum DeliveryOrder {
    Fifo,
    Shuffle { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub from: Address,
    pub to: Address,
    #[serde(flatten)]
    pub envelope: Envelope,
}

/// Every delivered message, in delivery order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    /// Total envelope bytes sent from `from` to `to`.
    pub fn bytes_between(&self, from: Address, to: Address) -> usize {
        self.entries
            .iter()
            .filter(|e| e.from == from && e.to == to)
            .map(|e| e.envelope.wire_len())
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("deadlock: no messages in flight; waiting parties: {waiting}")]
    Deadlock { waiting: String },
    #[error("{address} failed: {error}")]
    Party { address: Address, error: ProtocolError },
    #[error("message addressed to unknown party {0}")]
    UnknownAddress(Address),
}

pub struct Transport {
    order: DeliveryOrder,
    rng: ChaCha20Rng,
    queue: VecDeque<(Address, Address, Envelope)>,
    transcript: Transcript,
}

impl Transport {
    pub fn new(order: DeliveryOrder) -> Self {
        let seed = match order {
            DeliveryOrder::Fifo => 0,
            DeliveryOrder::Shuffle { seed } => seed,
        };
        Self {
            order,
            rng: ChaCha20Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            transcript: Transcript::default(),
        }
    }

    pub fn fifo() -> Self {
        Self::new(DeliveryOrder::Fifo)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Transcript {
        std::mem::take(&mut self.transcript)
    }

    fn next(&mut self) -> Option<(Address, Address, Envelope)> {
        match self.order {
            DeliveryOrder::Fifo => self.queue.pop_front(),
            DeliveryOrder::Shuffle { .. } if !self.queue.is_empty() => {
                let i = self.rng.gen_range(0..self.queue.len());
                self.queue.remove(i)
            }
            DeliveryOrder::Shuffle { .. } => None,
        }
    }
}

struct Router<'s> {
    schedule: &'s DropoutSchedule,
    silent: BTreeSet<Address>,
}

impl Router<'_> {
    fn route(&mut self, from: Address, out: Outbox, transport: &mut Transport) {
        for (to, envelope) in out.messages {
            if self.silent.contains(&from) {
                break;
            }
            if let Address::Client(i) = from {
                if let Some(step) = self.schedule.step(i) {
                    if envelope.kind.phase() >= step.cutoff() {
                        self.silent.insert(from);
                        break;
                    }
                }
            }
            transport.queue.push_back((from, to, envelope));
        }
    }
}

/// Steps all parties until the coordinator finishes and nothing is in flight.
///
/// Clients in `schedule` go silent the first time they try to send a message
/// at or past their drop step; later messages to them are discarded.
pub fn run_round(
    parties: &mut [&mut dyn Party],
    schedule: &DropoutSchedule,
    transport: &mut Transport,
    coordinator: Address,
) -> Result<(), SimError> {
    let index: BTreeMap<Address, usize> = parties.iter().enumerate().map(|(k, p)| (p.address(), k)).collect();
    let coordinator_slot = *index.get(&coordinator).ok_or(SimError::UnknownAddress(coordinator))?;
    let mut router = Router {
        schedule,
        silent: BTreeSet::new(),
    };
    let fail = |address: Address| move |error| SimError::Party { address, error };

    for party in parties.iter_mut() {
        let mut out = Outbox::default();
        let address = party.address();
        party.start(&mut out).map_err(fail(address))?;
        router.route(address, out, transport);
    }

    loop {
        if let Some((from, to, envelope)) = transport.next() {
            let slot = *index.get(&to).ok_or(SimError::UnknownAddress(to))?;
            if router.silent.contains(&to) {
                continue;
            }
            transport.transcript.entries.push(TranscriptEntry {
                from,
                to,
                envelope: envelope.clone(),
            });
            let mut out = Outbox::default();
            parties[slot].handle(from, &envelope, &mut out).map_err(fail(to))?;
            router.route(to, out, transport);
            continue;
        }
        if parties[coordinator_slot].is_finished() {
            return Ok(());
        }
        for party in parties.iter_mut() {
            let address = party.address();
            if router.silent.contains(&address) || party.is_finished() {
                continue;
            }
            let mut out = Outbox::default();
            party.on_timeout(&mut out).map_err(fail(address))?;
            router.route(address, out, transport);
        }
        if transport.queue.is_empty() && !parties[coordinator_slot].is_finished() {
            let waiting = parties
                .iter()
                .filter(|p| !p.is_finished() && !router.silent.contains(&p.address()))
                .map(|p| format!("{} ({})", p.address(), p.status()))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(SimError::Deadlock { waiting });
        }
    }
}
