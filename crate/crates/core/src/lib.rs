//! Federated learning rounds that hand every participating client a proof of
//! participation.
//!
//! A round securely aggregates masked client updates ([`secagg`]), has the
//! surviving clients jointly threshold-sign the model digest ([`tsig`]), and
//! issues a fresh group witness `K`. A client later convinces a service
//! provider holding the model that it took part, without revealing which
//! client it is, by evaluating an oblivious PRF under `K` ([`oprf`]).

pub mod bench;
pub mod crypto;
pub mod oprf;
pub mod protocol;
pub mod secagg;
pub mod sim;
pub mod trainer;
pub mod tsig;
