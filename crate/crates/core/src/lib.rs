//! Privacy-preserving contact tracing: two proximity beacon protocols,
//! pseudonymous infection certificates, and a trace-driven simulator for
//! judging how app usage patterns affect exposure detection.

pub mod certify;
pub mod client;
pub mod encrypted;
pub mod random;
pub mod sim;
pub mod trace;
pub mod types;
pub mod wire;

pub use types::{
    slot_of, DeviceId, EncryptedBeacon, HeardRecord, Payload, PlainBeacon, RandomToken, SentRecord,
    Timestamp,
};
