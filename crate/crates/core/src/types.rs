//! Identifiers, timestamps and beacon payloads shared by both protocols,
//! the verification server and the simulator.
//!
//! Binary layouts are canonical and big-endian:
//!
//! * `PlainBeacon`: `magic(4) || id_len(1) || id || timestamp(8) || salt(16) [|| extension]`
//! * `RandomToken`: 16 bytes
//! * `EncryptedBeacon`: `nonce(24) || ciphertext`
//!
//! Binary values that travel inside text documents are base64 (beacons) or
//! 32 lowercase hex characters (tokens).

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SECONDS_PER_DAY: u64 = 86_400;
pub const SECONDS_PER_SLOT: u64 = 3_600;
pub const SLOTS_PER_DAY: usize = 24;

/// Longest accepted device identifier, in bytes.
pub const MAX_DEVICE_ID_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("invalid device id: {0}")]
    DeviceId(&'static str),
    #[error("truncated input: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
    #[error("bad beacon magic {0:#010x}")]
    Magic(u32),
    #[error("invalid base64: {0}")]
    Base64(String),
    #[error("invalid token: {0}")]
    Token(String),
}

/// The secure random source refused to produce bytes.
#[derive(Debug, Error)]
#[error("random source failed: {0}")]
pub struct EntropyError(pub String);

impl From<rand_core::Error> for EntropyError {
    fn from(err: rand_core::Error) -> Self {
        EntropyError(err.to_string())
    }
}

/// Opaque device name. Non-empty, at most 64 bytes, no commas, control
/// characters or surrounding whitespace (it has to survive the trace format).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DeviceId(String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Result<Self, DecodeError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DecodeError::DeviceId("empty"));
        }
        if id.len() > MAX_DEVICE_ID_LEN {
            return Err(DecodeError::DeviceId("longer than 64 bytes"));
        }
        if id.chars().any(|c| c == ',' || c.is_control()) {
            return Err(DecodeError::DeviceId("contains a comma or control character"));
        }
        if id.trim() != id {
            return Err(DecodeError::DeviceId("surrounding whitespace"));
        }
        Ok(DeviceId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DeviceId {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeviceId::new(s)
    }
}

impl<'de> Deserialize<'de> for DeviceId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        DeviceId::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Whole seconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_add(secs))
    }

    /// Hour-of-day bucket, see [`slot_of`].
    pub fn slot(self) -> usize {
        slot_of(self)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// UTC hour of day of `t`, in `0..24`.
pub fn slot_of(t: Timestamp) -> usize {
    ((t.0 % SECONDS_PER_DAY) / SECONDS_PER_SLOT) as usize
}

/// The message a Protocol 1 device encrypts and broadcasts.
///
/// `extension` is an opaque, optional trailer (for example a location the
/// owner wants to remember). The library never interprets it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlainBeacon {
    pub user_id: DeviceId,
    pub timestamp: Timestamp,
    pub salt: [u8; 16],
    pub extension: Vec<u8>,
}

impl PlainBeacon {
    /// "CONT"
    pub const MAGIC: u32 = 0x434F_4E54;

    pub fn encode(&self) -> Vec<u8> {
        let id = self.user_id.as_bytes();
        let mut out = Vec::with_capacity(4 + 1 + id.len() + 8 + 16 + self.extension.len());
        out.extend_from_slice(&Self::MAGIC.to_be_bytes());
        out.push(id.len() as u8);
        out.extend_from_slice(id);
        out.extend_from_slice(&self.timestamp.0.to_be_bytes());
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.extension);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(DecodeError::Truncated { need: n, got: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(5)?;
        let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        if magic != Self::MAGIC {
            return Err(DecodeError::Magic(magic));
        }
        let id_len = bytes[4] as usize;
        let id_end = 5 + id_len;
        need(id_end + 8 + 16)?;
        let id = std::str::from_utf8(&bytes[5..id_end])
            .map_err(|_| DecodeError::DeviceId("not utf-8"))?;
        let user_id = DeviceId::new(id)?;
        let timestamp = Timestamp(u64::from_be_bytes(
            bytes[id_end..id_end + 8].try_into().unwrap(),
        ));
        let salt: [u8; 16] = bytes[id_end + 8..id_end + 24].try_into().unwrap();
        Ok(PlainBeacon {
            user_id,
            timestamp,
            salt,
            extension: bytes[id_end + 24..].to_vec(),
        })
    }
}

pub const BEACON_NONCE_LEN: usize = 24;
pub const BEACON_TAG_LEN: usize = 16;

/// Authenticated ciphertext of a [`PlainBeacon`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncryptedBeacon {
    pub nonce: [u8; BEACON_NONCE_LEN],
    /// Ciphertext followed by the authentication tag.
    pub ciphertext: Vec<u8>,
}

impl EncryptedBeacon {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BEACON_NONCE_LEN + self.ciphertext.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    /// Splits `nonce || ciphertext`. Anything long enough to hold a nonce and
    /// a tag is accepted; whether it decrypts is a separate question.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let need = BEACON_NONCE_LEN + BEACON_TAG_LEN;
        if bytes.len() < need {
            return Err(DecodeError::Truncated { need, got: bytes.len() });
        }
        Ok(EncryptedBeacon {
            nonce: bytes[..BEACON_NONCE_LEN].try_into().unwrap(),
            ciphertext: bytes[BEACON_NONCE_LEN..].to_vec(),
        })
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.to_bytes())
    }

    pub fn from_base64(text: &str) -> Result<Self, DecodeError> {
        let bytes = BASE64
            .decode(text)
            .map_err(|e| DecodeError::Base64(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl Serialize for EncryptedBeacon {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for EncryptedBeacon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        EncryptedBeacon::from_base64(&raw).map_err(serde::de::Error::custom)
    }
}

/// A Protocol 2 beacon: 128 random bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RandomToken(pub u128);

impl RandomToken {
    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        RandomToken(u128::from_be_bytes(bytes))
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl fmt::Display for RandomToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for RandomToken {
    type Err = DecodeError;

    /// Exactly 32 lowercase hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(DecodeError::Token(format!("expected 32 lowercase hex digits, got {s:?}")));
        }
        u128::from_str_radix(s, 16)
            .map(RandomToken)
            .map_err(|e| DecodeError::Token(e.to_string()))
    }
}

impl Serialize for RandomToken {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for RandomToken {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Whatever went over the air: one beacon of either protocol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Encrypted(EncryptedBeacon),
    Random(RandomToken),
}

/// A beacon logged by the receiver. No sender identity is kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeardRecord {
    pub payload: Payload,
    pub heard_at: Timestamp,
}

/// A beacon logged by its emitter, one per emission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentRecord {
    pub payload: Payload,
    pub sent_at: Timestamp,
}

/// Serde adapter for `Vec<u8>` fields carried as standard base64.
pub mod base64_bytes {
    use super::BASE64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let raw = String::deserialize(deserializer)?;
        BASE64.decode(raw).map_err(serde::de::Error::custom)
    }
}
