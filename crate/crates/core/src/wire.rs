//! Messages exchanged with the verification server.
//!
//! These are the JSON bodies of the HTTP API. The server crate owns the
//! state machine; the types live here so clients and the simulator can build
//! them without pulling in an HTTP stack.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{verify_signature, InfectionCertificate, UserKeyPair};
use crate::types::{base64_bytes, DecodeError, EncryptedBeacon, RandomToken};

const UPLOAD_DOMAIN: &[u8] = b"contain/upload/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Encrypted,
    Random,
}

impl Protocol {
    fn tag(self) -> u8 {
        match self {
            Protocol::Encrypted => 1,
            Protocol::Random => 2,
        }
    }
}

/// What an infected user hands over: heard ciphertexts (Protocol 1) or sent
/// tokens (Protocol 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UploadItems {
    Encrypted(Vec<EncryptedBeacon>),
    Random(Vec<RandomToken>),
}

impl UploadItems {
    pub fn protocol(&self) -> Protocol {
        match self {
            UploadItems::Encrypted(_) => Protocol::Encrypted,
            UploadItems::Random(_) => Protocol::Random,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            UploadItems::Encrypted(v) => v.len(),
            UploadItems::Random(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain tag, protocol tag, item count, then each item length-prefixed.
    /// All integers big-endian.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(UPLOAD_DOMAIN);
        out.push(self.protocol().tag());
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        let mut push = |item: &[u8]| {
            out.extend_from_slice(&(item.len() as u32).to_be_bytes());
            out.extend_from_slice(item);
        };
        match self {
            UploadItems::Encrypted(v) => v.iter().for_each(|eb| push(&eb.to_bytes())),
            UploadItems::Random(v) => v.iter().for_each(|t| push(&t.to_bytes())),
        }
        out
    }
}

/// An infected user's opt-in submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "UploadDocument", into = "UploadDocument")]
pub struct InfectedUpload {
    pub certificate: InfectionCertificate,
    pub items: UploadItems,
    /// Signature by the certificate subject over [`UploadItems::canonical_bytes`].
    pub upload_signature: Vec<u8>,
}

impl InfectedUpload {
    /// Signs `items` with the key the certificate was issued to.
    pub fn new(certificate: InfectionCertificate, items: UploadItems, subject: &UserKeyPair) -> Self {
        let upload_signature = subject.sign(&items.canonical_bytes());
        InfectedUpload { certificate, items, upload_signature }
    }

    pub fn protocol(&self) -> Protocol {
        self.items.protocol()
    }

    pub fn signature_is_valid(&self) -> bool {
        verify_signature(
            &self.certificate.subject_public_key,
            &self.items.canonical_bytes(),
            &self.upload_signature,
        )
    }
}

#[derive(Debug, Error)]
pub enum UploadDecodeError {
    #[error("item {index}: {source}")]
    Item { index: usize, source: DecodeError },
}

/// JSON shape of [`InfectedUpload`]: items are base64 (encrypted) or hex
/// (random) strings according to `protocol`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadDocument {
    pub certificate: InfectionCertificate,
    pub protocol: Protocol,
    pub items: Vec<String>,
    #[serde(with = "base64_bytes")]
    pub upload_signature: Vec<u8>,
}

impl TryFrom<UploadDocument> for InfectedUpload {
    type Error = UploadDecodeError;

    fn try_from(doc: UploadDocument) -> Result<Self, Self::Error> {
        let wrap = |index| move |source| UploadDecodeError::Item { index, source };
        let items = match doc.protocol {
            Protocol::Encrypted => UploadItems::Encrypted(
                doc.items
                    .iter()
                    .enumerate()
                    .map(|(i, s)| EncryptedBeacon::from_base64(s).map_err(wrap(i)))
                    .collect::<Result<_, _>>()?,
            ),
            Protocol::Random => UploadItems::Random(
                doc.items
                    .iter()
                    .enumerate()
                    .map(|(i, s)| s.parse::<RandomToken>().map_err(wrap(i)))
                    .collect::<Result<_, _>>()?,
            ),
        };
        Ok(InfectedUpload {
            certificate: doc.certificate,
            items,
            upload_signature: doc.upload_signature,
        })
    }
}

impl From<InfectedUpload> for UploadDocument {
    fn from(up: InfectedUpload) -> Self {
        let protocol = up.protocol();
        let items = match up.items {
            UploadItems::Encrypted(v) => v.iter().map(EncryptedBeacon::to_base64).collect(),
            UploadItems::Random(v) => v.iter().map(|t| t.to_hex()).collect(),
        };
        UploadDocument {
            certificate: up.certificate,
            protocol,
            items,
            upload_signature: up.upload_signature,
        }
    }
}

/// Items published since some version. Carries no uploader information.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedBundle {
    pub version: u64,
    #[serde(rename = "encrypted")]
    pub encrypted_items: Vec<EncryptedBeacon>,
    #[serde(rename = "random")]
    pub random_items: Vec<RandomToken>,
}

impl PublishedBundle {
    pub fn is_empty(&self) -> bool {
        self.encrypted_items.is_empty() && self.random_items.is_empty()
    }

    /// Appends a later delta.
    pub fn merge(&mut self, delta: PublishedBundle) {
        self.version = self.version.max(delta.version);
        self.encrypted_items.extend(delta.encrypted_items);
        self.random_items.extend(delta.random_items);
    }
}

/// A private check: "did I hear any infected token?"
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureQuery {
    pub anon_id: String,
    pub tokens: BTreeSet<RandomToken>,
}

/// The only answer to a private check: one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureResponse {
    pub exposed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{issue_certificate, AuthorityKeyPair};
    use crate::types::Timestamp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn upload(items: UploadItems) -> (InfectedUpload, UserKeyPair) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
        let user = UserKeyPair::generate(&mut rng).unwrap();
        let cert = issue_certificate(&authority, &user.public_key_bytes(), Timestamp(0), Timestamp(9)).unwrap();
        (InfectedUpload::new(cert, items, &user), user)
    }

    #[test]
    fn upload_json_round_trip() {
        let (up, _) = upload(UploadItems::Random(vec![RandomToken(1), RandomToken(2)]));
        let text = serde_json::to_string(&up).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["protocol"], "random");
        assert_eq!(value["items"][0], "00000000000000000000000000000001");
        let back: InfectedUpload = serde_json::from_str(&text).unwrap();
        assert_eq!(back, up);
        assert!(back.signature_is_valid());
    }

    #[test]
    fn signature_binds_items_and_protocol() {
        let (mut up, _) = upload(UploadItems::Random(vec![RandomToken(1)]));
        up.items = UploadItems::Random(vec![RandomToken(2)]);
        assert!(!up.signature_is_valid());

        let a = UploadItems::Random(vec![]).canonical_bytes();
        let b = UploadItems::Encrypted(vec![]).canonical_bytes();
        assert_ne!(a, b);
    }

    #[test]
    fn malformed_item_is_reported_with_index() {
        let (up, _) = upload(UploadItems::Random(vec![RandomToken(1)]));
        let mut doc = UploadDocument::from(up);
        doc.items.push("zz".into());
        let err = InfectedUpload::try_from(doc).unwrap_err();
        assert!(err.to_string().starts_with("item 1"));
    }

    #[test]
    fn response_schema_is_one_boolean() {
        let text = serde_json::to_string(&ExposureResponse { exposed: true }).unwrap();
        assert_eq!(text, r#"{"exposed":true}"#);
        assert!(serde_json::from_str::<ExposureResponse>(r#"{"exposed":true,"count":3}"#).is_err());
    }
}
