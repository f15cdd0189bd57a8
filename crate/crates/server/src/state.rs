//! The verification server as a plain state machine, with no I/O.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use contain_core::certify::{AuthorityPublicKey, CertificateProblem};
use contain_core::wire::{ExposureQuery, ExposureResponse, InfectedUpload, PublishedBundle, UploadItems};
use contain_core::{EncryptedBeacon, RandomToken, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether Protocol 2 tokens are published or only matched privately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicationMode {
    #[default]
    Public,
    PrivateOnly,
}

impl PublicationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PublicationMode::Public => "public",
            PublicationMode::PrivateOnly => "private_only",
        }
    }
}

impl fmt::Display for PublicationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PublicationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "public" => Ok(PublicationMode::Public),
            "private_only" => Ok(PublicationMode::PrivateOnly),
            other => Err(format!("unknown publication mode {other:?} (expected public or private_only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadCertificate,
    ExpiredCertificate,
    BadSignature,
    EmptyItems,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadCertificate => "bad_certificate",
            RejectReason::ExpiredCertificate => "expired_certificate",
            RejectReason::BadSignature => "bad_signature",
            RejectReason::EmptyItems => "empty_items",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted { version: u64 },
    Rejected(RejectReason),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ServerError {
    #[error("publication mode can only be set before the server starts serving")]
    AlreadyServing,
}

/// Everything the server knows. Items are tagged with the version that
/// published them so deltas are a suffix scan.
#[derive(Debug)]
pub struct VerificationServer {
    authority: AuthorityPublicKey,
    mode: PublicationMode,
    serving: bool,
    version: u64,
    encrypted: Vec<(u64, EncryptedBeacon)>,
    random: Vec<(u64, RandomToken)>,
    random_set: HashSet<RandomToken>,
    audit: Vec<InfectedUpload>,
}

impl VerificationServer {
    pub fn new(authority: AuthorityPublicKey, mode: PublicationMode) -> Self {
        VerificationServer {
            authority,
            mode,
            serving: false,
            version: 0,
            encrypted: Vec::new(),
            random: Vec::new(),
            random_set: HashSet::new(),
            audit: Vec::new(),
        }
    }

    pub fn authority(&self) -> &AuthorityPublicKey {
        &self.authority
    }

    pub fn mode(&self) -> PublicationMode {
        self.mode
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_serving(&self) -> bool {
        self.serving
    }

    /// Freezes the configuration.
    pub fn start_serving(&mut self) {
        self.serving = true;
    }

    pub fn configure_publication_mode(&mut self, mode: PublicationMode) -> Result<(), ServerError> {
        if self.serving {
            return Err(ServerError::AlreadyServing);
        }
        self.mode = mode;
        Ok(())
    }

    /// Every accepted upload, in order.
    pub fn audit_log(&self) -> &[InfectedUpload] {
        &self.audit
    }

    /// Checks an upload without touching state.
    pub fn validate(&self, upload: &InfectedUpload, now: Timestamp) -> Result<(), RejectReason> {
        match upload.certificate.check(&self.authority, now) {
            Ok(()) => {}
            Err(CertificateProblem::Expired) => return Err(RejectReason::ExpiredCertificate),
            Err(CertificateProblem::BadSignature | CertificateProblem::NotYetValid) => {
                return Err(RejectReason::BadCertificate)
            }
        }
        if !upload.signature_is_valid() {
            return Err(RejectReason::BadSignature);
        }
        if upload.items.is_empty() {
            return Err(RejectReason::EmptyItems);
        }
        Ok(())
    }

    /// Publishes an already validated upload and returns the new version.
    pub fn apply(&mut self, upload: InfectedUpload) -> u64 {
        self.version += 1;
        let v = self.version;
        match &upload.items {
            UploadItems::Encrypted(items) => self.encrypted.extend(items.iter().map(|eb| (v, eb.clone()))),
            UploadItems::Random(items) => {
                for &tok in items {
                    if self.random_set.insert(tok) {
                        self.random.push((v, tok));
                    }
                }
            }
        }
        self.audit.push(upload);
        v
    }

    pub fn submit_infected(&mut self, upload: InfectedUpload, now: Timestamp) -> SubmitOutcome {
        match self.validate(&upload, now) {
            Ok(()) => SubmitOutcome::Accepted { version: self.apply(upload) },
            Err(reason) => SubmitOutcome::Rejected(reason),
        }
    }

    /// Items added after `since`, at the current version.
    pub fn get_published(&self, since: u64) -> PublishedBundle {
        let newer = |v: &u64| *v > since;
        let start_e = self.encrypted.partition_point(|(v, _)| !newer(v));
        let random_items = match self.mode {
            PublicationMode::Public => {
                let start_r = self.random.partition_point(|(v, _)| !newer(v));
                self.random[start_r..].iter().map(|(_, t)| *t).collect()
            }
            PublicationMode::PrivateOnly => Vec::new(),
        };
        PublishedBundle {
            version: self.version,
            encrypted_items: self.encrypted[start_e..].iter().map(|(_, e)| e.clone()).collect(),
            random_items,
        }
    }

    /// One bit: does any queried token belong to an infected user?
    pub fn private_exposure_query(&self, query: &ExposureQuery) -> ExposureResponse {
        ExposureResponse { exposed: query.tokens.iter().any(|t| self.random_set.contains(t)) }
    }
}
