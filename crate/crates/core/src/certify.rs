//! Pseudonymous infection certificates.
//!
//! A medical authority signs a statement that binds "infected" to a bare
//! user public key with a validity window. The certificate holds nothing else,
//! so the verification server learns only that *some* key is infected.
//!
//! Signatures are Ed25519 (deterministic) over
//! `subject_public_key || issued_at (8, BE) || expires_at (8, BE)`.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{base64_bytes, EntropyError, Timestamp};

/// Default certificate lifetime: 14 days.
pub const DEFAULT_VALIDITY_SECS: u64 = 14 * 86_400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("issued_at {issued_at} is not before expires_at {expires_at}")]
    InvalidWindow { issued_at: Timestamp, expires_at: Timestamp },
    #[error("malformed public key")]
    BadKey,
}

/// Why a certificate did not verify.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CertificateProblem {
    #[error("signature does not verify under the authority key")]
    BadSignature,
    #[error("certificate is not valid yet")]
    NotYetValid,
    #[error("certificate has expired")]
    Expired,
}

fn signing_key_from_rng<R: RngCore + CryptoRng>(rng: &mut R) -> Result<SigningKey, EntropyError> {
    let mut seed = [0u8; 32];
    rng.try_fill_bytes(&mut seed)?;
    Ok(SigningKey::from_bytes(&seed))
}

/// The medical authority's signing key.
pub struct AuthorityKeyPair {
    secret: SigningKey,
}

impl AuthorityKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, EntropyError> {
        Ok(AuthorityKeyPair { secret: signing_key_from_rng(rng)? })
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        AuthorityKeyPair { secret: SigningKey::from_bytes(&seed) }
    }

    /// Secret seed, for storing the authority key on disk.
    pub fn seed(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public(&self) -> AuthorityPublicKey {
        AuthorityPublicKey(self.secret.verifying_key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthorityPublicKey(VerifyingKey);

impl AuthorityPublicKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let bytes: [u8; 32] = bytes.try_into().map_err(|_| CertError::BadKey)?;
        VerifyingKey::from_bytes(&bytes)
            .map(AuthorityPublicKey)
            .map_err(|_| CertError::BadKey)
    }
}

/// A user's pseudonymous identity key. Carries no identity metadata.
pub struct UserKeyPair {
    secret: SigningKey,
}

impl UserKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, EntropyError> {
        Ok(UserKeyPair { secret: signing_key_from_rng(rng)? })
    }

    pub fn public_key_bytes(&self) -> [u8; 32] {
        self.secret.verifying_key().to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.secret.sign(message).to_bytes().to_vec()
    }
}

/// Verifies an Ed25519 signature by a raw 32-byte public key.
pub fn verify_signature(public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    let Ok(pk) = <[u8; 32]>::try_from(public_key) else {
        return false;
    };
    let Ok(pk) = VerifyingKey::from_bytes(&pk) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    pk.verify(message, &sig).is_ok()
}

/// Authority-signed proof that the holder of `subject_public_key` is infected.
///
/// Serialized as a JSON object with exactly these four fields, in this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfectionCertificate {
    #[serde(with = "base64_bytes")]
    pub subject_public_key: Vec<u8>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    #[serde(with = "base64_bytes")]
    pub authority_signature: Vec<u8>,
}

impl InfectionCertificate {
    /// The exact bytes the authority signs.
    pub fn signed_bytes(&self) -> Vec<u8> {
        signed_bytes(&self.subject_public_key, self.issued_at, self.expires_at)
    }

    /// Full check, naming the first problem found.
    pub fn check(&self, authority: &AuthorityPublicKey, now: Timestamp) -> Result<(), CertificateProblem> {
        let Ok(sig) = Signature::from_slice(&self.authority_signature) else {
            return Err(CertificateProblem::BadSignature);
        };
        if authority.0.verify(&self.signed_bytes(), &sig).is_err() {
            return Err(CertificateProblem::BadSignature);
        }
        if now < self.issued_at {
            return Err(CertificateProblem::NotYetValid);
        }
        if now >= self.expires_at {
            return Err(CertificateProblem::Expired);
        }
        Ok(())
    }
}

fn signed_bytes(subject: &[u8], issued_at: Timestamp, expires_at: Timestamp) -> Vec<u8> {
    let mut out = Vec::with_capacity(subject.len() + 16);
    out.extend_from_slice(subject);
    out.extend_from_slice(&issued_at.secs().to_be_bytes());
    out.extend_from_slice(&expires_at.secs().to_be_bytes());
    out
}

pub fn issue_certificate(
    authority: &AuthorityKeyPair,
    subject_public_key: &[u8],
    issued_at: Timestamp,
    expires_at: Timestamp,
) -> Result<InfectionCertificate, CertError> {
    if issued_at >= expires_at {
        return Err(CertError::InvalidWindow { issued_at, expires_at });
    }
    let signature = authority
        .secret
        .sign(&signed_bytes(subject_public_key, issued_at, expires_at));
    Ok(InfectionCertificate {
        subject_public_key: subject_public_key.to_vec(),
        issued_at,
        expires_at,
        authority_signature: signature.to_bytes().to_vec(),
    })
}

/// `true` iff the signature is valid and `issued_at <= now < expires_at`.
pub fn verify_certificate(
    authority: &AuthorityPublicKey,
    cert: &InfectionCertificate,
    now: Timestamp,
) -> bool {
    cert.check(authority, now).is_ok()
}
