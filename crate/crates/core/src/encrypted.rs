//! Protocol 1: encrypted, self-addressed beacons.
//!
//! Every device encrypts `(id, time, salt)` under a key only it holds and
//! broadcasts the ciphertext. Receivers log what they hear. When an infected
//! user publishes the ciphertexts they heard, each other device tries its own
//! key on them: a successful decryption means one of its own beacons was
//! heard by the infected user, and the plaintext says when.

use chacha20poly1305::aead::{Aead, KeyInit, Payload as AeadPayload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand_core::{CryptoRng, RngCore};
use rayon::prelude::*;

use crate::types::{
    DeviceId, EncryptedBeacon, EntropyError, PlainBeacon, Timestamp, BEACON_NONCE_LEN,
};

const BEACON_AAD: &[u8] = b"contain/beacon/v1";

/// A device's private 256-bit beacon key.
///
/// There is deliberately no accessor for the raw bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct UserSymmetricKey([u8; 32]);

impl std::fmt::Debug for UserSymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("UserSymmetricKey(..)")
    }
}

impl UserSymmetricKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, EntropyError> {
        let mut key = [0u8; 32];
        rng.try_fill_bytes(&mut key)?;
        Ok(UserSymmetricKey(key))
    }

    fn cipher(&self) -> XChaCha20Poly1305 {
        XChaCha20Poly1305::new((&self.0).into())
    }
}

/// Same as [`UserSymmetricKey::generate`].
pub fn new_user_key<R: RngCore + CryptoRng>(rng: &mut R) -> Result<UserSymmetricKey, EntropyError> {
    UserSymmetricKey::generate(rng)
}

/// Encrypts a fresh beacon for `user_id` at time `t`. Salt and nonce are
/// drawn from `rng` on every call.
pub fn make_beacon<R: RngCore + CryptoRng>(
    key: &UserSymmetricKey,
    user_id: &DeviceId,
    t: Timestamp,
    rng: &mut R,
) -> Result<EncryptedBeacon, EntropyError> {
    make_beacon_with_extension(key, user_id, t, &[], rng)
}

/// [`make_beacon`] with an opaque trailer sealed alongside the plaintext.
pub fn make_beacon_with_extension<R: RngCore + CryptoRng>(
    key: &UserSymmetricKey,
    user_id: &DeviceId,
    t: Timestamp,
    extension: &[u8],
    rng: &mut R,
) -> Result<EncryptedBeacon, EntropyError> {
    let mut salt = [0u8; 16];
    rng.try_fill_bytes(&mut salt)?;
    let mut nonce = [0u8; BEACON_NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)?;

    let plain = PlainBeacon {
        user_id: user_id.clone(),
        timestamp: t,
        salt,
        extension: extension.to_vec(),
    };
    let ciphertext = key
        .cipher()
        .encrypt(
            XNonce::from_slice(&nonce),
            AeadPayload { msg: &plain.encode(), aad: BEACON_AAD },
        )
        .expect("XChaCha20-Poly1305 encryption of a short message cannot fail");
    Ok(EncryptedBeacon { nonce, ciphertext })
}

/// Returns the plaintext iff `eb` was sealed under `key`, is untampered and
/// carries the beacon magic. Garbage input is simply `None`.
pub fn try_decrypt(key: &UserSymmetricKey, eb: &EncryptedBeacon) -> Option<PlainBeacon> {
    let plain = key
        .cipher()
        .decrypt(
            XNonce::from_slice(&eb.nonce),
            AeadPayload { msg: &eb.ciphertext, aad: BEACON_AAD },
        )
        .ok()?;
    PlainBeacon::decode(&plain).ok()
}

/// Every published beacon this key can open, as `(index, plaintext)` in
/// input order.
pub fn check_exposure_encrypted(
    key: &UserSymmetricKey,
    published: &[EncryptedBeacon],
) -> Vec<(usize, PlainBeacon)> {
    let cipher_key = key.clone();
    published
        .par_iter()
        .enumerate()
        .filter_map(|(i, eb)| try_decrypt(&cipher_key, eb).map(|p| (i, p)))
        .collect()
}
