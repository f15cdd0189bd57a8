//! A phone running the app: emits beacons, logs what it sends and hears,
//! and checks published data. Used by the demo and end-to-end tests.

use std::collections::HashSet;

use rand_core::{CryptoRng, RngCore};

use crate::certify::{InfectionCertificate, UserKeyPair};
use crate::encrypted::{check_exposure_encrypted, make_beacon, UserSymmetricKey};
use crate::random::{check_exposure_random, exposure_times, gen_token};
use crate::types::{
    DeviceId, EncryptedBeacon, EntropyError, HeardRecord, Payload, RandomToken, SentRecord,
    Timestamp,
};
use crate::wire::{ExposureQuery, InfectedUpload, Protocol, PublishedBundle, UploadItems};

pub struct Phone {
    id: DeviceId,
    beacon_key: UserSymmetricKey,
    identity: UserKeyPair,
    sent: Vec<SentRecord>,
    heard: Vec<HeardRecord>,
}

impl Phone {
    pub fn new<R: RngCore + CryptoRng>(id: DeviceId, rng: &mut R) -> Result<Self, EntropyError> {
        Ok(Phone {
            id,
            beacon_key: UserSymmetricKey::generate(rng)?,
            identity: UserKeyPair::generate(rng)?,
            sent: Vec::new(),
            heard: Vec::new(),
        })
    }

    pub fn id(&self) -> &DeviceId {
        &self.id
    }

    /// The pseudonymous key an authority would certify.
    pub fn identity(&self) -> &UserKeyPair {
        &self.identity
    }

    pub fn sent_log(&self) -> &[SentRecord] {
        &self.sent
    }

    pub fn heard_log(&self) -> &[HeardRecord] {
        &self.heard
    }

    /// Emits one beacon of the given protocol and logs it.
    pub fn emit<R: RngCore + CryptoRng>(
        &mut self,
        protocol: Protocol,
        t: Timestamp,
        rng: &mut R,
    ) -> Result<Payload, EntropyError> {
        let payload = match protocol {
            Protocol::Encrypted => Payload::Encrypted(make_beacon(&self.beacon_key, &self.id, t, rng)?),
            Protocol::Random => Payload::Random(gen_token(rng)?),
        };
        self.sent.push(SentRecord { payload: payload.clone(), sent_at: t });
        Ok(payload)
    }

    pub fn hear(&mut self, payload: Payload, t: Timestamp) {
        self.heard.push(HeardRecord { payload, heard_at: t });
    }

    /// The items this phone would upload once infected: heard ciphertexts for
    /// Protocol 1, own sent tokens for Protocol 2.
    pub fn upload_items(&self, protocol: Protocol) -> UploadItems {
        match protocol {
            Protocol::Encrypted => UploadItems::Encrypted(
                self.heard
                    .iter()
                    .filter_map(|r| match &r.payload {
                        Payload::Encrypted(eb) => Some(eb.clone()),
                        _ => None,
                    })
                    .collect(),
            ),
            Protocol::Random => UploadItems::Random(
                self.sent
                    .iter()
                    .filter_map(|r| match r.payload {
                        Payload::Random(t) => Some(t),
                        _ => None,
                    })
                    .collect(),
            ),
        }
    }

    pub fn prepare_upload(&self, protocol: Protocol, certificate: InfectionCertificate) -> InfectedUpload {
        InfectedUpload::new(certificate, self.upload_items(protocol), &self.identity)
    }

    pub fn heard_tokens(&self) -> HashSet<RandomToken> {
        self.heard
            .iter()
            .filter_map(|r| match r.payload {
                Payload::Random(t) => Some(t),
                _ => None,
            })
            .collect()
    }

    /// Times at which this phone was near someone whose data is in the
    /// published ciphertexts (Protocol 1), ascending.
    pub fn check_encrypted(&self, published: &[EncryptedBeacon]) -> Vec<Timestamp> {
        let mut times: Vec<_> = check_exposure_encrypted(&self.beacon_key, published)
            .into_iter()
            .map(|(_, plain)| plain.timestamp)
            .collect();
        times.sort_unstable();
        times
    }

    /// Times at which this phone heard a published token (Protocol 2), ascending.
    pub fn check_random(&self, published: &[RandomToken]) -> Vec<Timestamp> {
        let published: HashSet<_> = published.iter().copied().collect();
        let matches = check_exposure_random(&self.heard_tokens(), &published);
        exposure_times(&self.heard, &matches)
    }

    /// Checks a bundle with whichever protocol's items it holds.
    pub fn check_bundle(&self, bundle: &PublishedBundle) -> Vec<Timestamp> {
        let mut times = self.check_encrypted(&bundle.encrypted_items);
        times.extend(self.check_random(&bundle.random_items));
        times.sort_unstable();
        times
    }

    pub fn exposure_query(&self, anon_id: impl Into<String>) -> ExposureQuery {
        ExposureQuery { anon_id: anon_id.into(), tokens: self.heard_tokens().into_iter().collect() }
    }
}

/// One proximity contact: both phones beacon and both hear each other.
pub fn exchange<R: RngCore + CryptoRng>(
    a: &mut Phone,
    b: &mut Phone,
    protocol: Protocol,
    t: Timestamp,
    rng: &mut R,
) -> Result<(), EntropyError> {
    let from_a = a.emit(protocol, t, rng)?;
    let from_b = b.emit(protocol, t, rng)?;
    b.hear(from_a, t);
    a.hear(from_b, t);
    Ok(())
}
