//! Protocol 2: random token beacons.
//!
//! Devices broadcast fresh 128-bit random tokens and remember both what they
//! sent and what they heard. Infected users publish what they *sent*; a
//! checker intersects that with what it *heard*.

use std::collections::HashSet;

use rand_core::{CryptoRng, RngCore};

use crate::types::{EntropyError, HeardRecord, Payload, RandomToken, Timestamp};

/// A uniformly random 128-bit token.
pub fn gen_token<R: RngCore + CryptoRng>(rng: &mut R) -> Result<RandomToken, EntropyError> {
    let mut bytes = [0u8; 16];
    rng.try_fill_bytes(&mut bytes)?;
    Ok(RandomToken::from_bytes(bytes))
}

/// `heard ∩ published`.
pub fn check_exposure_random(
    heard: &HashSet<RandomToken>,
    published: &HashSet<RandomToken>,
) -> HashSet<RandomToken> {
    let (small, large) = if heard.len() <= published.len() {
        (heard, published)
    } else {
        (published, heard)
    };
    small.iter().filter(|t| large.contains(t)).copied().collect()
}

/// Receive times of every heard token in `matches`, ascending. Duplicate
/// sightings each contribute their own time.
pub fn exposure_times(heard: &[HeardRecord], matches: &HashSet<RandomToken>) -> Vec<Timestamp> {
    let mut times: Vec<Timestamp> = heard
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Random(tok) if matches.contains(tok) => Some(r.heard_at),
            _ => None,
        })
        .collect();
    times.sort_unstable();
    times
}
