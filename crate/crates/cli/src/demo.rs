//! Three users, one contact graph, both protocols: A is infected and met C;
//! B only met C.

use std::io::Write;
use std::sync::Arc;

use anyhow::Result;
use contain_core::certify::{issue_certificate, AuthorityKeyPair, DEFAULT_VALIDITY_SECS};
use contain_core::client::{exchange, Phone};
use contain_core::trace::SYNTHETIC_EPOCH;
use contain_core::wire::Protocol;
use contain_core::{DeviceId, Timestamp};
use contain_server::{PublicationMode, Service, SubmitOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn at(hours: u64) -> Timestamp {
    SYNTHETIC_EPOCH.saturating_add(hours * 3600)
}

fn clock(t: Timestamp) -> String {
    format!("day {} {:02}:00", (t.0 - SYNTHETIC_EPOCH.0) / 86_400, t.slot())
}

/// Runs the scenario and writes the transcript. Returns `true` iff C, and
/// only C, learns of the exposure.
pub fn run(protocol: Protocol, seed: u64, out: &mut impl Write) -> Result<bool> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let authority = AuthorityKeyPair::generate(&mut rng)?;
    let now = at(72);
    let service = Service::in_memory(authority.public(), PublicationMode::Public).with_clock(Arc::new(move || now));
    service.start_serving();

    let name = match protocol {
        Protocol::Encrypted => "protocol 1: encrypted beacons",
        Protocol::Random => "protocol 2: random tokens",
    };
    writeln!(out, "== {name} ==")?;
    let mut a = Phone::new(DeviceId::new("A")?, &mut rng)?;
    let mut b = Phone::new(DeviceId::new("B")?, &mut rng)?;
    let mut c = Phone::new(DeviceId::new("C")?, &mut rng)?;

    let t_ac = at(9);
    exchange(&mut a, &mut c, protocol, t_ac, &mut rng)?;
    writeln!(out, "[{}] A and C are near each other and exchange beacons", clock(t_ac))?;
    let t_bc = at(24 + 14);
    exchange(&mut b, &mut c, protocol, t_bc, &mut rng)?;
    writeln!(out, "[{}] B and C are near each other and exchange beacons", clock(t_bc))?;
    for p in [&a, &b, &c] {
        writeln!(out, "    {} has sent {} and heard {} beacon(s)", p.id(), p.sent_log().len(), p.heard_log().len())?;
    }

    writeln!(out, "[{}] A tests positive", clock(now))?;
    let cert = issue_certificate(&authority, &a.identity().public_key_bytes(), now, now.saturating_add(DEFAULT_VALIDITY_SECS))?;
    writeln!(out, "    the authority certifies A's public key until {}", clock(cert.expires_at))?;

    let upload = a.prepare_upload(protocol, cert);
    let what = match protocol {
        Protocol::Encrypted => "beacons A heard",
        Protocol::Random => "tokens A sent",
    };
    writeln!(out, "    A opts in and uploads {} item(s): the {what}", upload.items.len())?;
    match service.submit(upload)? {
        SubmitOutcome::Accepted { version } => writeln!(out, "    server: accepted, bundle version {version}")?,
        SubmitOutcome::Rejected(reason) => {
            writeln!(out, "    server: rejected ({reason})")?;
            return Ok(false);
        }
    }

    let bundle = service.published(0);
    writeln!(
        out,
        "    server publishes {} encrypted and {} random item(s)",
        bundle.encrypted_items.len(),
        bundle.random_items.len()
    )?;

    let mut verdicts = Vec::new();
    for p in [&b, &c] {
        let times = p.check_bundle(&bundle);
        let how = match protocol {
            Protocol::Encrypted => "decrypts the published beacons with its own key",
            Protocol::Random => "intersects the published tokens with what it heard",
        };
        let result = match times.first() {
            Some(t) => format!("contact with an infected user at {}", clock(*t)),
            None => "no match".to_string(),
        };
        writeln!(out, "    {} {how}: {result}", p.id())?;
        if protocol == Protocol::Random {
            let private = service.check(&p.exposure_query(format!("anon-{}", verdicts.len())));
            writeln!(out, "    {} asks the server privately: exposed = {}", p.id(), private.exposed)?;
        }
        verdicts.push(!times.is_empty());
    }
    let (b_exposed, c_exposed) = (verdicts[0], verdicts[1]);
    writeln!(out, "user C exposed: {c_exposed}, user B exposed: {b_exposed}")?;
    Ok(c_exposed && !b_exposed)
}
