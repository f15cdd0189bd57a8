//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Every threshold is a constant below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use contain_core::certify::{issue_certificate, AuthorityKeyPair, InfectionCertificate, DEFAULT_VALIDITY_SECS};
use contain_core::client::{exchange, Phone};
use contain_core::encrypted::{make_beacon, new_user_key, try_decrypt};
use contain_core::random::gen_token;
use contain_core::sim::{simulate_epidemic, RunStats, Scenario, SimConfig, Simulator};
use contain_core::trace::{
    default_activity_profile, generate_grouped_trace, generate_synthetic_trace, EncounterRecord, EncounterTrace,
};
use contain_core::wire::{ExposureQuery, ExposureResponse, InfectedUpload, Protocol, PublishedBundle, UploadItems};
use contain_core::{DeviceId, Timestamp};
use contain_server::service::system_clock;
use contain_server::{serve_with_shutdown, PublicationMode, RequestKind, Service};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde_json::Value;

const ROUND_TRIP_TRIPLES: usize = 1_000;
const WRONG_KEY_TRIALS: usize = 10_000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);

const MICRO_SCENARIOS: usize = 50;
const MICRO_MAX_DEVICES: usize = 10;
const MICRO_MAX_ENCOUNTERS: usize = 100;
const MICRO_BUDGET: Duration = Duration::from_secs(30);

const BOUNDARY_REPS: usize = 1_000;
const REACHABILITY_TRACES: usize = 20;

const COUPLING_PS: [f64; 3] = [0.01, 0.02, 0.05];
const COUPLING_REPS: u64 = 100;

const NESTING_REPS: u64 = 100;

const FIG_DEVICES: usize = 100;
const FIG3_RECORDS: usize = 60_000;
const FIG3_PS: [f64; 4] = [0.005, 0.01, 0.02, 0.05];
const FIG3_INITIAL: [usize; 3] = [1, 2, 5];
const FIG_REPS: usize = 1_000;
const FIG_SEED: u64 = 7;
const FIG_TRACE_SEED: u64 = 1;
const FIG_BUDGET: Duration = Duration::from_secs(300);

/// The heterogeneous trace: communities busy at different hours.
const FIG4_RECORDS: usize = 5_000;
const FIG4_GROUPS: usize = 4;
const FIG4_P: f64 = 0.02;
const FIG4_INITIAL: usize = 2;
const FIG4_ORDER_KS: [usize; 3] = [4, 8, 12];
const FIG4_DOMINANCE_KS: [usize; 6] = [2, 4, 6, 8, 10, 12];
const CI_LEVEL: f64 = 0.90;

const PRIVACY_BEACONS: usize = 1_000;

const SERVER_BUDGET: Duration = Duration::from_secs(10);

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
type Part = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < budget, "took {took:.2?}, budget {budget:?}");
    Ok(took)
}

fn id(s: impl Into<String>) -> DeviceId {
    DeviceId::new(s).unwrap()
}

// 1 -------------------------------------------------------------------------

fn round_trip() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut beacons = Vec::with_capacity(ROUND_TRIP_TRIPLES);
    for i in 0..ROUND_TRIP_TRIPLES {
        let key = new_user_key(&mut rng).unwrap();
        let len = rng.gen_range(1..=64);
        let user: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        let user = id(format!("{user}{i}").chars().take(64).collect::<String>());
        let t = Timestamp(rng.gen());
        let eb = make_beacon(&key, &user, t, &mut rng).unwrap();
        let plain = try_decrypt(&key, &eb).ok_or_else(|| format!("triple {i} did not decrypt"))?;
        ensure!(plain.user_id == user && plain.timestamp == t, "triple {i} decrypted to the wrong content");
        beacons.push(eb);
    }
    let mut wrong = 0;
    for _ in 0..WRONG_KEY_TRIALS {
        let key = new_user_key(&mut rng).unwrap();
        let eb = beacons.choose(&mut rng).unwrap();
        if try_decrypt(&key, eb).is_some() {
            wrong += 1;
        }
    }
    ensure!(wrong == 0, "{wrong} wrong-key decryptions matched");
    let took = within(start, ROUND_TRIP_BUDGET)?;
    Ok(format!("{ROUND_TRIP_TRIPLES} round trips exact, 0/{WRONG_KEY_TRIALS} wrong-key matches, {took:.2?}"))
}

// 2 -------------------------------------------------------------------------

/// (checker, infected) -> sorted contact times.
type Detections = BTreeMap<(usize, usize), Vec<Timestamp>>;

fn micro_scenario(rng: &mut ChaCha20Rng, authority: &AuthorityKeyPair) -> Result<(usize, usize), String> {
    let n = rng.gen_range(2..=MICRO_MAX_DEVICES);
    let m = rng.gen_range(1..=MICRO_MAX_ENCOUNTERS);
    let encounters: Vec<(usize, usize, Timestamp)> = (0..m)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            (a, b, Timestamp(rng.gen_range(0..10_000)))
        })
        .collect();
    let n_inf = rng.gen_range(1..=n.min(3));
    let infected: BTreeSet<usize> = rand::seq::index::sample(rng, n, n_inf).into_iter().collect();

    let mut oracle: Detections = BTreeMap::new();
    for &(a, b, t) in &encounters {
        for (checker, source) in [(a, b), (b, a)] {
            if infected.contains(&source) && checker != source {
                oracle.entry((checker, source)).or_default().push(t);
            }
        }
    }
    oracle.values_mut().for_each(|v| v.sort());

    let mut results = Vec::new();
    for protocol in [Protocol::Encrypted, Protocol::Random] {
        let mut phones: Vec<Phone> = (0..n).map(|i| Phone::new(id(format!("u{i}")), rng).unwrap()).collect();
        for &(a, b, t) in &encounters {
            let (lo, hi) = (a.min(b), a.max(b));
            let (left, right) = phones.split_at_mut(hi);
            exchange(&mut left[lo], &mut right[0], protocol, t, rng).unwrap();
        }
        let service = Service::in_memory(authority.public(), PublicationMode::Public);
        let mut found: Detections = BTreeMap::new();
        for &i in &infected {
            let up = phones[i].prepare_upload(protocol, certificate(authority, &phones[i]));
            let before = service.state().version();
            service.submit(up).unwrap();
            let delta = service.published(before);
            for (j, phone) in phones.iter().enumerate() {
                if j == i {
                    continue;
                }
                let times = phone.check_bundle(&delta);
                if !times.is_empty() {
                    found.insert((j, i), times);
                }
            }
        }
        ensure!(found == oracle, "{protocol:?} detections differ from the pairwise oracle");
        results.push(found);
    }
    ensure!(results[0] == results[1], "protocols disagree");
    Ok((m, oracle.len()))
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let mut rng_auth = ChaCha20Rng::seed_from_u64(203);
    let authority = AuthorityKeyPair::generate(&mut rng_auth).unwrap();
    let (mut encounters, mut pairs) = (0, 0);
    for s in 0..MICRO_SCENARIOS {
        let (m, p) = micro_scenario(&mut rng, &authority).map_err(|e| format!("scenario {s}: {e}"))?;
        encounters += m;
        pairs += p;
    }
    let took = within(start, MICRO_BUDGET)?;
    Ok(format!(
        "{MICRO_SCENARIOS} scenarios, {encounters} encounters, {pairs} detected pairs identical across oracle/P1/P2, {took:.2?}"
    ))
}

// 3 -------------------------------------------------------------------------

/// Earliest strict-time arrival by repeated relaxation.
fn reachability(trace: &EncounterTrace, initial: &BTreeSet<DeviceId>) -> BTreeMap<DeviceId, Timestamp> {
    let mut time: BTreeMap<DeviceId, Timestamp> = initial.iter().map(|d| (d.clone(), trace.start())).collect();
    loop {
        let mut changed = false;
        for r in trace.records() {
            for (src, dst) in [(r.a(), r.b()), (r.b(), r.a())] {
                let can = initial.contains(src) || time.get(src).is_some_and(|ts| *ts < r.t());
                if can && !initial.contains(dst) && time.get(dst).is_none_or(|td| r.t() < *td) {
                    time.insert(dst.clone(), r.t());
                    changed = true;
                }
            }
        }
        if !changed {
            return time;
        }
    }
}

fn small_trace(rng: &mut ChaCha8Rng) -> EncounterTrace {
    let n = rng.gen_range(3..=15);
    let m = rng.gen_range(5..=80);
    let names: Vec<DeviceId> = (0..n).map(|i| id(format!("n{i}"))).collect();
    let records = (0..m)
        .filter_map(|_| {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            // Few distinct times so that equal timestamps are common.
            EncounterRecord::new(names[a].clone(), names[b].clone(), Timestamp(rng.gen_range(0..20)))
        })
        .collect();
    EncounterTrace::new(records, names)
}

fn boundaries(fig3: &Simulator) -> Check {
    let cfg = SimConfig { contagiousness_p: 0.0, n_initial_infected: 2, repetitions: BOUNDARY_REPS, seed: 3, ..Default::default() };
    for r in 0..BOUNDARY_REPS as u64 {
        let out = fig3.replicate(&cfg, r).map_err(|e| e.to_string())?;
        ensure!(out.infected == out.initial, "p=0 replication {r} infected {} devices", out.infected.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut reached = 0;
    for i in 0..REACHABILITY_TRACES {
        let trace = small_trace(&mut rng);
        let devices: Vec<DeviceId> = trace.devices().iter().cloned().collect();
        let k = rng.gen_range(1..=2.min(devices.len()));
        let initial: BTreeSet<DeviceId> = devices.choose_multiple(&mut rng, k).cloned().collect();
        let got = simulate_epidemic(&trace, 1.0, &initial, &mut rng).map_err(|e| e.to_string())?;
        let want = reachability(&trace, &initial);
        ensure!(got.infection_time == want, "trace {i}: p=1 spread differs from the reachability closure");
        reached += want.len();
    }
    Ok(format!(
        "p=0 kept exactly the initial set in {BOUNDARY_REPS}/{BOUNDARY_REPS} replications; p=1 matched the closure (sets and times) on {REACHABILITY_TRACES} traces ({reached} devices reached)"
    ))
}

// 4 -------------------------------------------------------------------------

fn coupling(fig3: &Simulator) -> Check {
    let mut checked = 0;
    for r in 0..COUPLING_REPS {
        let sets: Vec<BTreeSet<DeviceId>> = COUPLING_PS
            .iter()
            .map(|&p| {
                let cfg = SimConfig { contagiousness_p: p, seed: 4, ..Default::default() };
                fig3.replicate(&cfg, r).map(|o| o.infected)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for w in sets.windows(2) {
            ensure!(w[0].is_subset(&w[1]), "replication {r}: infected sets not nested in p");
            checked += 1;
        }
    }
    Ok(format!("{checked} nested pairs over {COUPLING_REPS} replications, p in {COUPLING_PS:?}, 0 violations"))
}

// 5 -------------------------------------------------------------------------

fn schedule_nesting(traces: &[(&str, &Simulator)]) -> Check {
    let mut pairs = 0;
    for (name, sim) in traces {
        for scenario in [Scenario::Centralized, Scenario::Decentralized] {
            for r in 0..NESTING_REPS {
                let mut prev: Option<BTreeSet<DeviceId>> = None;
                for k in 0..=24 {
                    let cfg = SimConfig { scenario, active_hours_k: k, seed: 5, ..Default::default() };
                    let cur = sim.replicate(&cfg, r).map_err(|e| e.to_string())?.test_required;
                    if let Some(p) = &prev {
                        ensure!(p.is_subset(&cur), "{name} {scenario} replication {r}: k={} not within k={k}", k - 1);
                        pairs += 1;
                    }
                    prev = Some(cur);
                }
            }
        }
    }
    Ok(format!("{pairs} consecutive-k pairs nested over {NESTING_REPS} replications on {} traces, 0 violations", traces.len()))
}

// 6 -------------------------------------------------------------------------

fn fig3_shape(fig3: &Simulator) -> Check {
    let start = Instant::now();
    let mut table: BTreeMap<(usize, usize), RunStats> = BTreeMap::new();
    for (pi, &p) in FIG3_PS.iter().enumerate() {
        for &n in &FIG3_INITIAL {
            let cfg = SimConfig {
                contagiousness_p: p,
                n_initial_infected: n,
                repetitions: FIG_REPS,
                seed: FIG_SEED,
                ci_level: CI_LEVEL,
                ..Default::default()
            };
            table.insert((pi, n), fig3.run(&cfg).map_err(|e| e.to_string())?.0);
        }
    }
    let mut rows = Vec::new();
    for &n in &FIG3_INITIAL {
        let cells: Vec<String> = (0..FIG3_PS.len())
            .map(|pi| {
                let s = table[&(pi, n)];
                format!("{:.1}±{:.2}", s.mean, s.half_width())
            })
            .collect();
        rows.push(format!("n={n}: {}", cells.join(" ")));
    }
    for row in &rows {
        println!("      {row}");
    }
    for &n in &FIG3_INITIAL {
        for pi in 1..FIG3_PS.len() {
            ensure!(
                table[&(pi, n)].mean > table[&(pi - 1, n)].mean,
                "n={n}: mean not increasing from p={} to p={}",
                FIG3_PS[pi - 1],
                FIG3_PS[pi]
            );
        }
    }
    for pi in 0..FIG3_PS.len() {
        for w in FIG3_INITIAL.windows(2) {
            ensure!(
                table[&(pi, w[1])].mean > table[&(pi, w[0])].mean,
                "p={}: mean not increasing from n={} to n={}",
                FIG3_PS[pi],
                w[0],
                w[1]
            );
        }
    }
    let took = within(start, FIG_BUDGET)?;
    Ok(format!("strictly increasing in p and in n_initial ({} cells, {FIG_REPS} reps each), {took:.2?}", table.len()))
}

// 7 -------------------------------------------------------------------------

fn detect_curve(sim: &Simulator, scenario: Scenario) -> Result<Vec<RunStats>, String> {
    (0..=scenario.max_hours())
        .map(|k| {
            let cfg = SimConfig {
                contagiousness_p: FIG4_P,
                n_initial_infected: FIG4_INITIAL,
                scenario,
                active_hours_k: k,
                repetitions: FIG_REPS,
                seed: FIG_SEED,
                ci_level: CI_LEVEL,
                ..Default::default()
            };
            sim.run(&cfg).map(|r| r.1).map_err(|e| e.to_string())
        })
        .collect()
}

/// `Ok(true)` if `hi` is above `lo` with disjoint intervals, `Ok(false)` for
/// overlapping intervals (a tie), `Err` if `lo` is separated above `hi`.
fn ordered(hi: &RunStats, lo: &RunStats) -> Result<bool, ()> {
    if hi.ci_low > lo.ci_high {
        Ok(true)
    } else if lo.ci_low > hi.ci_high {
        Err(())
    } else {
        Ok(false)
    }
}

fn fig4_shape(traces: &[(&str, &Simulator)]) -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut hetero = BTreeMap::new();
    for (name, sim) in traces {
        for scenario in Scenario::ALL {
            let curve = detect_curve(sim, scenario)?;
            for k in 1..curve.len() {
                ensure!(
                    curve[k].mean >= curve[k - 1].mean,
                    "{name} {scenario}: mean falls from k={} to k={k}",
                    k - 1
                );
            }
            if *name == "heterogeneous" {
                hetero.insert(scenario, curve);
            }
        }
    }
    let (dec, cen, ran) = (
        &hetero[&Scenario::Decentralized],
        &hetero[&Scenario::Centralized],
        &hetero[&Scenario::Random],
    );
    for &k in &FIG4_ORDER_KS {
        println!(
            "      k={k:2}: decentralized {:.2}±{:.2}  centralized {:.2}±{:.2}  random {:.2}±{:.2}",
            dec[k].mean,
            dec[k].half_width(),
            cen[k].mean,
            cen[k].half_width(),
            ran[k].mean,
            ran[k].half_width()
        );
        for (hi_name, hi, lo_name, lo) in [("decentralized", &dec[k], "centralized", &cen[k]), ("centralized", &cen[k], "random", &ran[k])] {
            match ordered(hi, lo) {
                Ok(true) => {}
                Ok(false) => notes.push(format!("tie at k={k}: {hi_name} vs {lo_name} (90% CIs overlap)")),
                Err(()) => return Err(format!("k={k}: {lo_name} is significantly above {hi_name}")),
            }
        }
    }
    for &k in &FIG4_DOMINANCE_KS {
        ensure!(dec[k].mean >= cen[k].mean, "k={k}: decentralized mean below centralized");
    }
    let took = within(start, FIG_BUDGET)?;
    let ties = if notes.is_empty() { "no ties".to_string() } else { notes.join("; ") };
    Ok(format!("non-decreasing in k on {} traces; ordering holds at k={FIG4_ORDER_KS:?} ({ties}), {took:.2?}", traces.len()))
}

// 8 -------------------------------------------------------------------------

fn certificate(authority: &AuthorityKeyPair, phone: &Phone) -> InfectionCertificate {
    let now = system_clock();
    issue_certificate(
        authority,
        &phone.identity().public_key_bytes(),
        Timestamp(now.0 - 60),
        now.saturating_add(DEFAULT_VALIDITY_SECS),
    )
    .unwrap()
}

struct Running {
    url: String,
    service: Arc<Service>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl Running {
    fn start(service: Service) -> Self {
        let service = Arc::new(service);
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = serve_with_shutdown(listener, Arc::clone(&service), async {
            let _ = rx.await;
        });
        let thread = thread::spawn(move || rt.block_on(server).unwrap());
        Running { url, service, stop: Some(tx), thread: Some(thread) }
    }

    fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let resp = match ureq::post(&format!("{}{path}", self.url)).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => panic!("{e}"),
        };
        (resp.status(), resp.into_json().unwrap())
    }

    fn published_raw(&self) -> Value {
        ureq::get(&format!("{}/v1/published", self.url)).call().unwrap().into_json().unwrap()
    }

    fn published(&self) -> PublishedBundle {
        serde_json::from_value(self.published_raw()).unwrap()
    }

    fn upload(&self, up: &InfectedUpload) -> (u16, Value) {
        self.post("/v1/infected", &serde_json::to_value(up).unwrap())
    }

    fn check(&self, q: &ExposureQuery) -> Value {
        let (status, body) = self.post("/v1/check", &serde_json::to_value(q).unwrap());
        assert_eq!(status, 200);
        body
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default()
}

fn names(ks: &[&str]) -> BTreeSet<String> {
    ks.iter().map(|s| s.to_string()).collect()
}

fn p1_unlinkable() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(801);
    let key = new_user_key(&mut rng).unwrap();
    let user = id("alice-phone-0042");
    let mut seen = BTreeSet::new();
    for i in 0..PRIVACY_BEACONS {
        let bytes = make_beacon(&key, &user, Timestamp(i as u64), &mut rng).unwrap().to_bytes();
        ensure!(!bytes.windows(user.as_bytes().len()).any(|w| w == user.as_bytes()), "beacon {i} contains the user id");
        ensure!(seen.insert(bytes), "beacon {i} repeats an earlier one");
    }
    let tokens: BTreeSet<_> = (0..PRIVACY_BEACONS).map(|_| gen_token(&mut rng).unwrap()).collect();
    ensure!(tokens.len() == PRIVACY_BEACONS, "random tokens repeat");
    Ok(format!("{PRIVACY_BEACONS} beacons distinct and id-free; tokens distinct"))
}

fn p2_no_upload() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(802);
    let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
    let server = Running::start(Service::in_memory(authority.public(), PublicationMode::Public));
    let mut me = Phone::new(id("me"), &mut rng).unwrap();
    let mut other = Phone::new(id("other"), &mut rng).unwrap();
    for (t, protocol) in [(1, Protocol::Encrypted), (2, Protocol::Random)] {
        exchange(&mut me, &mut other, protocol, Timestamp(t), &mut rng).unwrap();
    }
    let bundle = server.published();
    ensure!(me.check_bundle(&bundle).is_empty(), "empty bundle matched");
    server.check(&me.exposure_query("anon"));
    let kinds = server.service.requests();
    ensure!(!kinds.contains(&RequestKind::Upload), "non-infected client uploaded");
    Ok(format!("full lifecycle issued only {kinds:?}"))
}

fn p3_p4_gated() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(803);
    let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
    let rogue = AuthorityKeyPair::generate(&mut rng).unwrap();
    let server = Running::start(Service::in_memory(authority.public(), PublicationMode::Public));
    let mut phones: Vec<Phone> = (0..6).map(|i| Phone::new(id(format!("p{i}")), &mut rng).unwrap()).collect();
    for t in 0..5 {
        for i in 0..5 {
            let (l, r) = phones.split_at_mut(i + 1);
            exchange(&mut l[i], &mut r[0], Protocol::Random, Timestamp(t), &mut rng).unwrap();
        }
    }

    // Only rejected uploads so far: nothing may leak (P4).
    let mut bad = phones[0].prepare_upload(Protocol::Random, certificate(&authority, &phones[0]));
    bad.upload_signature[0] ^= 1;
    let forged = phones[1].prepare_upload(Protocol::Random, certificate(&rogue, &phones[1]));
    for up in [&bad, &forged] {
        ensure!(server.upload(up).0 == 400, "invalid upload accepted");
    }
    let b = server.published();
    ensure!(b.is_empty() && b.version == 0, "items published with zero accepted uploads");
    for p in &phones {
        ensure!(server.check(&p.exposure_query("q"))["exposed"] == false, "exposed=true with zero accepted uploads");
    }

    // Mixed valid and invalid uploads: every published item is audited (P3).
    for p in &phones[2..4] {
        ensure!(server.upload(&p.prepare_upload(Protocol::Random, certificate(&authority, p))).0 == 200, "valid upload rejected");
    }
    ensure!(server.upload(&forged).0 == 400, "forged upload accepted");
    let bundle = server.published();
    let state = server.service.state();
    let audited: BTreeSet<_> = state
        .audit_log()
        .iter()
        .flat_map(|u| match &u.items {
            UploadItems::Random(v) => v.clone(),
            UploadItems::Encrypted(_) => vec![],
        })
        .collect();
    ensure!(bundle.random_items.iter().all(|t| audited.contains(t)), "published item missing from audit log");
    ensure!(state.audit_log().iter().all(|u| u.signature_is_valid()), "audit log holds an unsigned upload");
    ensure!(bundle.version == 2, "version {} after 2 accepted uploads", bundle.version);
    Ok(format!("0 items leaked before acceptance; {} published items all audited", bundle.random_items.len()))
}

fn p5_p7_schemas() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(805);
    let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
    let server = Running::start(Service::in_memory(authority.public(), PublicationMode::Public));
    let mut a = Phone::new(id("a"), &mut rng).unwrap();
    let mut c = Phone::new(id("c"), &mut rng).unwrap();
    exchange(&mut a, &mut c, Protocol::Random, Timestamp(1), &mut rng).unwrap();
    exchange(&mut a, &mut c, Protocol::Random, Timestamp(2), &mut rng).unwrap();
    server.upload(&a.prepare_upload(Protocol::Random, certificate(&authority, &a)));

    // P5: no parameters, headers or identifiers needed to read the bundle.
    let bundle = server.published_raw();
    ensure!(keys(&bundle) == names(&["version", "encrypted", "random"]), "bundle fields {:?}", keys(&bundle));
    let q = serde_json::to_value(c.exposure_query("x")).unwrap();
    ensure!(keys(&q) == names(&["anon_id", "tokens"]), "query fields {:?}", keys(&q));

    // P7: two matches still produce one bare boolean.
    let resp = server.check(&c.exposure_query("x"));
    ensure!(resp == serde_json::json!({ "exposed": true }), "check response {resp}");
    let parsed: ExposureResponse = serde_json::from_value(resp).map_err(|e| e.to_string())?;
    ensure!(parsed.exposed, "not exposed");
    ensure!(
        serde_json::from_value::<ExposureResponse>(serde_json::json!({ "exposed": true, "count": 2 })).is_err(),
        "extra response fields accepted"
    );
    Ok("bundle {version, encrypted, random}; query {anon_id, tokens}; response {exposed}".into())
}

fn p6_certificate_schema() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(806);
    let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
    let a = Phone::new(id("alice"), &mut rng).unwrap();
    let cert = certificate(&authority, &a);
    let text = serde_json::to_string(&cert).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let order: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let expected = ["subject_public_key", "issued_at", "expires_at", "authority_signature"];
    ensure!(names(&order) == names(&expected), "certificate fields {order:?}");
    ensure!(text.find("subject_public_key") < text.find("authority_signature"), "field order");
    ensure!(!text.contains("alice"), "certificate names its holder");
    let mut extra = v.clone();
    extra["name"] = Value::String("alice".into());
    ensure!(serde_json::from_value::<InfectionCertificate>(extra).is_err(), "extra certificate field accepted");
    Ok("exactly 4 fields, no identity strings, extra fields refused".into())
}

fn privacy() -> Check {
    let parts: [Part; 5] = [
        ("P1", p1_unlinkable),
        ("P2", p2_no_upload),
        ("P3/P4", p3_p4_gated),
        ("P5/P7", p5_p7_schemas),
        ("P6", p6_certificate_schema),
    ];
    for (name, f) in parts {
        let detail = f().map_err(|e| format!("{name}: {e}"))?;
        println!("      {name}: {detail}");
    }
    Ok("P1-P7 hold".into())
}

// 9 -------------------------------------------------------------------------

fn server_integration() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(901);
    let authority = AuthorityKeyPair::generate(&mut rng).unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let open = || Service::open(dir.path(), authority.public(), PublicationMode::Public).map_err(|e| e.to_string());

    let mut a = Phone::new(id("a"), &mut rng).unwrap();
    let mut b = Phone::new(id("b"), &mut rng).unwrap();
    let mut c = Phone::new(id("c"), &mut rng).unwrap();
    exchange(&mut a, &mut c, Protocol::Random, Timestamp(10), &mut rng).unwrap();
    exchange(&mut b, &mut c, Protocol::Random, Timestamp(20), &mut rng).unwrap();

    let before = {
        let server = Running::start(open()?);
        let mut tampered = a.prepare_upload(Protocol::Random, certificate(&authority, &a));
        tampered.upload_signature[3] ^= 0x10;
        let (status, body) = server.upload(&tampered);
        ensure!(status == 400 && body["reason"] == "bad_signature", "tampered upload: {status} {body}");
        ensure!(server.published().is_empty(), "tampered upload published items");

        let (status, body) = server.upload(&a.prepare_upload(Protocol::Random, certificate(&authority, &a)));
        ensure!(status == 200 && body["version"] == 1, "valid upload: {status} {body}");
        let bundle = server.published();
        ensure!(!c.check_bundle(&bundle).is_empty(), "C missed the exposure");
        ensure!(b.check_bundle(&bundle).is_empty(), "B falsely exposed");
        ensure!(server.check(&c.exposure_query("c"))["exposed"] == true, "private check missed C");
        bundle
    };
    let server = Running::start(open()?);
    ensure!(server.published() == before, "bundle changed across restart");
    ensure!(server.check(&c.exposure_query("c"))["exposed"] == true, "private check lost after restart");
    drop(server);
    let took = within(start, SERVER_BUDGET)?;
    Ok(format!("upload, publish, check, tamper rejection and restart recovery, {took:.2?}"))
}

fn main() -> ExitCode {
    println!("preparing traces");
    let fig3_trace =
        generate_synthetic_trace(FIG_DEVICES, FIG3_RECORDS, &default_activity_profile(), FIG_TRACE_SEED).unwrap();
    let hetero_trace = generate_grouped_trace(FIG_DEVICES, FIG4_RECORDS, FIG4_GROUPS, FIG_TRACE_SEED).unwrap();
    let fig3 = Simulator::new(&fig3_trace);
    let hetero = Simulator::new(&hetero_trace);
    let both = [("synthetic", &fig3), ("heterogeneous", &hetero)];

    let criteria: Vec<Criterion> = vec![
        ("protocol round trip and key separation", Box::new(round_trip)),
        ("exposure detection matches the pairwise oracle", Box::new(oracle_equivalence)),
        ("epidemic boundaries p=0 and p=1", Box::new(|| boundaries(&fig3))),
        ("coupling monotonicity in p", Box::new(|| coupling(&fig3))),
        ("schedule nesting in k", Box::new(|| schedule_nesting(&both))),
        ("spread shape over p and n_initial", Box::new(|| fig3_shape(&fig3))),
        ("detection shape over k and scenario", Box::new(|| fig4_shape(&both))),
        ("privacy properties", Box::new(privacy)),
        ("server integration", Box::new(server_integration)),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
