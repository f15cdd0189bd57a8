//! Encounter traces: parsing, per-slot statistics and synthetic generators.
//!
//! The on-disk format is line oriented:
//!
//! ```text
//! # comment
//! device_a,device_b,unix_seconds
//! device_c
//! ```
//!
//! A three-field line is one symmetric encounter. A single-field line
//! declares a device that has no encounters (written only for such devices,
//! so generated traces with isolated devices survive a round trip).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{slot_of, DeviceId, Timestamp, SECONDS_PER_DAY, SECONDS_PER_SLOT, SLOTS_PER_DAY};

/// Midnight UTC, Monday 2016-08-08. Synthetic traces start here.
pub const SYNTHETIC_EPOCH: Timestamp = Timestamp(1_470_614_400);
pub const SYNTHETIC_DAYS: u64 = 7;

/// Popularity exponent of the synthetic generators: device of rank `r`
/// (0-based) is picked with weight `(r + 1)^-POPULARITY_EXPONENT`.
pub const POPULARITY_EXPONENT: f64 = 2.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace contains no encounters or devices")]
    Empty,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A symmetric contact between two distinct devices. Stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EncounterRecord {
    // Field order gives the (t, a, b) sort order.
    t: Timestamp,
    a: DeviceId,
    b: DeviceId,
}

impl EncounterRecord {
    /// `None` for a self-encounter.
    pub fn new(x: DeviceId, y: DeviceId, t: Timestamp) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(EncounterRecord { t, a: x, b: y }),
            std::cmp::Ordering::Greater => Some(EncounterRecord { t, a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn a(&self) -> &DeviceId {
        &self.a
    }

    pub fn b(&self) -> &DeviceId {
        &self.b
    }

    pub fn t(&self) -> Timestamp {
        self.t
    }

    pub fn slot(&self) -> usize {
        slot_of(self.t)
    }
}

/// Records sorted by `(t, a, b)` without duplicates, plus the device set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncounterTrace {
    records: Vec<EncounterRecord>,
    devices: BTreeSet<DeviceId>,
}

impl EncounterTrace {
    /// Sorts, drops exact duplicates, and collects every device that appears
    /// in a record or in `declared`.
    pub fn new(mut records: Vec<EncounterRecord>, declared: impl IntoIterator<Item = DeviceId>) -> Self {
        records.sort();
        records.dedup();
        let mut devices: BTreeSet<DeviceId> = declared.into_iter().collect();
        for r in &records {
            devices.insert(r.a.clone());
            devices.insert(r.b.clone());
        }
        EncounterTrace { records, devices }
    }

    pub fn records(&self) -> &[EncounterRecord] {
        &self.records
    }

    pub fn devices(&self) -> &BTreeSet<DeviceId> {
        &self.devices
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Time of the first record, or the epoch for an empty trace.
    pub fn start(&self) -> Timestamp {
        self.records.first().map(|r| r.t).unwrap_or_default()
    }

    fn isolated_devices(&self) -> BTreeSet<&DeviceId> {
        let mut isolated: BTreeSet<&DeviceId> = self.devices.iter().collect();
        for r in &self.records {
            isolated.remove(&r.a);
            isolated.remove(&r.b);
        }
        isolated
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: EncounterTrace,
    pub dropped_self_encounters: usize,
    pub dropped_duplicates: usize,
}

impl LoadedTrace {
    pub fn warnings(&self) -> usize {
        self.dropped_self_encounters + self.dropped_duplicates
    }
}

fn parse_device(field: &str, line: usize) -> Result<DeviceId, TraceError> {
    DeviceId::new(field).map_err(|e| TraceError::Malformed { line, reason: e.to_string() })
}

/// Parses the canonical trace format. Self-encounters and repeated lines are
/// dropped and counted; anything unparseable is an error naming its line.
pub fn load_trace<R: BufRead>(source: R) -> Result<LoadedTrace, TraceError> {
    let mut records = Vec::new();
    let mut declared = Vec::new();
    let mut seen = HashSet::new();
    let mut data_lines = 0usize;
    let (mut dropped_self, mut dropped_dup) = (0, 0);

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        data_lines += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.as_slice() {
            [id] => declared.push(parse_device(id, line_no)?),
            [x, y, t] => {
                let x = parse_device(x, line_no)?;
                let y = parse_device(y, line_no)?;
                let t = t.parse::<u64>().map_err(|_| TraceError::Malformed {
                    line: line_no,
                    reason: format!("bad timestamp {t:?}"),
                })?;
                match EncounterRecord::new(x, y, Timestamp(t)) {
                    None => dropped_self += 1,
                    Some(rec) => {
                        if seen.insert(rec.clone()) {
                            records.push(rec);
                        } else {
                            dropped_dup += 1;
                        }
                    }
                }
            }
            _ => {
                return Err(TraceError::Malformed {
                    line: line_no,
                    reason: format!("expected 3 comma-separated fields, got {}", fields.len()),
                })
            }
        }
    }
    if data_lines == 0 {
        return Err(TraceError::Empty);
    }
    Ok(LoadedTrace {
        trace: EncounterTrace::new(records, declared),
        dropped_self_encounters: dropped_self,
        dropped_duplicates: dropped_dup,
    })
}

pub fn write_trace<W: Write>(trace: &EncounterTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "# device_a,device_b,unix_seconds")?;
    for id in trace.isolated_devices() {
        writeln!(out, "{id}")?;
    }
    for r in &trace.records {
        writeln!(out, "{},{},{}", r.a, r.b, r.t)?;
    }
    out.flush()
}

/// Per-hour-of-day activity of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotStats {
    pub records_per_slot: [u64; SLOTS_PER_DAY],
    /// Distinct devices seen in any record of the slot.
    pub active_devices_per_slot: [u64; SLOTS_PER_DAY],
    /// Distinct partners of a device within a slot. Absent keys are zero.
    pub per_user_contacts: BTreeMap<(DeviceId, usize), u64>,
}

impl SlotStats {
    pub fn contacts(&self, device: &DeviceId, slot: usize) -> u64 {
        self.per_user_contacts
            .get(&(device.clone(), slot))
            .copied()
            .unwrap_or(0)
    }

    /// `slot,records,active_devices`, one row per slot.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,records,active_devices\n");
        for s in 0..SLOTS_PER_DAY {
            out.push_str(&format!(
                "{s},{},{}\n",
                self.records_per_slot[s], self.active_devices_per_slot[s]
            ));
        }
        out
    }
}

pub fn compute_slot_stats(trace: &EncounterTrace) -> SlotStats {
    let mut records_per_slot = [0u64; SLOTS_PER_DAY];
    let mut active: Vec<BTreeSet<&DeviceId>> = vec![BTreeSet::new(); SLOTS_PER_DAY];
    let mut partners: BTreeMap<(&DeviceId, usize), BTreeSet<&DeviceId>> = BTreeMap::new();
    for r in &trace.records {
        let s = r.slot();
        records_per_slot[s] += 1;
        active[s].insert(&r.a);
        active[s].insert(&r.b);
        partners.entry((&r.a, s)).or_default().insert(&r.b);
        partners.entry((&r.b, s)).or_default().insert(&r.a);
    }
    let mut active_devices_per_slot = [0u64; SLOTS_PER_DAY];
    for (s, set) in active.iter().enumerate() {
        active_devices_per_slot[s] = set.len() as u64;
    }
    SlotStats {
        records_per_slot,
        active_devices_per_slot,
        per_user_contacts: partners
            .into_iter()
            .map(|((d, s), set)| ((d.clone(), s), set.len() as u64))
            .collect(),
    }
}

/// Device names `d0`, `d1`, ... zero-padded so lexical order is numeric order.
fn device_names(n: usize) -> Vec<DeviceId> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n)
        .map(|i| DeviceId::new(format!("d{i:0width$}")).unwrap())
        .collect()
}

fn popularity_weights(n: usize) -> Vec<f64> {
    (0..n).map(|r| ((r + 1) as f64).powf(-POPULARITY_EXPONENT)).collect()
}

fn validate_profile(profile: &[f64; SLOTS_PER_DAY]) -> Result<(), TraceError> {
    if profile.iter().any(|w| !w.is_finite() || *w < 0.0) || profile.iter().sum::<f64>() <= 0.0 {
        return Err(TraceError::InvalidParameters(
            "activity weights must be finite, non-negative and not all zero".into(),
        ));
    }
    Ok(())
}

fn random_time_in_slot(rng: &mut impl Rng, slot: usize) -> Timestamp {
    let day = rng.gen_range(0..SYNTHETIC_DAYS);
    let secs = rng.gen_range(0..SECONDS_PER_SLOT);
    SYNTHETIC_EPOCH.saturating_add(day * SECONDS_PER_DAY + slot as u64 * SECONDS_PER_SLOT + secs)
}

fn check_capacity(n_devices: usize, n_records: usize, active_slots: usize) -> Result<(), TraceError> {
    let pairs = (n_devices * (n_devices - 1) / 2) as u128;
    let capacity = pairs * (active_slots as u128) * (SYNTHETIC_DAYS * SECONDS_PER_SLOT) as u128;
    if (n_records as u128) * 2 > capacity {
        return Err(TraceError::InvalidParameters(format!(
            "{n_records} records do not fit in a week of {n_devices} devices"
        )));
    }
    Ok(())
}

/// A week of encounters. Each record's hour is drawn from `activity_profile`;
/// both endpoints are drawn by power-law popularity. Deterministic in `seed`.
pub fn generate_synthetic_trace(
    n_devices: usize,
    n_records: usize,
    activity_profile: &[f64; SLOTS_PER_DAY],
    seed: u64,
) -> Result<EncounterTrace, TraceError> {
    if n_devices < 2 {
        return Err(TraceError::InvalidParameters("need at least 2 devices".into()));
    }
    validate_profile(activity_profile)?;
    let active_slots = activity_profile.iter().filter(|w| **w > 0.0).count();
    check_capacity(n_devices, n_records, active_slots)?;

    let names = device_names(n_devices);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slot_dist = WeightedIndex::new(activity_profile).expect("validated profile");
    let device_dist = WeightedIndex::new(popularity_weights(n_devices)).expect("positive weights");

    let mut seen = HashSet::with_capacity(n_records);
    let mut records = Vec::with_capacity(n_records);
    while records.len() < n_records {
        let slot = slot_dist.sample(&mut rng);
        let t = random_time_in_slot(&mut rng, slot);
        let a = device_dist.sample(&mut rng);
        let b = device_dist.sample(&mut rng);
        if a == b {
            continue;
        }
        let rec = EncounterRecord::new(names[a].clone(), names[b].clone(), t).expect("a != b");
        if seen.insert(rec.clone()) {
            records.push(rec);
        }
    }
    Ok(EncounterTrace::new(records, names))
}

/// Daytime activity (07:00 to 22:00) with a midday bump.
pub fn default_activity_profile() -> [f64; SLOTS_PER_DAY] {
    let mut profile = [0.0; SLOTS_PER_DAY];
    for (s, w) in profile.iter_mut().enumerate() {
        *w = match s {
            0..=6 => 0.1,
            7..=9 | 19..=22 => 1.0,
            10..=18 => 2.0,
            _ => 0.2,
        };
    }
    profile
}

/// Share of records that link two devices of the same community.
const GROUPED_INTRA_SHARE: f64 = 0.97;
/// Spread (in hours) of a community's activity around its peak.
const GROUPED_SPREAD_HOURS: f64 = 1.5;
/// A community is never active further than this from its peak hour.
const GROUPED_REACH_HOURS: f64 = 3.0;

/// Peak hour of community `g` out of `n`: evenly spread over the day.
pub fn community_peak(g: usize, n: usize) -> f64 {
    (g as f64 + 0.5) * SLOTS_PER_DAY as f64 / n as f64
}

/// A week of encounters among `n_groups` communities that are busy at
/// different hours (think shifts): device `i` belongs to community
/// `i % n_groups`, whose activity peaks at [`community_peak`] and stays
/// within four hours of it. Most records join two members of one community
/// during its busy hours; the rest join two uniformly chosen devices at
/// random daytime hours.
pub fn generate_grouped_trace(
    n_devices: usize,
    n_records: usize,
    n_groups: usize,
    seed: u64,
) -> Result<EncounterTrace, TraceError> {
    if n_groups == 0 || n_devices < 2 * n_groups {
        return Err(TraceError::InvalidParameters(
            "need at least one community and two devices per community".into(),
        ));
    }
    check_capacity(n_devices / n_groups, n_records, 2 * GROUPED_REACH_HOURS as usize)?;

    let names = device_names(n_devices);
    let members: Vec<Vec<usize>> = (0..n_groups)
        .map(|g| (0..n_devices).filter(|i| i % n_groups == g).collect())
        .collect();
    let profiles: Vec<WeightedIndex<f64>> = (0..n_groups)
        .map(|g| {
            let peak = community_peak(g, n_groups);
            let weights: Vec<f64> = (0..SLOTS_PER_DAY)
                .map(|s| {
                    // Distance from the middle of slot s to the peak, around the clock.
                    let d = (s as f64 + 0.5 - peak).abs();
                    let d = d.min(SLOTS_PER_DAY as f64 - d);
                    if d > GROUPED_REACH_HOURS {
                        0.0
                    } else {
                        (-(d * d) / (2.0 * GROUPED_SPREAD_HOURS * GROUPED_SPREAD_HOURS)).exp()
                    }
                })
                .collect();
            WeightedIndex::new(weights).expect("positive weights")
        })
        .collect();
    let mixing_slots = WeightedIndex::new(default_activity_profile()).expect("positive weights");
    let member_dist: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(popularity_weights(m.len())).expect("positive weights"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n_records);
    let mut records = Vec::with_capacity(n_records);
    while records.len() < n_records {
        let (a, b, slot) = if rng.gen_bool(GROUPED_INTRA_SHARE) {
            let g = rng.gen_range(0..n_groups);
            let a = members[g][member_dist[g].sample(&mut rng)];
            let b = members[g][member_dist[g].sample(&mut rng)];
            (a, b, profiles[g].sample(&mut rng))
        } else {
            let a = rng.gen_range(0..n_devices);
            let b = rng.gen_range(0..n_devices);
            (a, b, mixing_slots.sample(&mut rng))
        };
        if a == b {
            continue;
        }
        let t = random_time_in_slot(&mut rng, slot);
        let rec = EncounterRecord::new(names[a].clone(), names[b].clone(), t).expect("a != b");
        if seen.insert(rec.clone()) {
            records.push(rec);
        }
    }
    Ok(EncounterTrace::new(records, names))
}
