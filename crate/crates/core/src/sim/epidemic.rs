//! Per-contact Bernoulli transmission over a trace, and who the app would
//! flag for testing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use super::schedule::{ActivitySchedule, SlotSet};
use super::SimError;
use crate::trace::EncounterTrace;
use crate::types::{DeviceId, Timestamp};

#[derive(Debug, Clone, Copy)]
struct Contact {
    a: u32,
    b: u32,
    t: Timestamp,
    slot: u8,
}

/// A trace re-indexed for fast replication. Device indices follow the
/// trace's sorted device order.
#[derive(Debug, Clone)]
pub struct ContactNetwork {
    devices: Vec<DeviceId>,
    index: HashMap<DeviceId, usize>,
    contacts: Vec<Contact>,
    start: Timestamp,
}

impl ContactNetwork {
    pub fn new(trace: &EncounterTrace) -> Self {
        let devices: Vec<DeviceId> = trace.devices().iter().cloned().collect();
        let index: HashMap<DeviceId, usize> =
            devices.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        let contacts = trace
            .records()
            .iter()
            .map(|r| Contact {
                a: index[r.a()] as u32,
                b: index[r.b()] as u32,
                t: r.t(),
                slot: r.slot() as u8,
            })
            .collect();
        ContactNetwork { devices, index, contacts, start: trace.start() }
    }

    pub fn devices(&self) -> &[DeviceId] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn index_of(&self, device: &DeviceId) -> Option<usize> {
        self.index.get(device).copied()
    }

    pub(crate) fn indices_of<'a>(
        &self,
        devices: impl IntoIterator<Item = &'a DeviceId>,
    ) -> Result<Vec<usize>, SimError> {
        devices
            .into_iter()
            .map(|d| self.index_of(d).ok_or_else(|| SimError::UnknownDevice(d.clone())))
            .collect()
    }

    /// Runs one epidemic. One uniform is drawn per record, whatever the
    /// infection state, so runs that share an rng state are coupled across `p`.
    ///
    /// Returns each device's infection time; initial devices get the trace
    /// start and can transmit from the first record on.
    pub(crate) fn spread<R: Rng + ?Sized>(&self, p: f64, initial: &[usize], rng: &mut R) -> Vec<Option<Timestamp>> {
        let mut times: Vec<Option<Timestamp>> = vec![None; self.devices.len()];
        let mut seeded = vec![false; self.devices.len()];
        for &i in initial {
            times[i] = Some(self.start);
            seeded[i] = true;
        }
        let infectious = |times: &[Option<Timestamp>], i: usize, t: Timestamp| {
            seeded[i] || matches!(times[i], Some(ti) if ti < t)
        };
        for c in &self.contacts {
            let u: f64 = rng.gen();
            let (a, b) = (c.a as usize, c.b as usize);
            let target = match (infectious(&times, a, c.t), infectious(&times, b, c.t)) {
                (true, false) => b,
                (false, true) => a,
                _ => continue,
            };
            if times[target].is_none() && u < p {
                times[target] = Some(c.t);
            }
        }
        times
    }

    /// Devices outside `initial` that had a contact with a source infected at
    /// or before the contact time, in a slot where both apps were on.
    pub(crate) fn test_required(
        &self,
        schedule: &[SlotSet],
        source_times: &[Option<Timestamp>],
        initial: &[bool],
    ) -> Vec<bool> {
        let mut flagged = vec![false; self.devices.len()];
        for c in &self.contacts {
            let slot = c.slot as usize;
            let (a, b) = (c.a as usize, c.b as usize);
            if !(schedule[a].contains(slot) && schedule[b].contains(slot)) {
                continue;
            }
            for (src, dst) in [(a, b), (b, a)] {
                if !initial[dst] && matches!(source_times[src], Some(ts) if ts <= c.t) {
                    flagged[dst] = true;
                }
            }
        }
        flagged
    }

    pub(crate) fn schedule_vec(&self, schedule: &ActivitySchedule) -> Vec<SlotSet> {
        self.devices.iter().map(|d| schedule.slots(d)).collect()
    }

    pub(crate) fn to_set(&self, mask: &[bool]) -> BTreeSet<DeviceId> {
        mask.iter()
            .zip(&self.devices)
            .filter(|(m, _)| **m)
            .map(|(_, d)| d.clone())
            .collect()
    }

    pub(crate) fn to_time_map(&self, times: &[Option<Timestamp>]) -> BTreeMap<DeviceId, Timestamp> {
        times
            .iter()
            .zip(&self.devices)
            .filter_map(|(t, d)| t.map(|t| (d.clone(), t)))
            .collect()
    }
}

/// Who got infected, and when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Infection {
    pub infected: BTreeSet<DeviceId>,
    pub infection_time: BTreeMap<DeviceId, Timestamp>,
}

pub(crate) fn check_probability(p: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::InvalidProbability(p));
    }
    Ok(())
}

/// Spreads the disease through `trace` in time order. Transmission ignores
/// app schedules.
pub fn simulate_epidemic<R: Rng + ?Sized>(
    trace: &EncounterTrace,
    p: f64,
    initial: &BTreeSet<DeviceId>,
    rng: &mut R,
) -> Result<Infection, SimError> {
    check_probability(p)?;
    let network = ContactNetwork::new(trace);
    let seeds = network.indices_of(initial)?;
    let times = network.spread(p, &seeds, rng);
    let infection_time = network.to_time_map(&times);
    Ok(Infection { infected: infection_time.keys().cloned().collect(), infection_time })
}

/// Devices the app would flag, assuming every infected user uploads.
/// Initially infected devices are never counted.
pub fn compute_test_required(
    trace: &EncounterTrace,
    schedule: &ActivitySchedule,
    infected: &BTreeSet<DeviceId>,
    infection_time: &BTreeMap<DeviceId, Timestamp>,
    initial: &BTreeSet<DeviceId>,
) -> BTreeSet<DeviceId> {
    let network = ContactNetwork::new(trace);
    let source_times: Vec<Option<Timestamp>> = network
        .devices()
        .iter()
        .map(|d| {
            if !infected.contains(d) {
                None
            } else if initial.contains(d) {
                Some(network.start())
            } else {
                infection_time.get(d).copied()
            }
        })
        .collect();
    let is_initial: Vec<bool> = network.devices().iter().map(|d| initial.contains(d)).collect();
    let flagged = network.test_required(&network.schedule_vec(schedule), &source_times, &is_initial);
    network.to_set(&flagged)
}
