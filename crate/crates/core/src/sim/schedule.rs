//! When each user has the app switched on.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use super::SimError;
use crate::trace::{compute_slot_stats, EncounterTrace};
use crate::types::{DeviceId, SLOTS_PER_DAY};

/// Width of the random scenario's daily window.
pub const RANDOM_WINDOW: usize = 12;

/// A set of hour-of-day slots.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SlotSet(u32);

impl SlotSet {
    pub const EMPTY: SlotSet = SlotSet(0);
    pub const ALL: SlotSet = SlotSet((1 << SLOTS_PER_DAY) - 1);

    pub fn insert(&mut self, slot: usize) {
        assert!(slot < SLOTS_PER_DAY, "slot {slot} out of range");
        self.0 |= 1 << slot;
    }

    pub fn contains(self, slot: usize) -> bool {
        slot < SLOTS_PER_DAY && self.0 & (1 << slot) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: SlotSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..SLOTS_PER_DAY).filter(move |&s| self.contains(s))
    }
}

impl FromIterator<usize> for SlotSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = SlotSet::EMPTY;
        for s in iter {
            set.insert(s);
        }
        set
    }
}

impl fmt::Debug for SlotSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Active slots per device. Devices not in the map are never active.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivitySchedule {
    pub active: BTreeMap<DeviceId, SlotSet>,
}

impl ActivitySchedule {
    pub fn slots(&self, device: &DeviceId) -> SlotSet {
        self.active.get(device).copied().unwrap_or_default()
    }
}

/// The three ways users decide when to switch the app on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Each user picks `k` random hours inside the busiest 12-hour window.
    Random,
    /// Each user picks the `k` hours in which they personally meet the most people.
    Decentralized,
    /// Everyone uses the same `k` globally busiest hours.
    Centralized,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Random, Scenario::Decentralized, Scenario::Centralized];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Random => "random",
            Scenario::Decentralized => "decentralized",
            Scenario::Centralized => "centralized",
        }
    }

    pub fn max_hours(self) -> usize {
        match self {
            Scenario::Random => RANDOM_WINDOW,
            _ => SLOTS_PER_DAY,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Scenario::Random),
            "decentralized" => Ok(Scenario::Decentralized),
            "centralized" => Ok(Scenario::Centralized),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

/// Slot rankings derived once from a trace and reused across replications.
#[derive(Debug, Clone)]
pub struct SchedulePlanner {
    devices: Vec<DeviceId>,
    window: [usize; RANDOM_WINDOW],
    /// Per device, all slots, best first.
    personal_order: Vec<Vec<usize>>,
    global_order: [usize; SLOTS_PER_DAY],
}

impl SchedulePlanner {
    pub fn new(trace: &EncounterTrace) -> Self {
        let stats = compute_slot_stats(trace);
        let records = stats.records_per_slot;

        let window_total = |start: usize| -> u64 {
            (0..RANDOM_WINDOW).map(|i| records[(start + i) % SLOTS_PER_DAY]).sum()
        };
        // max_by_key keeps the last maximum; scan in reverse so ties go to the lowest start.
        let best_start = (0..SLOTS_PER_DAY).rev().max_by_key(|&s| window_total(s)).unwrap();
        let window = std::array::from_fn(|i| (best_start + i) % SLOTS_PER_DAY);

        let devices: Vec<DeviceId> = trace.devices().iter().cloned().collect();
        let personal_order = devices
            .iter()
            .map(|d| {
                let mut slots: Vec<usize> = (0..SLOTS_PER_DAY).collect();
                slots.sort_by(|&x, &y| {
                    stats
                        .contacts(d, y)
                        .cmp(&stats.contacts(d, x))
                        .then(records[y].cmp(&records[x]))
                        .then(x.cmp(&y))
                });
                slots
            })
            .collect();

        let active = stats.active_devices_per_slot;
        let mut global_order: [usize; SLOTS_PER_DAY] = std::array::from_fn(|s| s);
        global_order.sort_by(|&x, &y| {
            active[y]
                .cmp(&active[x])
                .then(records[y].cmp(&records[x]))
                .then(x.cmp(&y))
        });

        SchedulePlanner { devices, window, personal_order, global_order }
    }

    /// The contiguous 12-hour window (wrapping midnight) with the most records.
    pub fn random_window(&self) -> [usize; RANDOM_WINDOW] {
        self.window
    }

    pub fn centralized_order(&self) -> [usize; SLOTS_PER_DAY] {
        self.global_order
    }

    fn check_k(scenario: Scenario, k: usize) -> Result<(), SimError> {
        if k > scenario.max_hours() {
            return Err(SimError::InvalidHours { scenario, k, max: scenario.max_hours() });
        }
        Ok(())
    }

    fn build(&self, mut pick: impl FnMut(usize) -> SlotSet) -> ActivitySchedule {
        ActivitySchedule {
            active: self
                .devices
                .iter()
                .enumerate()
                .map(|(i, d)| (d.clone(), pick(i)))
                .collect(),
        }
    }

    /// Devices draw in sorted order from `rng`. Each shuffles the whole window
    /// and keeps the first `k`, so with equal rng state the sets are nested in `k`.
    pub fn random<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<ActivitySchedule, SimError> {
        Self::check_k(Scenario::Random, k)?;
        Ok(self.build(|_| {
            let mut slots = self.window;
            slots.shuffle(rng);
            slots[..k].iter().copied().collect()
        }))
    }

    pub fn decentralized(&self, k: usize) -> Result<ActivitySchedule, SimError> {
        Self::check_k(Scenario::Decentralized, k)?;
        Ok(self.build(|i| self.personal_order[i].iter().take(k).copied().collect()))
    }

    pub fn centralized(&self, k: usize) -> Result<ActivitySchedule, SimError> {
        Self::check_k(Scenario::Centralized, k)?;
        let shared: SlotSet = self.global_order[..k].iter().copied().collect();
        Ok(self.build(|_| shared))
    }

    pub fn schedule<R: Rng + ?Sized>(
        &self,
        scenario: Scenario,
        k: usize,
        rng: &mut R,
    ) -> Result<ActivitySchedule, SimError> {
        match scenario {
            Scenario::Random => self.random(k, rng),
            Scenario::Decentralized => self.decentralized(k),
            Scenario::Centralized => self.centralized(k),
        }
    }
}

/// `k` random hours per user from the busiest 12-hour window.
pub fn schedule_random<R: Rng + ?Sized>(
    trace: &EncounterTrace,
    k: usize,
    rng: &mut R,
) -> Result<ActivitySchedule, SimError> {
    SchedulePlanner::new(trace).random(k, rng)
}

/// Each user's `k` slots with the most distinct contacts, ties broken by
/// slot crowdedness and then slot index.
pub fn schedule_decentralized(trace: &EncounterTrace, k: usize) -> Result<ActivitySchedule, SimError> {
    SchedulePlanner::new(trace).decentralized(k)
}

/// The same `k` slots for everyone: most active devices, then most records,
/// then lowest index.
pub fn schedule_centralized(trace: &EncounterTrace, k: usize) -> Result<ActivitySchedule, SimError> {
    SchedulePlanner::new(trace).centralized(k)
}
