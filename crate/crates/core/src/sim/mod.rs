//! Trace-driven evaluation: epidemic spread and how many exposed users the
//! app flags under each activity scenario, repeated over seeded replications.

mod epidemic;
mod schedule;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use epidemic::{compute_test_required, simulate_epidemic, ContactNetwork, Infection};
pub use schedule::{
    schedule_centralized, schedule_decentralized, schedule_random, ActivitySchedule, Scenario,
    SchedulePlanner, SlotSet, RANDOM_WINDOW,
};

use crate::trace::EncounterTrace;
use crate::types::{DeviceId, Timestamp, SLOTS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("device {0} is not in the trace")]
    UnknownDevice(DeviceId),
    #[error("{scenario} scenario allows at most {max} active hours, got {k}")]
    InvalidHours { scenario: Scenario, k: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub contagiousness_p: f64,
    pub n_initial_infected: usize,
    pub scenario: Scenario,
    pub active_hours_k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub ci_level: f64,
    /// Probability that an infected user uploads their data.
    pub opt_in_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            contagiousness_p: 0.02,
            n_initial_infected: 2,
            scenario: Scenario::Decentralized,
            active_hours_k: SLOTS_PER_DAY,
            repetitions: 1000,
            seed: 0,
            ci_level: 0.90,
            opt_in_rate: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        epidemic::check_probability(self.contagiousness_p)?;
        if self.active_hours_k > self.scenario.max_hours() {
            return Err(SimError::InvalidHours {
                scenario: self.scenario,
                k: self.active_hours_k,
                max: self.scenario.max_hours(),
            });
        }
        if self.repetitions == 0 {
            return Err(SimError::InvalidConfig("repetitions must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(SimError::InvalidConfig(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        if !(0.0..=1.0).contains(&self.opt_in_rate) {
            return Err(SimError::InvalidConfig(format!("opt_in_rate {} outside [0, 1]", self.opt_in_rate)));
        }
        Ok(())
    }
}

/// Mean with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl RunStats {
    /// `mean ± z·s/√n`, `z` the two-sided normal quantile for `level`.
    /// A single sample gives a zero-width interval.
    pub fn from_samples(samples: &[f64], level: f64) -> RunStats {
        let n = samples.len();
        assert!(n > 0, "no samples");
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = z_score(level) * sd / (n as f64).sqrt();
        RunStats { mean, ci_low: mean - half, ci_high: mean + half, n }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

pub fn z_score(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// One replication's result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpidemicOutcome {
    pub initial: BTreeSet<DeviceId>,
    pub infected: BTreeSet<DeviceId>,
    pub infection_time: BTreeMap<DeviceId, Timestamp>,
    pub test_required: BTreeSet<DeviceId>,
}

/// Independent random streams of one replication.
#[derive(Clone, Copy)]
enum Stream {
    Initial = 0,
    Transmission = 1,
    Schedule = 2,
    OptIn = 3,
}

fn replication_rng(seed: u64, replication: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(4).wrapping_add(stream as u64));
    rng
}

struct Counts {
    infected: usize,
    test_required: usize,
}

/// A trace prepared once for many replications.
pub struct Simulator {
    network: ContactNetwork,
    planner: SchedulePlanner,
}

impl Simulator {
    pub fn new(trace: &EncounterTrace) -> Self {
        Simulator { network: ContactNetwork::new(trace), planner: SchedulePlanner::new(trace) }
    }

    pub fn network(&self) -> &ContactNetwork {
        &self.network
    }

    pub fn planner(&self) -> &SchedulePlanner {
        &self.planner
    }

    fn check(&self, config: &SimConfig) -> Result<(), SimError> {
        config.validate()?;
        if config.n_initial_infected > self.network.len() {
            return Err(SimError::InvalidConfig(format!(
                "{} initial infected but only {} devices",
                config.n_initial_infected,
                self.network.len()
            )));
        }
        Ok(())
    }

    /// Index-level replication. Infection depends only on (seed, replication,
    /// p, n_initial); the schedule only on (seed, replication, scenario, k).
    fn replicate_raw(&self, config: &SimConfig, replication: u64) -> (Vec<bool>, Vec<Option<Timestamp>>, Vec<bool>) {
        let n = self.network.len();
        let mut rng = replication_rng(config.seed, replication, Stream::Initial);
        let seeds = index::sample(&mut rng, n, config.n_initial_infected).into_vec();
        let mut initial = vec![false; n];
        for &i in &seeds {
            initial[i] = true;
        }

        let mut rng = replication_rng(config.seed, replication, Stream::Transmission);
        let times = self.network.spread(config.contagiousness_p, &seeds, &mut rng);

        let mut rng = replication_rng(config.seed, replication, Stream::Schedule);
        let schedule = self
            .planner
            .schedule(config.scenario, config.active_hours_k, &mut rng)
            .expect("k validated");
        let schedule = self.network.schedule_vec(&schedule);

        let mut sources = times.clone();
        if config.opt_in_rate < 1.0 {
            let mut rng = replication_rng(config.seed, replication, Stream::OptIn);
            for t in sources.iter_mut() {
                if !rng.gen_bool(config.opt_in_rate) {
                    *t = None;
                }
            }
        }
        let flagged = self.network.test_required(&schedule, &sources, &initial);
        (initial, times, flagged)
    }

    pub fn replicate(&self, config: &SimConfig, replication: u64) -> Result<EpidemicOutcome, SimError> {
        self.check(config)?;
        let (initial, times, flagged) = self.replicate_raw(config, replication);
        let infection_time = self.network.to_time_map(&times);
        Ok(EpidemicOutcome {
            initial: self.network.to_set(&initial),
            infected: infection_time.keys().cloned().collect(),
            infection_time,
            test_required: self.network.to_set(&flagged),
        })
    }

    /// `(infected count stats, test_required count stats)` over all
    /// replications. Replications run in parallel and are reduced in index
    /// order, so results are bit-identical for a given config.
    pub fn run(&self, config: &SimConfig) -> Result<(RunStats, RunStats), SimError> {
        self.check(config)?;
        let counts: Vec<Counts> = (0..config.repetitions as u64)
            .into_par_iter()
            .map(|r| {
                let (_, times, flagged) = self.replicate_raw(config, r);
                Counts {
                    infected: times.iter().filter(|t| t.is_some()).count(),
                    test_required: flagged.iter().filter(|f| **f).count(),
                }
            })
            .collect();
        let infected: Vec<f64> = counts.iter().map(|c| c.infected as f64).collect();
        let flagged: Vec<f64> = counts.iter().map(|c| c.test_required as f64).collect();
        Ok((
            RunStats::from_samples(&infected, config.ci_level),
            RunStats::from_samples(&flagged, config.ci_level),
        ))
    }
}

/// Runs `config.repetitions` replications over `trace`.
pub fn monte_carlo(config: &SimConfig, trace: &EncounterTrace) -> Result<(RunStats, RunStats), SimError> {
    Simulator::new(trace).run(config)
}
