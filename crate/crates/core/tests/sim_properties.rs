use std::collections::BTreeSet;

use contain_core::sim::{Scenario, SimConfig, Simulator};
use contain_core::trace::{default_activity_profile, generate_grouped_trace, generate_synthetic_trace, EncounterRecord, EncounterTrace};
use contain_core::{DeviceId, Timestamp};
use proptest::prelude::*;

fn small_trace(n: usize, edges: &[(usize, usize, u64)]) -> EncounterTrace {
    let names: Vec<DeviceId> = (0..n).map(|i| DeviceId::new(format!("d{i}")).unwrap()).collect();
    let records = edges
        .iter()
        .filter_map(|&(a, b, t)| EncounterRecord::new(names[a % n].clone(), names[b % n].clone(), Timestamp(t)))
        .collect();
    EncounterTrace::new(records, names)
}

#[test]
fn infection_times_are_explained_by_an_earlier_contact() {
    let trace = generate_synthetic_trace(60, 4_000, &default_activity_profile(), 11).unwrap();
    let sim = Simulator::new(&trace);
    let cfg = SimConfig { contagiousness_p: 0.2, n_initial_infected: 3, seed: 9, ..Default::default() };
    for r in 0..50 {
        let out = sim.replicate(&cfg, r).unwrap();
        assert!(out.infected.is_superset(&out.initial));
        for d in &out.initial {
            assert_eq!(out.infection_time[d], trace.start());
        }
        for (d, &t) in &out.infection_time {
            if out.initial.contains(d) {
                continue;
            }
            let explained = trace.records().iter().any(|rec| {
                let other = if rec.a() == d {
                    rec.b()
                } else if rec.b() == d {
                    rec.a()
                } else {
                    return false;
                };
                rec.t() == t
                    && out.infection_time.get(other).is_some_and(|&to| out.initial.contains(other) || to < t)
            });
            assert!(explained, "replication {r}: {d} infected at {t:?} without a source");
        }
    }
}

#[test]
fn certain_spread_on_connected_trace_reaches_everyone() {
    // A path d0-d1-...-d9 walked forward in time, then backward.
    let forward = (0..9).map(|i| (i, i + 1, i as u64 + 1));
    let backward = (0..9).map(|i| (8 - i, 9 - i, 100 + i as u64));
    let edges: Vec<(usize, usize, u64)> = forward.chain(backward).collect();
    let trace = small_trace(10, &edges);
    let cfg = SimConfig { contagiousness_p: 1.0, n_initial_infected: 1, repetitions: 30, ..Default::default() };
    let (infected, flagged) = Simulator::new(&trace).run(&cfg).unwrap();
    assert_eq!(infected.mean, 10.0);
    assert_eq!(infected.ci_low, infected.ci_high);
    assert_eq!(flagged.mean, 9.0);
}

#[test]
fn decentralized_dominates_centralized_on_heterogeneous_trace() {
    let trace = generate_grouped_trace(100, 5_000, 4, 1).unwrap();
    let sim = Simulator::new(&trace);
    for k in (2..=12).step_by(2) {
        let mean = |scenario| {
            let cfg = SimConfig { scenario, active_hours_k: k, seed: 7, ..Default::default() };
            sim.run(&cfg).unwrap().1.mean
        };
        let (dec, cen) = (mean(Scenario::Decentralized), mean(Scenario::Centralized));
        assert!(dec >= cen, "k={k}: decentralized {dec} < centralized {cen}");
    }
}

#[test]
fn identical_configs_give_identical_outcomes() {
    let trace = generate_grouped_trace(40, 1_500, 4, 3).unwrap();
    let a = Simulator::new(&trace);
    let b = Simulator::new(&trace);
    for scenario in Scenario::ALL {
        let cfg = SimConfig { scenario, active_hours_k: 6, repetitions: 200, seed: 99, ..Default::default() };
        assert_eq!(a.run(&cfg).unwrap(), b.run(&cfg).unwrap());
        assert_eq!(a.replicate(&cfg, 17).unwrap(), b.replicate(&cfg, 17).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nesting_in_p_and_k(
        edges in prop::collection::vec((0usize..12, 0usize..12, 0u64..200_000), 1..120),
        seed in any::<u64>(),
        rep in 0u64..1000,
    ) {
        let trace = small_trace(12, &edges);
        prop_assume!(!trace.records().is_empty());
        let sim = Simulator::new(&trace);
        let base = SimConfig { n_initial_infected: 2, seed, ..Default::default() };

        let mut prev: Option<BTreeSet<DeviceId>> = None;
        for p in [0.0, 0.1, 0.3, 0.7, 1.0] {
            let out = sim.replicate(&SimConfig { contagiousness_p: p, ..base.clone() }, rep).unwrap();
            if let Some(prev) = &prev {
                prop_assert!(prev.is_subset(&out.infected));
            }
            prev = Some(out.infected);
        }

        for scenario in Scenario::ALL {
            let mut prev: Option<BTreeSet<DeviceId>> = None;
            for k in 0..=scenario.max_hours() {
                let cfg = SimConfig { contagiousness_p: 0.5, scenario, active_hours_k: k, ..base.clone() };
                let out = sim.replicate(&cfg, rep).unwrap();
                prop_assert!(out.test_required.is_disjoint(&out.initial));
                if let Some(prev) = &prev {
                    prop_assert!(prev.is_subset(&out.test_required), "{} k={}", scenario, k);
                }
                prev = Some(out.test_required);
            }
        }
    }
}
