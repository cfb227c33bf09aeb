mod common;

use common::bernoulli_sensor;
use pbsi_core::energy::EnergyModel;
use pbsi_core::params::{SensorParams, SystemConfig};
use pbsi_core::policy::{Policy, PolicyName, PrepareOptions, SolverCache};
use pbsi_core::scheduling::{
    maf_select, random_cn_select, wugc_select, oft_trace_cost, ExogenousTrace, OftThresholds, SensorSnapshot,
};
use pbsi_core::sim::{run_episode, run_episode_traced};
use pbsi_core::tracker::InferredPbsi;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mixed_config(k: usize, k0: usize, horizon: u64, seed: u64) -> SystemConfig {
    let xis = [1.0, 0.7, 0.4];
    let sensors = (0..k)
        .map(|i| {
            let e = if i % 2 == 0 { EnergyModel::bernoulli(0.2).unwrap() } else { EnergyModel::poisson(0.3).unwrap() };
            SensorParams::with_defaults(0.7, xis[i % 3], e)
        })
        .collect();
    SystemConfig { sensors, k0, horizon, episodes: 1, seed, initial_battery: 2 }
}

fn prepare(name: PolicyName, cfg: &SystemConfig) -> Policy {
    let opts = PrepareOptions { oft_eval_slots: 2000, ..PrepareOptions::default() };
    Policy::prepare(name, cfg, &opts, &mut SolverCache::new()).unwrap()
}

#[test]
fn slot_invariants_hold_for_every_policy() {
    let cfg = mixed_config(6, 2, 3000, 9);
    for name in PolicyName::ALL {
        let policy = prepare(name, &cfg);
        let constrained = matches!(name, PolicyName::Maf | PolicyName::WugcCn | PolicyName::RandomCn);
        let mut stored = [0u64; 6];
        let mut sent = [0u64; 6];
        let m = run_episode_traced(&cfg, &policy, 0, &mut |r| {
            let commanded = r.actions.iter().filter(|a| **a).count();
            if constrained {
                assert!(commanded <= cfg.k0, "{name}: {commanded} commands");
            }
            for k in 0..6 {
                assert!(!r.delivered[k] || r.transmitted[k], "{name}: delivery without transmission");
                assert!(!r.transmitted[k] || r.battery_before[k] >= 1, "{name}: transmission from empty battery");
                assert!(!r.transmitted[k] || r.actions[k]);
                assert!(r.trackers_after[k].b_hat <= r.battery_after[k], "{name}: inferred level above battery");
                stored[k] += r.stored_energy[k] as u64;
                sent[k] += r.transmitted[k] as u64;
            }
        })
        .unwrap();
        for k in 0..6 {
            assert_eq!(cfg.initial_battery as u64 + stored[k] - sent[k], m.final_battery[k] as u64);
            assert_eq!(m.energy_stored[k], stored[k]);
            assert_eq!(m.transmissions[k], sent[k]);
        }
    }
}

#[test]
fn unit_channel_failures_only_from_empty_battery() {
    let cfg = SystemConfig::single(bernoulli_sensor(0.7, 1.0, 0.12), 5000, 1, 3);
    let policy = prepare(PolicyName::Always, &cfg);
    run_episode_traced(&cfg, &policy, 0, &mut |r| {
        if r.actions[0] && !r.delivered[0] {
            assert_eq!(r.battery_before[0], 0);
            assert_eq!(r.trackers_after[0].d, 1.0);
        }
        assert_eq!(r.trackers_after[0].d.fract(), 0.0);
    })
    .unwrap();
}

#[test]
fn weight_scales_cost_only() {
    let base = mixed_config(5, 2, 2000, 4);
    let mut scaled = base.clone();
    scaled.sensors.iter_mut().for_each(|s| s.weight = 2.5);
    for name in [PolicyName::WugcCn, PolicyName::Cn, PolicyName::Maf] {
        let a = run_episode(&base, &prepare(name, &base), 0).unwrap();
        let b = run_episode(&scaled, &prepare(name, &scaled), 0).unwrap();
        assert_eq!(a.transmissions, b.transmissions);
        assert!((b.total_cost - 2.5 * a.total_cost).abs() < 1e-9 * b.total_cost);
    }
}

#[test]
fn oft_trace_cost_matches_simulator() {
    let s = bernoulli_sensor(0.7, 0.7, 0.2);
    let cfg = SystemConfig::single(s.clone(), 4000, 1, 77);
    for th in [
        OftThresholds { with_request: Some(3), without_request: Some(9) },
        OftThresholds { with_request: Some(1), without_request: None },
        OftThresholds { with_request: None, without_request: Some(20) },
    ] {
        let sim = run_episode(&cfg, &Policy::Oft(vec![th]), 0).unwrap();
        let trace = ExogenousTrace::draw(&s, cfg.horizon, cfg.seed, 0).unwrap();
        assert_eq!(oft_trace_cost(&s, &th, &trace, 0), sim.total_cost, "{th}");
    }
}

fn snapshots(raw: &[(bool, u32, u64)]) -> Vec<SensorSnapshot> {
    raw.iter()
        .enumerate()
        .map(|(id, &(request, b_hat, delta))| SensorSnapshot {
            id,
            request,
            tracker: InferredPbsi { b_hat, delta, d: 0.0 },
            aocsi: delta.min(48) as u32,
        })
        .collect()
}

proptest! {
    #[test]
    fn selectors_respect_limit(
        raw in prop::collection::vec((any::<bool>(), 0u32..15, 1u64..80), 1..40),
        gains in prop::collection::vec(0.0f64..10.0, 40),
        k0 in 0usize..10,
        seed in any::<u64>(),
    ) {
        let k = raw.len();
        let snaps = snapshots(&raw);
        let approved: Vec<bool> = raw.iter().map(|r| r.0).collect();
        let mut actions = vec![false; k];

        wugc_select(&approved, &gains[..k], k0, &mut actions);
        let n = actions.iter().filter(|a| **a).count();
        prop_assert_eq!(n, k0.min(approved.iter().filter(|a| **a).count()));
        prop_assert!(actions.iter().zip(&approved).all(|(a, ok)| !a || *ok));

        maf_select(&snaps, k0, &mut actions);
        prop_assert!(actions.iter().filter(|a| **a).count() <= k0);
        prop_assert!(actions.iter().zip(&snaps).all(|(a, s)| !a || s.request));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_cn_select(&approved, k0, &mut rng, &mut actions);
        prop_assert_eq!(actions.iter().filter(|a| **a).count(), n);
        prop_assert!(actions.iter().zip(&approved).all(|(a, ok)| !a || *ok));
    }

    #[test]
    fn energy_conserved(p in 0.0f64..1.0, xi in 0.05f64..1.0, b0 in 0u32..16, seed in any::<u64>()) {
        let mut cfg = SystemConfig::single(bernoulli_sensor(0.7, xi, p), 500, 1, seed);
        cfg.initial_battery = b0;
        let m = run_episode(&cfg, &Policy::Always, 0).unwrap();
        prop_assert_eq!(b0 as u64 + m.energy_stored[0] - m.transmissions[0], m.final_battery[0] as u64);
        prop_assert!(m.successes[0] <= m.transmissions[0] && m.transmissions[0] <= m.attempts[0]);
    }
}
