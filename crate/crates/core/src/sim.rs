//! Slot-level Monte-Carlo simulation.
//!
//! Each slot runs in causal order: requests arrive, the policy commands
//! updates, sensors with energy transmit, the channel decides which updates
//! arrive, batteries charge, the on-demand cost accrues and the edge node's
//! trackers absorb what it observed.

use rand::Rng;
use rayon::prelude::*;

use crate::energy::EnergySampler;
use crate::error::{Error, Result};
use crate::params::SystemConfig;
use crate::policy::{Policy, Scratch, SlotView};
use crate::rng::{substream, StreamKind};
use crate::scheduling::SensorSnapshot;
use crate::tracker::{update_inferred_pbsi, InferredPbsi, TrackerModel, UpdateOutcome};

/// Totals of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub total_cost: f64,
    pub slots: u64,
    pub sensor_cost: Vec<f64>,
    pub requests: Vec<u64>,
    /// Commands issued.
    pub attempts: Vec<u64>,
    /// Commands that found energy and transmitted.
    pub transmissions: Vec<u64>,
    pub successes: Vec<u64>,
    /// Energy actually stored (arrivals net of overflow).
    pub energy_stored: Vec<u64>,
    pub initial_battery: u32,
    pub final_battery: Vec<u32>,
}

impl EpisodeMetrics {
    /// Cost per slot per sensor.
    pub fn mean_cost(&self) -> f64 {
        self.total_cost / (self.slots as f64 * self.sensor_cost.len() as f64)
    }

    /// Per-sensor mean on-demand AoCSI (cost per requesting slot).
    pub fn sensor_mean_aocsi(&self) -> Vec<f64> {
        self.sensor_cost
            .iter()
            .zip(&self.requests)
            .map(|(c, &r)| if r == 0 { 0.0 } else { c / r as f64 })
            .collect()
    }
}

/// Everything that happened in one slot, after the slot's updates.
#[derive(Debug)]
pub struct SlotRecord<'a> {
    pub slot: u64,
    pub requests: &'a [bool],
    pub actions: &'a [bool],
    pub transmitted: &'a [bool],
    pub delivered: &'a [bool],
    /// Battery at the start of the slot.
    pub battery_before: &'a [u32],
    pub battery_after: &'a [u32],
    pub stored_energy: &'a [u32],
    pub aocsi_after: &'a [u64],
    pub trackers_after: &'a [InferredPbsi],
}

struct SensorStreams {
    request: rand_chacha::ChaCha8Rng,
    energy: rand_chacha::ChaCha8Rng,
    channel: rand_chacha::ChaCha8Rng,
    sampler: EnergySampler,
}

fn check_policy(cfg: &SystemConfig, policy: &Policy) -> Result<()> {
    match policy.sensor_count() {
        Some(n) if n != cfg.sensors.len() => Err(Error::Parameter(format!(
            "policy prepared for {n} sensors, config has {}",
            cfg.sensors.len()
        ))),
        _ => Ok(()),
    }
}

/// Simulates episode `episode` of `cfg` under `policy`.
pub fn run_episode(cfg: &SystemConfig, policy: &Policy, episode: u64) -> Result<EpisodeMetrics> {
    run_episode_traced(cfg, policy, episode, &mut |_| {})
}

/// [`run_episode`] that reports every slot to `on_slot`.
pub fn run_episode_traced(
    cfg: &SystemConfig,
    policy: &Policy,
    episode: u64,
    on_slot: &mut dyn FnMut(&SlotRecord<'_>),
) -> Result<EpisodeMetrics> {
    cfg.validate()?;
    check_policy(cfg, policy)?;
    let k = cfg.sensors.len();
    let models = cfg.sensors.iter().map(TrackerModel::from_params).collect::<Result<Vec<_>>>()?;
    let mut streams = Vec::with_capacity(k);
    for (i, p) in cfg.sensors.iter().enumerate() {
        streams.push(SensorStreams {
            request: substream(cfg.seed, episode, i, StreamKind::Request),
            energy: substream(cfg.seed, episode, i, StreamKind::Energy),
            channel: substream(cfg.seed, episode, i, StreamKind::Channel),
            sampler: EnergySampler::new(&p.energy)?,
        });
    }
    let mut policy_rng = substream(cfg.seed, episode, 0, StreamKind::Policy);

    let mut battery = vec![cfg.initial_battery; k];
    let mut before = vec![0u32; k];
    let mut aocsi = vec![1u64; k];
    let mut trackers = vec![InferredPbsi::default(); k];
    let mut snaps: Vec<SensorSnapshot> = (0..k)
        .map(|id| SensorSnapshot { id, request: false, tracker: trackers[id], aocsi: 1 })
        .collect();
    let mut requests = vec![false; k];
    let mut actions = vec![false; k];
    let mut transmitted = vec![false; k];
    let mut delivered = vec![false; k];
    let mut stored = vec![0u32; k];
    let mut scratch = Scratch::default();

    let mut m = EpisodeMetrics {
        total_cost: 0.0,
        slots: cfg.horizon,
        sensor_cost: vec![0.0; k],
        requests: vec![0; k],
        attempts: vec![0; k],
        transmissions: vec![0; k],
        successes: vec![0; k],
        energy_stored: vec![0; k],
        initial_battery: cfg.initial_battery,
        final_battery: Vec::new(),
    };

    for slot in 0..cfg.horizon {
        for (i, p) in cfg.sensors.iter().enumerate() {
            requests[i] = streams[i].request.random::<f64>() < p.request_prob;
            snaps[i].request = requests[i];
            snaps[i].tracker = trackers[i];
            snaps[i].aocsi = aocsi[i].min(p.max_aocsi as u64) as u32;
        }
        let view = SlotView { snapshots: &snaps, batteries: &battery };
        policy.select(&view, &mut policy_rng, &mut scratch, &mut actions);

        let mut slot_cost = 0.0;
        for (i, p) in cfg.sensors.iter().enumerate() {
            let s = &mut streams[i];
            before[i] = battery[i];
            let tx = actions[i] && battery[i] >= 1;
            let channel_u = s.channel.random::<f64>();
            let ok = tx && channel_u < p.channel_success;
            transmitted[i] = tx;
            delivered[i] = ok;
            aocsi[i] = if ok { 1 } else { aocsi[i] + 1 };
            let after_tx = battery[i] - tx as u32;
            let arrival = s.sampler.sample(&mut s.energy);
            battery[i] = after_tx.saturating_add(arrival).min(p.battery_capacity);
            stored[i] = battery[i] - after_tx;
            if requests[i] {
                let c = p.weight * aocsi[i].min(p.max_aocsi as u64) as f64;
                m.sensor_cost[i] += c;
                slot_cost += c;
                m.requests[i] += 1;
            }
            m.attempts[i] += actions[i] as u64;
            m.transmissions[i] += tx as u64;
            m.successes[i] += ok as u64;
            m.energy_stored[i] += stored[i] as u64;

            let outcome = match (actions[i], ok) {
                (false, _) => UpdateOutcome::NoTx,
                (true, true) => UpdateOutcome::Success { reported_battery: before[i] },
                (true, false) => UpdateOutcome::Failure,
            };
            trackers[i] = update_inferred_pbsi(&trackers[i], actions[i], outcome, &models[i])?;
        }
        m.total_cost += slot_cost;
        on_slot(&SlotRecord {
            slot,
            requests: &requests,
            actions: &actions,
            transmitted: &transmitted,
            delivered: &delivered,
            battery_before: &before,
            battery_after: &battery,
            stored_energy: &stored,
            aocsi_after: &aocsi,
            trackers_after: &trackers,
        });
    }
    m.final_battery = battery;
    Ok(m)
}

/// Mean and standard error of one policy over the configured episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub policy: String,
    pub mean_cost: f64,
    pub std_error: f64,
    /// Per-episode mean cost per slot per sensor, in episode order.
    pub episode_costs: Vec<f64>,
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every policy over episodes `0..cfg.episodes`. Episode `e` uses the
/// same exogenous draws under every policy. `workers = 0` uses the ambient
/// thread pool; results do not depend on the worker count.
pub fn run_experiment(cfg: &SystemConfig, policies: &[Policy], workers: usize) -> Result<Vec<PolicyResult>> {
    cfg.validate()?;
    let run = || -> Result<Vec<PolicyResult>> {
        policies
            .iter()
            .map(|policy| {
                let costs = (0..cfg.episodes)
                    .into_par_iter()
                    .map(|e| run_episode(cfg, policy, e).map(|m| m.mean_cost()))
                    .collect::<Result<Vec<f64>>>()?;
                let (mean_cost, std_error) = mean_and_se(&costs);
                Ok(PolicyResult { policy: policy.label().to_string(), mean_cost, std_error, episode_costs: costs })
            })
            .collect()
    };
    if workers == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
        pool.install(run)
    }
}
