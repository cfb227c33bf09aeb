//! Multi-sensor selection under a simultaneous-update limit and the
//! fixed-threshold baseline.

use rand::Rng;
use rayon::prelude::*;

use crate::energy::EnergySampler;
use crate::error::{Error, Result};
use crate::params::SensorParams;
use crate::rng::{substream, StreamKind};
use crate::tracker::InferredPbsi;

/// What a scheduler sees of one sensor in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSnapshot {
    pub id: usize,
    pub request: bool,
    pub tracker: InferredPbsi,
    /// AoCSI truncated at the sensor's maximum.
    pub aocsi: u32,
}

/// `alpha * omega * (min(delta + 1, max_aocsi) - 1)` with
/// `omega = xi (1{b_hat > 0} + (1 - (1 - p1)^tau) 1{b_hat = 0})`, where
/// `tau` is the age of the inferred battery level. With `d = 0` that is the
/// time since the last successful update, so an empty-reported battery still
/// gains charging credit.
pub fn weighted_update_gain(snap: &SensorSnapshot, params: &SensorParams, p1: f64) -> f64 {
    let t = &snap.tracker;
    let omega = if t.b_hat > 0 {
        params.channel_success
    } else {
        params.channel_success * (1.0 - (1.0 - p1).powf(t.aoibl()))
    };
    let aged = (t.delta + 1).min(params.max_aocsi as u64) as f64;
    params.weight * omega * (aged - 1.0)
}

/// Marks the `k0` candidates with the largest scores, ties to lower id.
fn top_k(candidates: &mut [(usize, f64)], k0: usize, actions: &mut [bool]) {
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(id, _) in candidates.iter().take(k0) {
        actions[id] = true;
    }
}

/// Among the sensors the CN rule approves (`approved[k]`), commands all of
/// them if at most `k0`, else the `k0` with the largest weighted update gain.
pub fn wugc_select(approved: &[bool], gains: &[f64], k0: usize, actions: &mut [bool]) {
    actions.iter_mut().for_each(|a| *a = false);
    let mut cand: Vec<(usize, f64)> =
        approved.iter().enumerate().filter(|(_, a)| **a).map(|(k, _)| (k, gains[k])).collect();
    if cand.len() <= k0 {
        cand.iter().for_each(|&(k, _)| actions[k] = true);
    } else {
        top_k(&mut cand, k0, actions);
    }
}

/// Commands the `k0` requesting sensors with the largest truncated AoCSI.
pub fn maf_select(snaps: &[SensorSnapshot], k0: usize, actions: &mut [bool]) {
    actions.iter_mut().for_each(|a| *a = false);
    let mut cand: Vec<(usize, f64)> =
        snaps.iter().filter(|s| s.request).map(|s| (s.id, s.aocsi as f64)).collect();
    top_k(&mut cand, k0, actions);
}

/// Like [`wugc_select`] but picks a uniform random `k0`-subset when the
/// approved set is too large.
pub fn random_cn_select<R: Rng + ?Sized>(approved: &[bool], k0: usize, rng: &mut R, actions: &mut [bool]) {
    actions.iter_mut().for_each(|a| *a = false);
    let cand: Vec<usize> = approved.iter().enumerate().filter(|(_, a)| **a).map(|(k, _)| k).collect();
    if cand.len() <= k0 {
        cand.iter().for_each(|&k| actions[k] = true);
    } else {
        for i in rand::seq::index::sample(rng, cand.len(), k0) {
            actions[cand[i]] = true;
        }
    }
}

/// Two AoCSI thresholds; `None` never updates in that slot type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OftThresholds {
    pub with_request: Option<u32>,
    pub without_request: Option<u32>,
}

impl OftThresholds {
    /// Updates when the truncated AoCSI reaches the slot type's threshold.
    pub fn decide(&self, request: bool, aocsi: u32) -> bool {
        let t = if request { self.with_request } else { self.without_request };
        t.is_some_and(|t| aocsi >= t)
    }

    pub fn validate(&self, max_aocsi: u32) -> Result<()> {
        for t in [self.with_request, self.without_request].into_iter().flatten() {
            if t < 1 || t > max_aocsi {
                return Err(Error::Parameter(format!("threshold {t} outside [1, {max_aocsi}]")));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for OftThresholds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |t: Option<u32>| t.map_or("never".to_string(), |t| t.to_string());
        write!(f, "{}/{}", show(self.with_request), show(self.without_request))
    }
}

/// Exogenous draws for one single-sensor episode, shared by every scanned
/// threshold pair. They are the same draws the simulator makes for
/// `(seed, episode, sensor 0)`.
#[derive(Debug, Clone)]
pub struct ExogenousTrace {
    pub requests: Vec<bool>,
    pub energy: Vec<u32>,
    pub channel: Vec<bool>,
}

impl ExogenousTrace {
    pub fn draw(params: &SensorParams, slots: u64, seed: u64, episode: u64) -> Result<Self> {
        let sampler = EnergySampler::new(&params.energy)?;
        let mut rq = substream(seed, episode, 0, StreamKind::Request);
        let mut en = substream(seed, episode, 0, StreamKind::Energy);
        let mut ch = substream(seed, episode, 0, StreamKind::Channel);
        let n = slots as usize;
        let mut t = ExogenousTrace {
            requests: Vec::with_capacity(n),
            energy: Vec::with_capacity(n),
            channel: Vec::with_capacity(n),
        };
        for _ in 0..n {
            t.requests.push(rq.random::<f64>() < params.request_prob);
            t.energy.push(sampler.sample(&mut en));
            t.channel.push(ch.random::<f64>() < params.channel_success);
        }
        Ok(t)
    }
}

/// Total cost of a threshold pair on a trace, starting from AoCSI 1 and
/// battery `initial_battery`.
pub fn oft_trace_cost(params: &SensorParams, th: &OftThresholds, trace: &ExogenousTrace, initial_battery: u32) -> f64 {
    let cap = params.battery_capacity;
    let dl = params.max_aocsi;
    let mut b = initial_battery;
    let mut delta = 1u32;
    let mut cost = 0.0;
    for t in 0..trace.requests.len() {
        let r = trace.requests[t];
        let m = th.decide(r, delta) && b >= 1;
        delta = if m && trace.channel[t] { 1 } else { (delta + 1).min(dl) };
        b = (b - m as u32 + trace.energy[t]).min(cap);
        if r {
            cost += params.weight * delta as f64;
        }
    }
    cost
}

/// Exhaustive search over both thresholds in `[1, max_aocsi] + {never}`,
/// each pair scored on the same `eval_slots`-slot trace.
pub fn oft_search(params: &SensorParams, eval_slots: u64, seed: u64) -> Result<OftThresholds> {
    params.validate()?;
    if eval_slots == 0 {
        return Err(Error::Parameter("evaluation budget must be positive".into()));
    }
    let trace = ExogenousTrace::draw(params, eval_slots, seed, 0)?;
    let options: Vec<Option<u32>> = (1..=params.max_aocsi).map(Some).chain([None]).collect();
    let pairs: Vec<OftThresholds> = options
        .iter()
        .flat_map(|&w| options.iter().map(move |&o| OftThresholds { with_request: w, without_request: o }))
        .collect();
    let costs: Vec<f64> = pairs.par_iter().map(|th| oft_trace_cost(params, th, &trace, 0)).collect();
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    Ok(pairs[best])
}
