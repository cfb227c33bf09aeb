//! Exact MDP for the single-sensor problem over a noiseless channel.
//!
//! The edge node's partial battery knowledge is reduced to the inferred
//! battery level `b_hat`, the age of cached status `delta` and the age of the
//! failure-inferred battery level `d`. On a noiseless channel a failed update
//! proves the battery was empty, so `(r, b_hat, delta, d)` is a sufficient
//! state and relative value iteration yields the optimal policy.

use std::fmt::Write as _;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::mdp::{relative_value_iteration, FiniteMdp, MdpBuilder, RviOptions, RviSolution};
use crate::params::SensorParams;
use crate::tracker::InferredPbsi;

/// One feasible state `(r, b_hat, delta, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoiselessState {
    pub request: u8,
    pub b_hat: u32,
    pub delta: u32,
    pub d: u32,
}

impl NoiselessState {
    /// Age of the inferred battery level: slots since the last update attempt.
    pub fn aoibl(&self) -> u32 {
        if self.d == 0 {
            self.delta
        } else {
            self.d
        }
    }
}

fn is_feasible(b_hat: u32, delta: u32, d: u32, max_aocsi: u32) -> bool {
    if d == 0 {
        return true;
    }
    b_hat == 0 && (delta == max_aocsi || delta > d)
}

/// All feasible states in lexicographic `(r, b_hat, delta, d)` order.
pub fn enumerate_states(capacity: u32, max_aocsi: u32, max_aofbl: u32) -> Vec<NoiselessState> {
    let mut out = Vec::new();
    for request in 0..2u8 {
        for b_hat in 0..capacity {
            for delta in 1..=max_aocsi {
                for d in 0..=max_aofbl {
                    if is_feasible(b_hat, delta, d, max_aocsi) {
                        out.push(NoiselessState { request, b_hat, delta, d });
                    }
                }
            }
        }
    }
    out
}

/// Closed-form size of the feasible state space.
pub fn state_count_formula(capacity: u32, max_aocsi: u32, max_aofbl: u32) -> u64 {
    let (b, dl, dm) = (capacity as i64, max_aocsi as i64, max_aofbl as i64);
    let tau1 = dl.min(dm + 1);
    (2 * b * dl + 2 * dm * (dl - tau1 + 1) + (tau1 - 1) * (tau1 - 2)) as u64
}

/// Distribution over `0..=capacity` of `min(b_hat + E_1 + ... + E_age, capacity)`.
pub fn battery_growth_distribution(
    b_hat: u32,
    age: u32,
    model: &EnergyModel,
    capacity: u32,
) -> Result<Vec<f64>> {
    if b_hat > capacity {
        return Err(Error::Parameter(format!("b_hat {b_hat} exceeds capacity {capacity}")));
    }
    let step = model.clipped_pmf(capacity)?;
    let c = capacity as usize;
    let mut dist = vec![0.0; c + 1];
    dist[b_hat as usize] = 1.0;
    let mut next = vec![0.0; c + 1];
    for _ in 0..age {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &pi) in dist.iter().enumerate().filter(|(_, p)| **p > 0.0) {
            for (j, &pj) in step.iter().enumerate() {
                next[(i + j).min(c)] += pi * pj;
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Ok(dist)
}

/// Clipped distributions of the total arrival over `0..=max_age` slots,
/// from which every `battery_growth_distribution` query is read off.
struct GrowthTable {
    capacity: usize,
    sums: Vec<Vec<f64>>,
}

impl GrowthTable {
    fn new(model: &EnergyModel, capacity: u32, max_age: u32) -> Result<Self> {
        let step = model.clipped_pmf(capacity)?;
        let c = capacity as usize;
        let mut sums = Vec::with_capacity(max_age as usize + 1);
        let mut cur = vec![0.0; c + 1];
        cur[0] = 1.0;
        sums.push(cur.clone());
        for _ in 0..max_age {
            let mut next = vec![0.0; c + 1];
            for (i, &pi) in cur.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                for (j, &pj) in step.iter().enumerate() {
                    next[(i + j).min(c)] += pi * pj;
                }
            }
            sums.push(next.clone());
            cur = next;
        }
        Ok(GrowthTable { capacity: c, sums })
    }

    fn battery(&self, b_hat: u32, age: u32) -> Vec<f64> {
        let c = self.capacity;
        let b = b_hat as usize;
        let s = &self.sums[age as usize];
        let mut out = vec![0.0; c + 1];
        out[b..c].copy_from_slice(&s[..c - b]);
        out[c] = s[c - b..].iter().sum();
        out
    }
}

/// Sensor parameters for the noiseless problem plus the AoFBL truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiselessParams {
    pub sensor: SensorParams,
    pub max_aofbl: u32,
}

impl NoiselessParams {
    /// Uses `max_aofbl = max_aocsi`.
    pub fn new(sensor: SensorParams) -> Result<Self> {
        let max_aofbl = sensor.max_aocsi;
        Self::with_max_aofbl(sensor, max_aofbl)
    }

    pub fn with_max_aofbl(sensor: SensorParams, max_aofbl: u32) -> Result<Self> {
        let p = NoiselessParams { sensor, max_aofbl };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if self.sensor.channel_success != 1.0 {
            return Err(Error::Parameter(format!(
                "noiseless model needs channel_success = 1 (got {})",
                self.sensor.channel_success
            )));
        }
        if self.max_aofbl < 1 {
            return Err(Error::Parameter("max_aofbl must be at least 1".into()));
        }
        Ok(())
    }

    /// A note when the age truncations are too short for the arrival rate
    /// (`lambda * min(max_aocsi, max_aofbl) < 3`).
    pub fn truncation_warning(&self) -> Option<String> {
        let lambda = self.sensor.lambda().ok()?;
        let tau0 = self.sensor.max_aocsi.min(self.max_aofbl) as f64;
        (lambda * tau0 < 3.0).then(|| {
            format!(
                "lambda * min(max_aocsi, max_aofbl) = {:.3} < 3: age truncation may bias the inferred battery level",
                lambda * tau0
            )
        })
    }
}

/// Feasible states with a dense lookup index.
#[derive(Debug, Clone)]
pub struct NoiselessSpace {
    pub capacity: u32,
    pub max_aocsi: u32,
    pub max_aofbl: u32,
    states: Vec<NoiselessState>,
    index: Vec<u32>,
}

impl NoiselessSpace {
    pub fn new(capacity: u32, max_aocsi: u32, max_aofbl: u32) -> Self {
        let states = enumerate_states(capacity, max_aocsi, max_aofbl);
        let mut space = NoiselessSpace {
            capacity,
            max_aocsi,
            max_aofbl,
            index: vec![u32::MAX; 2 * (capacity * max_aocsi * (max_aofbl + 1)) as usize],
            states: Vec::new(),
        };
        for (i, s) in states.iter().enumerate() {
            let k = space.slot(s);
            space.index[k] = i as u32;
        }
        space.states = states;
        space
    }

    fn slot(&self, s: &NoiselessState) -> usize {
        let (b, dl, dm) = (self.capacity as usize, self.max_aocsi as usize, self.max_aofbl as usize + 1);
        (((s.request as usize * b + s.b_hat as usize) * dl + (s.delta as usize - 1)) * dm) + s.d as usize
    }

    pub fn states(&self) -> &[NoiselessState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &NoiselessState) -> Option<usize> {
        if s.request > 1 || s.b_hat >= self.capacity || s.delta == 0 || s.delta > self.max_aocsi || s.d > self.max_aofbl {
            return None;
        }
        match self.index[self.slot(s)] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }
}

/// Builds the state space and the MDP over it.
pub fn build_noiseless_mdp(params: &NoiselessParams) -> Result<(NoiselessSpace, FiniteMdp)> {
    params.validate()?;
    let sp = &params.sensor;
    let (cap, dmax_age, fmax) = (sp.battery_capacity, sp.max_aocsi, params.max_aofbl);
    let space = NoiselessSpace::new(cap, dmax_age, fmax);
    let growth = GrowthTable::new(&sp.energy, cap, dmax_age.max(fmax))?;
    let eta = sp.request_prob;
    let rho = [1.0 - eta, eta];

    let idx = |s: NoiselessState| {
        space.index_of(&s).ok_or_else(|| Error::Validation(format!("successor {s:?} is infeasible")))
    };

    let mut builder = MdpBuilder::new(space.len());
    for (i, s) in space.states().iter().enumerate() {
        let aged = (s.delta + 1).min(dmax_age);
        let aged_d = if s.d > 0 { (s.d + 1).min(fmax) } else { 0 };

        let mut idle = Vec::with_capacity(2);
        for r in 0..2u8 {
            idle.push((idx(NoiselessState { request: r, b_hat: s.b_hat, delta: aged, d: aged_d })?, rho[r as usize]));
        }
        builder.add(i, 0, s.request as f64 * aged as f64, idle);

        if s.request == 1 {
            let beta = growth.battery(s.b_hat, s.aoibl());
            let eps = beta[0];
            let mut row = Vec::with_capacity(2 * cap as usize + 2);
            for r in 0..2u8 {
                for (level, &p) in beta.iter().enumerate().skip(1).filter(|(_, p)| **p > 0.0) {
                    let next = NoiselessState { request: r, b_hat: level as u32 - 1, delta: 1, d: 0 };
                    row.push((idx(next)?, rho[r as usize] * p));
                }
                if eps > 0.0 {
                    let next = NoiselessState { request: r, b_hat: 0, delta: aged, d: 1 };
                    row.push((idx(next)?, rho[r as usize] * eps));
                }
            }
            builder.add(i, 1, eps * aged as f64 + 1.0 - eps, row);
        }
    }
    Ok((space, builder.build()?))
}

/// Optimal noiseless policy as a table over the feasible states.
#[derive(Debug, Clone)]
pub struct NoPolicy {
    pub space: NoiselessSpace,
    pub actions: Vec<u8>,
    pub solution: RviSolution,
}

/// Solves the noiseless MDP by relative value iteration.
pub fn solve_no_policy(params: &NoiselessParams, opts: &RviOptions) -> Result<NoPolicy> {
    let (space, mdp) = build_noiseless_mdp(params)?;
    let solution = relative_value_iteration(&mdp, opts)?;
    let actions = solution.policy.iter().map(|&a| a as u8).collect();
    Ok(NoPolicy { space, actions, solution })
}

impl NoPolicy {
    pub fn gain(&self) -> f64 {
        self.solution.gain
    }

    pub fn action(&self, s: &NoiselessState) -> Option<u8> {
        self.space.index_of(s).map(|i| self.actions[i])
    }

    /// Action for a runtime tracker state.
    ///
    /// Ages are truncated to the table's ranges and a real-valued AoFBL is
    /// rounded; a state that is infeasible after rounding is projected onto
    /// the nearest feasible AoFBL.
    pub fn decide(&self, request: bool, tracker: &InferredPbsi) -> u8 {
        if !request {
            return 0;
        }
        let delta = tracker.delta.min(self.space.max_aocsi as u64) as u32;
        let mut d = if tracker.d == 0.0 {
            0
        } else {
            (tracker.d.round() as u32).clamp(1, self.space.max_aofbl)
        };
        if d > 0 && delta < self.space.max_aocsi && delta <= d {
            d = delta.saturating_sub(1);
        }
        let b_hat = if d > 0 { 0 } else { tracker.b_hat.min(self.space.capacity - 1) };
        let s = NoiselessState { request: 1, b_hat, delta, d };
        self.action(&s).unwrap_or(1)
    }

    /// CSV with columns `r,b_hat,delta,d,action`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,b_hat,delta,d,action\n");
        for (s, a) in self.space.states().iter().zip(&self.actions) {
            let _ = writeln!(out, "{},{},{},{},{}", s.request, s.b_hat, s.delta, s.d, a);
        }
        out
    }
}
