//! Baseline MDP in which the controller sees the true battery level.

use std::fmt::Write as _;

use crate::error::Result;
use crate::mdp::{relative_value_iteration, FiniteMdp, MdpBuilder, RviOptions, RviSolution};
use crate::params::SensorParams;

/// `(r, b, delta)` with `b` the true battery level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EbsiState {
    pub request: u8,
    pub battery: u32,
    pub delta: u32,
}

/// Dense indexing of the `2 (capacity + 1) max_aocsi` states in
/// lexicographic `(r, b, delta)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EbsiSpace {
    pub capacity: u32,
    pub max_aocsi: u32,
}

impl EbsiSpace {
    pub fn len(&self) -> usize {
        2 * (self.capacity as usize + 1) * self.max_aocsi as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, s: &EbsiState) -> usize {
        let (b, dl) = (self.capacity as usize + 1, self.max_aocsi as usize);
        (s.request as usize * b + s.battery as usize) * dl + s.delta as usize - 1
    }

    pub fn state(&self, index: usize) -> EbsiState {
        let dl = self.max_aocsi as usize;
        let b = self.capacity as usize + 1;
        EbsiState {
            request: (index / (b * dl)) as u8,
            battery: ((index / dl) % b) as u32,
            delta: (index % dl) as u32 + 1,
        }
    }
}

/// Builds the exact-knowledge MDP. Energy is spent on every transmission,
/// including those the channel drops.
pub fn build_ebsi_mdp(params: &SensorParams) -> Result<(EbsiSpace, FiniteMdp)> {
    params.validate()?;
    let cap = params.battery_capacity;
    let dl = params.max_aocsi;
    let space = EbsiSpace { capacity: cap, max_aocsi: dl };
    let arrivals = params.energy.clipped_pmf(cap)?;
    let eta = params.request_prob;
    let xi = params.channel_success;
    let rho = [1.0 - eta, eta];

    let mut builder = MdpBuilder::new(space.len());
    let mut row = Vec::new();
    for i in 0..space.len() {
        let s = space.state(i);
        let aged = (s.delta + 1).min(dl);
        let actions: &[u32] = if s.request == 1 { &[0, 1] } else { &[0] };
        for &a in actions {
            let spent = (a == 1 && s.battery >= 1) as u32;
            let success = if spent == 1 { xi } else { 0.0 };
            row.clear();
            for (e, &pe) in arrivals.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                let battery = (s.battery - spent + e as u32).min(cap);
                for r in 0..2u8 {
                    let pr = rho[r as usize] * pe;
                    if success > 0.0 {
                        let next = EbsiState { request: r, battery, delta: 1 };
                        row.push((space.index_of(&next), pr * success));
                    }
                    if success < 1.0 {
                        let next = EbsiState { request: r, battery, delta: aged };
                        row.push((space.index_of(&next), pr * (1.0 - success)));
                    }
                }
            }
            let cost = s.request as f64 * (success + (1.0 - success) * aged as f64);
            builder.add(i, a, cost, row.iter().copied());
        }
    }
    Ok((space, builder.build()?))
}

/// Optimal exact-knowledge policy table.
#[derive(Debug, Clone)]
pub struct EbsiPolicy {
    pub space: EbsiSpace,
    pub actions: Vec<u8>,
    pub solution: RviSolution,
}

pub fn solve_ebsi_policy(params: &SensorParams, opts: &RviOptions) -> Result<EbsiPolicy> {
    let (space, mdp) = build_ebsi_mdp(params)?;
    let solution = relative_value_iteration(&mdp, opts)?;
    let actions = solution.policy.iter().map(|&a| a as u8).collect();
    Ok(EbsiPolicy { space, actions, solution })
}

impl EbsiPolicy {
    pub fn gain(&self) -> f64 {
        self.solution.gain
    }

    /// Action given the request flag, the true battery and the AoCSI
    /// (truncated to the table range).
    pub fn decide(&self, request: bool, battery: u32, delta: u64) -> u8 {
        if !request {
            return 0;
        }
        let s = EbsiState {
            request: 1,
            battery: battery.min(self.space.capacity),
            delta: delta.clamp(1, self.space.max_aocsi as u64) as u32,
        };
        self.actions[self.space.index_of(&s)]
    }

    /// `(battery, delta)` pairs with `r = 1` where the table updates at
    /// `delta` but not at `delta + 1`.
    pub fn threshold_violations(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for b in 0..=self.space.capacity {
            for delta in 1..self.space.max_aocsi {
                let now = self.decide(true, b, delta as u64);
                let next = self.decide(true, b, delta as u64 + 1);
                if now == 1 && next == 0 {
                    out.push((b, delta));
                }
            }
        }
        out
    }

    /// CSV with columns `r,b,delta,action`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,b,delta,action\n");
        for (i, a) in self.actions.iter().enumerate() {
            let s = self.space.state(i);
            let _ = writeln!(out, "{},{},{},{}", s.request, s.battery, s.delta, a);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;

    fn params(eta: f64, xi: f64, p: f64, cap: u32, dl: u32) -> SensorParams {
        SensorParams {
            battery_capacity: cap,
            max_aocsi: dl,
            weight: 1.0,
            request_prob: eta,
            channel_success: xi,
            energy: EnergyModel::bernoulli(p).unwrap(),
        }
    }

    #[test]
    fn index_roundtrip() {
        let sp = EbsiSpace { capacity: 4, max_aocsi: 6 };
        assert_eq!(sp.len(), 60);
        for i in 0..sp.len() {
            assert_eq!(sp.index_of(&sp.state(i)), i);
        }
        assert!(sp.state(0) < sp.state(1) && sp.state(5) < sp.state(6));
    }

    #[test]
    fn ideal_instance_has_unit_gain() {
        let pol = solve_ebsi_policy(&params(1.0, 1.0, 1.0, 3, 5), &RviOptions::default()).unwrap();
        assert!((pol.gain() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_battery_update_is_idle() {
        let p = params(0.7, 0.7, 0.3, 4, 6);
        let (space, mdp) = build_ebsi_mdp(&p).unwrap();
        for delta in 1..=6 {
            let i = space.index_of(&EbsiState { request: 1, battery: 0, delta });
            let idle = mdp.choice_for(i, 0).unwrap();
            let upd = mdp.choice_for(i, 1).unwrap();
            assert_eq!(idle.cost, upd.cost);
            assert_eq!(mdp.transitions(idle), mdp.transitions(upd));
        }
    }

    #[test]
    fn drop_still_spends_energy() {
        let p = params(1.0, 0.5, 0.0, 4, 6);
        let (space, mdp) = build_ebsi_mdp(&p).unwrap();
        let i = space.index_of(&EbsiState { request: 1, battery: 3, delta: 2 });
        let c = mdp.choice_for(i, 1).unwrap();
        assert!((c.cost - (0.5 + 0.5 * 3.0)).abs() < 1e-15);
        for &(next, _) in mdp.transitions(c) {
            assert_eq!(space.state(next as usize).battery, 2);
        }
    }

    #[test]
    fn csv_shape() {
        let pol = solve_ebsi_policy(&params(0.7, 0.7, 0.3, 2, 4), &RviOptions::default()).unwrap();
        let csv = pol.to_csv();
        assert!(csv.starts_with("r,b,delta,action\n"));
        assert_eq!(csv.lines().count(), 1 + 24);
    }
}
