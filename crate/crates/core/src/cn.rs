//! Current-next decision rule.
//!
//! For a requesting sensor the rule compares the estimated total value of
//! updating now (retrying at every request until a success) with deferring
//! to the next request slot. Both estimates are affine in the horizon with
//! the same slope, so the horizon term is dropped and only the offsets are
//! kept.

use crate::error::{Error, Result};
use crate::mdp::RviOptions;
use crate::params::SensorParams;
use crate::post_update::{solve_post_update_values, PostUpdateTable};
use crate::tracker::InferredPbsi;

/// Deltas beyond this are evaluated directly instead of through the cache.
const MAX_CACHED_DELTA: u64 = 200_000;

/// Everything the rule needs for one sensor.
#[derive(Debug, Clone)]
pub struct CnContext {
    pub params: SensorParams,
    pub lambda: f64,
    pub p1: f64,
    pub gain: f64,
    pub table: PostUpdateTable,
}

impl CnContext {
    /// Solves the post-update values with the default block length.
    pub fn new(params: &SensorParams) -> Result<Self> {
        let table = solve_post_update_values(params, None, &RviOptions::default())?;
        Self::with_table(params, table)
    }

    pub fn with_table(params: &SensorParams, table: PostUpdateTable) -> Result<Self> {
        params.validate()?;
        let lambda = params.lambda()?;
        let p1 = params.positive_arrival_prob();
        if !(lambda > 0.0) || !(p1 > 0.0) {
            return Err(Error::Parameter("the rule needs a positive arrival rate".into()));
        }
        if table.values.len() != params.battery_capacity as usize {
            return Err(Error::Parameter("post-update table length differs from capacity".into()));
        }
        Ok(CnContext { params: params.clone(), lambda, p1, gain: table.gain_estimate, table })
    }

    fn eta(&self) -> f64 {
        self.params.request_prob
    }

    fn xi(&self) -> f64 {
        self.params.channel_success
    }

    fn max_aocsi(&self) -> f64 {
        self.params.max_aocsi as f64
    }

    fn h(&self, x: f64) -> f64 {
        self.table.h_tilde_at(x)
    }

    /// Expected slot index of the `i`-th request, counting the current one.
    pub fn phi0(&self, i: f64) -> f64 {
        1.0 + (i - 1.0) / self.eta()
    }

    /// Expected steps to the first success after the request retries ran out.
    pub fn phi1(&self, b: f64) -> f64 {
        let (xi, eta, lambda) = (self.xi(), self.eta(), self.lambda);
        (1.0 / (xi * lambda) - b / lambda).max(1.0 / (xi * eta) - 1.0 / eta + 1.0)
    }

    /// Expected energy spent over `x` steps.
    pub fn phi2(&self, x: f64) -> f64 {
        1.0 + self.eta() * (x - 1.0)
    }

    /// AoCSI at the `i`-th request.
    pub fn psi0(&self, delta: f64, i: u32) -> f64 {
        delta + self.phi0(i as f64)
    }

    /// Summed truncated AoCSI over the first `i` requests.
    pub fn psi1(&self, delta: f64, i: u32) -> f64 {
        (1..=i).map(|j| self.psi0(delta, j).min(self.max_aocsi())).sum()
    }

    /// Real-index interpolation of [`Self::psi1`].
    pub fn psi2(&self, delta: f64, x: f64) -> f64 {
        let fl = x.floor();
        let frac = x - fl;
        let mut out = self.psi1(delta, fl as u32);
        if frac > 0.0 {
            out += frac * self.psi0(delta, x.ceil() as u32).min(self.max_aocsi());
        }
        out
    }

    /// Value offset when the first success happens at the `i`-th request.
    pub fn v_hat(&self, b: f64, delta: f64, i: u32) -> f64 {
        let p = self.phi0(i as f64);
        1.0 + self.psi1(delta, i - 1) - p * self.gain + self.h(b - i as f64 + self.lambda * p - self.lambda)
    }

    /// Value offset when the first success happens at step `x`.
    pub fn v_tilde(&self, b: f64, delta: f64, x: f64) -> f64 {
        let arg = (b - self.phi2(x) + self.lambda * x - self.lambda).max(0.0);
        1.0 + self.eta() * self.psi2(delta, x - 1.0) - x * self.gain + self.h(arg)
    }

    /// Horizon-free value difference between updating now and waiting for
    /// the next request, from inferred battery `b_hat >= 1` and AoCSI `delta`.
    pub fn delta_v(&self, b_hat: u32, delta: u64) -> f64 {
        let (now, wait) = self.strategy_values(b_hat, delta as f64, 0.0);
        now - wait
    }

    /// The same difference computed with the horizon term `n_anchor * g`
    /// kept in both estimates.
    pub fn delta_v_anchored(&self, b_hat: u32, delta: u64, n_anchor: f64) -> f64 {
        let (now, wait) = self.strategy_values(b_hat, delta as f64, n_anchor);
        now - wait
    }

    fn strategy_values(&self, b_hat: u32, delta: f64, anchor: f64) -> (f64, f64) {
        let cap = self.params.battery_capacity as f64;
        let (xi, eta, lambda) = (self.xi(), self.eta(), self.lambda);
        let ng = anchor * self.gain;
        let b0 = (b_hat as f64 + lambda * delta).min(cap);
        let nbar = b0.floor() as u32;
        let b0p = (b0 + lambda / eta).min(cap);
        let phi_n = self.phi0(nbar as f64);
        let phi_n1 = self.phi0(nbar as f64 + 1.0);
        let b1 = b0 - nbar as f64 + lambda * phi_n;
        let b2 = b0p - nbar as f64 + lambda * phi_n;

        let mut now = 0.0;
        let mut wait = 0.0;
        let mut weight = xi;
        for i in 1..=nbar {
            now += weight * (self.v_hat(b0, delta, i) + ng);
            wait += weight * (self.v_hat(b0p - lambda / eta + 1.0, delta, i + 1) + ng);
            weight *= 1.0 - xi;
        }
        let tail = (1.0 - xi).powi(nbar as i32);
        if tail > 0.0 {
            let x1 = self.phi1(b1);
            let now_tail = self.psi1(delta, nbar) - phi_n * self.gain
                + self.v_tilde(b1, self.psi0(delta, nbar), x1)
                + ng;
            let x2 = self.phi1(b2);
            let wait_tail = self.psi1(delta, nbar + 1) - phi_n1 * self.gain
                + self.v_tilde(b2, self.psi0(delta, nbar + 1), x2)
                + ng;
            now += tail * now_tail;
            wait += tail * wait_tail;
        }
        (now, wait)
    }

    /// AoCSI from which the value difference no longer changes.
    pub fn saturation_delta(&self) -> u64 {
        let cap = self.params.battery_capacity as f64;
        (self.params.max_aocsi as u64).max((cap / self.lambda).ceil() as u64)
    }

    /// Action for a requesting or idle slot. An empty inferred battery
    /// borrows the decision of inferred battery 1 with no failure history.
    pub fn decide(&self, request: bool, state: &InferredPbsi) -> u8 {
        if !request {
            return 0;
        }
        (self.delta_v(state.b_hat.max(1), state.delta) < 0.0) as u8
    }

    /// Precomputes decisions for every `(b_hat, delta)` up to saturation.
    pub fn into_cached(self) -> CnPolicy {
        CnPolicy::new(self)
    }
}

/// [`CnContext`] with a decision table over `b_hat in [1, capacity - 1]`
/// and `delta` up to the saturation age.
#[derive(Debug, Clone)]
pub struct CnPolicy {
    pub ctx: CnContext,
    saturation: u64,
    table: Vec<Vec<bool>>,
}

impl CnPolicy {
    pub fn new(ctx: CnContext) -> Self {
        let saturation = ctx.saturation_delta();
        let table = if saturation <= MAX_CACHED_DELTA {
            (1..ctx.params.battery_capacity.max(2))
                .map(|b| (1..=saturation).map(|d| ctx.delta_v(b, d) < 0.0).collect())
                .collect()
        } else {
            Vec::new()
        };
        CnPolicy { ctx, saturation, table }
    }

    pub fn decide(&self, request: bool, state: &InferredPbsi) -> u8 {
        if !request {
            return 0;
        }
        let b = state.b_hat.max(1) as usize;
        match self.table.get(b - 1) {
            Some(row) => row[(state.delta.clamp(1, self.saturation) - 1) as usize] as u8,
            None => self.ctx.decide(true, state),
        }
    }

    /// Smallest `delta` in `[1, max_delta]` at which the rule updates from
    /// `b_hat`, or `None`.
    pub fn threshold(&self, b_hat: u32, max_delta: u64) -> Option<u64> {
        (1..=max_delta).find(|&d| {
            self.decide(true, &InferredPbsi { b_hat, delta: d, d: 0.0 }) == 1
        })
    }

    /// `(b_hat, delta, action)` over `b_hat in [0, capacity - 1]` and
    /// `delta in [1, max_delta]`.
    pub fn action_grid(&self, max_delta: u64) -> Vec<(u32, u64, u8)> {
        let mut out = Vec::new();
        for b in 0..self.ctx.params.battery_capacity {
            for d in 1..=max_delta {
                out.push((b, d, self.decide(true, &InferredPbsi { b_hat: b, delta: d, d: 0.0 })));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;

    fn ctx(lambda: f64, eta: f64, xi: f64) -> CnContext {
        let p = SensorParams::with_defaults(eta, xi, EnergyModel::bernoulli(lambda).unwrap());
        CnContext::new(&p).unwrap()
    }

    #[test]
    fn helper_examples() {
        let c = ctx(0.12, 0.5, 0.7);
        assert_eq!(c.phi0(3.0), 5.0);
        assert_eq!(c.psi1(5.0, 2), 14.0);
        assert_eq!(c.psi1(5.0, 0), 0.0);
        assert_eq!(c.psi2(5.0, 2.0), c.psi1(5.0, 2));
        let c1 = ctx(0.12, 1.0, 0.7);
        // psi1(3, 1) = min(3 + 1, 48); half of min(3 + 2, 48).
        assert_eq!(c1.psi2(3.0, 1.5), 4.0 + 0.5 * 5.0);
        assert_eq!(c1.psi2(3.0, 0.0), 0.0);
        assert_eq!(c1.phi2(1.0), 1.0);
    }

    #[test]
    fn unit_index_estimates() {
        let c = ctx(0.12, 1.0, 0.7);
        let b = 4.3;
        assert!((c.v_hat(b, 7.0, 1) - (1.0 - c.gain + c.h(b - 1.0))).abs() < 1e-12);
        assert!((c.v_tilde(b, 7.0, 1.0) - (1.0 - c.gain + c.h(b - 1.0))).abs() < 1e-12);
        assert!((c.v_tilde(0.4, 7.0, 1.0) - (1.0 - c.gain + c.h(0.0))).abs() < 1e-12);
    }

    #[test]
    fn horizon_cancels() {
        let c = ctx(0.12, 0.7, 0.7);
        for b in 1..15 {
            for d in [1u64, 5, 20, 48, 90, 200] {
                let free = c.delta_v(b, d);
                let a = c.delta_v_anchored(b, d, 1e3);
                let z = c.delta_v_anchored(b, d, 1e4);
                assert!((free - a).abs() < 1e-9 && (a - z).abs() < 1e-9, "b {b} d {d}");
            }
        }
    }

    #[test]
    fn corner_decisions() {
        let c = ctx(0.12, 0.7, 0.7);
        assert!(c.delta_v(14, 48) < 0.0);
        assert!(c.delta_v(1, 1) > 0.0);
        let s = InferredPbsi { b_hat: 0, delta: 30, d: 4.0 };
        let t = InferredPbsi { b_hat: 1, delta: 30, d: 0.0 };
        assert_eq!(c.decide(true, &s), c.decide(true, &t));
        assert_eq!(c.decide(false, &t), 0);
    }

    #[test]
    fn saturation_and_cache_agree() {
        let c = ctx(0.12, 0.7, 0.7);
        let sat = c.saturation_delta();
        assert_eq!(sat, 125);
        for b in 1..15 {
            assert_eq!(c.delta_v(b, sat), c.delta_v(b, sat + 37));
        }
        let pol = c.clone().into_cached();
        for b in 0..15 {
            for d in 1..300 {
                let s = InferredPbsi { b_hat: b, delta: d, d: 0.0 };
                assert_eq!(pol.decide(true, &s), c.decide(true, &s));
            }
        }
    }

    #[test]
    fn monotone_in_age() {
        let pol = ctx(0.12, 0.7, 0.7).into_cached();
        for b in 0..15 {
            let row: Vec<u8> = (1..=48).map(|d| pol.decide(true, &InferredPbsi { b_hat: b, delta: d, d: 0.0 })).collect();
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "b_hat {b}: {row:?}");
        }
    }
}
