//! Block-level value iteration that estimates the optimal gain and the
//! value of each post-update battery level.
//!
//! Time is cut into blocks of `n` slots. A block starts right after a
//! successful update with inferred battery `b_hat`, sees a block energy
//! arrival drawn from a three-point law, and chooses the inferred battery
//! level of the next block. The block cost is an offline estimate of the
//! total on-demand AoCSI given the number of updates it spends.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::mdp::{relative_value_iteration, FiniteMdp, MdpBuilder, RviOptions, RviSolution};
use crate::params::SensorParams;

const PROB_TOL: f64 = 1e-12;

/// Three-point (or, for deterministic arrivals, one-point) block energy law.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEnergyDist {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BlockEnergyDist {
    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.probs).map(|(e, p)| e * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.points.iter().zip(&self.probs).map(|(e, p)| p * (e - m) * (e - m)).sum()
    }
}

/// Points `n lambda` and `n lambda +- 3 sigma sqrt(n)` (the lower one
/// floored at 1) with masses `p_lo`, `17/18 - p_lo` and `1/18`.
pub fn block_energy_distribution(lambda: f64, sigma: f64, n: u32) -> Result<BlockEnergyDist> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda {lambda} must be positive")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma {sigma} must be nonnegative")));
    }
    if n < 1 {
        return Err(Error::Parameter("block length must be at least 1".into()));
    }
    let mid = n as f64 * lambda;
    if sigma == 0.0 {
        return Ok(BlockEnergyDist { points: vec![mid], probs: vec![1.0] });
    }
    let spread = 3.0 * sigma * (n as f64).sqrt();
    let lo = (mid - spread).max(1.0);
    let hi = mid + spread;
    if mid <= lo {
        return Err(Error::Parameter(format!(
            "block mean {mid} does not exceed the floored low point {lo}"
        )));
    }
    let p_lo = sigma * (n as f64).sqrt() / (6.0 * (mid - lo));
    let p_hi = 1.0 / 18.0;
    let p_mid = 17.0 / 18.0 - p_lo;
    if p_mid < 0.0 {
        return Err(Error::Parameter(format!(
            "low-point mass {p_lo} exceeds 17/18; block too short for this arrival spread"
        )));
    }
    Ok(BlockEnergyDist { points: vec![lo, mid, hi], probs: vec![p_lo, p_mid, p_hi] })
}

/// Geometry shared by every block of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGeometry {
    pub n: u32,
    pub request_prob: f64,
    pub channel_success: f64,
    pub max_aocsi: u32,
    pub capacity: u32,
}

impl BlockGeometry {
    fn requests(&self) -> f64 {
        self.n as f64 * self.request_prob
    }

    /// Real interval `[lo, hi]` of next-block battery levels.
    pub fn action_window(&self, b_hat: u32, energy: f64) -> (f64, f64) {
        let top = (self.capacity - 1) as f64;
        let avail = b_hat as f64 + energy;
        ((avail - self.requests()).clamp(0.0, top), avail.min(top))
    }

    /// Integer actions in the window. When the window holds no integer the
    /// largest integer below its upper end is the only action.
    pub fn allowed_actions(&self, b_hat: u32, energy: f64) -> std::ops::RangeInclusive<u32> {
        let (lo, hi) = self.action_window(b_hat, energy);
        let hi = hi.floor() as u32;
        let lo = (lo.ceil() as u32).min(hi);
        lo..=hi
    }

    /// Block cost for moving from `b_hat` to `q` with block energy `energy`.
    pub fn block_cost(&self, b_hat: u32, energy: f64, q: u32) -> Result<f64> {
        if !self.allowed_actions(b_hat, energy).contains(&q) {
            return Err(Error::Precondition(format!(
                "action {q} not allowed from battery {b_hat} with block energy {energy}"
            )));
        }
        let u = (b_hat as f64 + energy - q as f64).min(self.requests());
        Ok(block_cost_for_updates(u, self.n, self.request_prob, self.channel_success, self.max_aocsi))
    }
}

/// Offline estimate of a block's total on-demand AoCSI when `u` updates are
/// spent on it.
pub fn block_cost_for_updates(u: f64, n: u32, eta: f64, xi: f64, max_aocsi: u32) -> f64 {
    let n = n as f64;
    let dl = max_aocsi as f64;
    if u <= 0.0 {
        return dl * n * eta;
    }
    let su = xi * u;
    if n / su <= dl {
        n * eta - n / 2.0 + n * n * eta / (2.0 * su)
    } else {
        dl * n * eta - (dl - 1.0) * su - (dl - 1.0) * (dl - 2.0) * su * (n * eta - su) / (2.0 * (n - su))
    }
}

/// `round(capacity / lambda)`, at least 1.
pub fn default_block_length(capacity: u32, lambda: f64) -> Result<u32> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda {lambda} must be positive")));
    }
    let n = (capacity as f64 / lambda).round();
    if n > u32::MAX as f64 {
        return Err(Error::Parameter(format!("block length {n} too large")));
    }
    Ok((n as u32).max(1))
}

/// Builds the block MDP over `(b_hat, energy point)` states, indexed
/// `b_hat * points + j`.
pub fn build_block_mdp(geom: &BlockGeometry, dist: &BlockEnergyDist) -> Result<FiniteMdp> {
    let m = dist.points.len();
    let mut builder = MdpBuilder::new(geom.capacity as usize * m);
    for b in 0..geom.capacity {
        for (j, &e) in dist.points.iter().enumerate() {
            let state = b as usize * m + j;
            for q in geom.allowed_actions(b, e) {
                let cost = geom.block_cost(b, e, q)?;
                let row = dist.probs.iter().enumerate().map(|(k, &p)| (q as usize * m + k, p));
                builder.add(state, q, cost, row);
            }
        }
    }
    builder.build()
}

/// Solver output: per-slot gain estimate and post-update values.
#[derive(Debug, Clone, PartialEq)]
pub struct PostUpdateTable {
    pub gain_estimate: f64,
    pub values: Vec<f64>,
    pub block_length: u32,
    pub num_states: usize,
    pub iterations: usize,
    pub final_span: f64,
    pub work_per_iteration: u64,
}

impl PostUpdateTable {
    /// Linear interpolation on the integer grid, clamped outside it.
    pub fn h_tilde_at(&self, x: f64) -> f64 {
        h_tilde_at(&self.values, x)
    }

    /// Indices `b` where `h(b + 1) > h(b)`.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + 1e-9)
            .map(|(i, _)| i)
            .collect()
    }

    /// CSV with columns `b_hat,h_tilde`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b_hat,h_tilde\n");
        for (b, h) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{b},{}", fmt_sig(*h));
        }
        out
    }
}

pub fn h_tilde_at(values: &[f64], x: f64) -> f64 {
    let top = values.len() - 1;
    if !(x > 0.0) {
        return values[0];
    }
    if x >= top as f64 {
        return values[top];
    }
    let i = x.floor() as usize;
    let t = x - i as f64;
    if t == 0.0 {
        values[i]
    } else {
        values[i] + t * (values[i + 1] - values[i])
    }
}

/// Solves the block MDP for a sensor. `block_length = None` uses
/// `round(capacity / lambda)`.
pub fn solve_post_update_values(
    params: &SensorParams,
    block_length: Option<u32>,
    opts: &RviOptions,
) -> Result<PostUpdateTable> {
    params.validate()?;
    let lambda = params.lambda()?;
    let sigma = params.sigma()?;
    let n = match block_length {
        Some(n) => n,
        None => default_block_length(params.battery_capacity, lambda)?,
    };
    let dist = block_energy_distribution(lambda, sigma, n)?;
    debug_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < PROB_TOL);
    let geom = BlockGeometry {
        n,
        request_prob: params.request_prob,
        channel_success: params.channel_success,
        max_aocsi: params.max_aocsi,
        capacity: params.battery_capacity,
    };
    let mdp = build_block_mdp(&geom, &dist)?;
    let sol = solve_with_fallback(&mdp, opts)?;
    let m = dist.points.len();
    let values = (0..params.battery_capacity as usize)
        .map(|b| dist.probs.iter().enumerate().map(|(j, p)| p * sol.bias[b * m + j]).sum())
        .collect();
    Ok(PostUpdateTable {
        gain_estimate: sol.gain / n as f64,
        values,
        block_length: n,
        num_states: mdp.num_states(),
        iterations: sol.iterations,
        final_span: sol.final_span,
        work_per_iteration: sol.work_per_iteration,
    })
}

/// Block transitions pick the next battery deterministically, so the chain
/// can be periodic; fall back to the aperiodicity transform if the plain
/// iteration stalls.
fn solve_with_fallback(mdp: &FiniteMdp, opts: &RviOptions) -> Result<RviSolution> {
    match relative_value_iteration(mdp, opts) {
        Err(Error::IterationLimit { .. }) if opts.aperiodicity == 0.0 => {
            relative_value_iteration(mdp, &RviOptions { aperiodicity: 0.5, ..*opts })
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyModel;

    fn sensor(eta: f64, xi: f64, energy: EnergyModel) -> SensorParams {
        SensorParams::with_defaults(eta, xi, energy)
    }

    #[test]
    fn three_point_example() {
        let sigma = (0.12f64 * 0.88).sqrt();
        let d = block_energy_distribution(0.12, sigma, 125).unwrap();
        assert!((d.points[1] - 15.0).abs() < 1e-12);
        let spread = 3.0 * sigma * 125f64.sqrt();
        assert!((d.points[0] - (15.0 - spread)).abs() < 1e-12);
        assert!((d.points[2] - (15.0 + spread)).abs() < 1e-12);
        assert!((d.points[0] - 4.1005).abs() < 1e-4 && (d.points[2] - 25.8995).abs() < 1e-4);
        assert!((d.probs[0] - 1.0 / 18.0).abs() < 1e-12);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 15.0).abs() < 1e-9);
        assert!((d.variance() - 125.0 * sigma * sigma).abs() < 1e-9);
    }

    #[test]
    fn floored_low_point_keeps_mean() {
        let d = block_energy_distribution(0.5, 0.5, 6).unwrap();
        assert_eq!(d.points[0], 1.0);
        assert!((d.mean() - 3.0).abs() < 1e-12);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_distributions() {
        let d = block_energy_distribution(0.2, 0.0, 10).unwrap();
        assert_eq!(d.points, vec![2.0]);
        assert_eq!(d.probs, vec![1.0]);
        assert!(block_energy_distribution(0.1, 0.3, 5).is_err(), "mean below 1");
        assert!(block_energy_distribution(1.05, 3.0, 1).is_err(), "low mass too large");
    }

    #[test]
    fn block_cost_examples() {
        assert!((block_cost_for_updates(2.0, 4, 1.0, 1.0, 48) - 6.0).abs() < 1e-12);
        let (n, eta) = (10u32, 0.5);
        let full = block_cost_for_updates(n as f64 * eta, n, eta, 1.0, 48);
        // Every request in a fully served block sees age 1.
        assert!((full - n as f64 * eta).abs() < 1e-12);
        assert_eq!(block_cost_for_updates(0.0, 10, 0.7, 0.7, 48), 48.0 * 7.0);
    }

    #[test]
    fn block_cost_decreases_with_updates() {
        for &(n, eta, xi) in &[(125u32, 0.7, 0.7), (50, 0.7, 0.4), (300, 0.4, 1.0), (8, 1.0, 1.0)] {
            let top = n as f64 * eta;
            let mut prev = block_cost_for_updates(0.0, n, eta, xi, 48);
            for k in 1..=400 {
                let u = top * k as f64 / 400.0;
                let c = block_cost_for_updates(u, n, eta, xi, 48);
                assert!(c <= prev + 1e-9, "n {n} eta {eta} xi {xi} u {u}");
                prev = c;
            }
        }
    }

    #[test]
    fn actions_respect_window() {
        let g = BlockGeometry { n: 125, request_prob: 0.7, channel_success: 0.7, max_aocsi: 48, capacity: 15 };
        assert_eq!(g.allowed_actions(0, 15.0), 0..=14);
        assert_eq!(g.allowed_actions(14, 25.9), 0..=14);
        let short = BlockGeometry { n: 10, ..g };
        assert_eq!(short.allowed_actions(14, 25.9), 14..=14);
        assert_eq!(short.allowed_actions(3, 4.1), 1..=7);
        assert!(g.block_cost(0, 4.1, 5).is_err());
        let tight = BlockGeometry { n: 1, request_prob: 0.3, ..g };
        assert_eq!(tight.allowed_actions(2, 1.5), 3..=3);
    }

    #[test]
    fn interpolation_rules() {
        let v = [4.0, 3.0, 1.0, 0.0];
        assert_eq!(h_tilde_at(&v, 1.0), 3.0);
        assert_eq!(h_tilde_at(&v, 1.5), 2.0);
        assert_eq!(h_tilde_at(&v, -1.7), 4.0);
        assert_eq!(h_tilde_at(&v, 7.0), 0.0);
        assert_eq!(h_tilde_at(&v, 3.0), 0.0);
    }

    #[test]
    fn solves_reference_instance() {
        let p = sensor(0.7, 0.7, EnergyModel::bernoulli(0.12).unwrap());
        let t = solve_post_update_values(&p, None, &RviOptions::default()).unwrap();
        assert_eq!(t.block_length, 125);
        assert_eq!(t.num_states, 45);
        assert_eq!(t.values.len(), 15);
        assert!(t.work_per_iteration <= 9 * 15 * 15);
        assert!(t.final_span < 1e-6);
        assert!(t.values.iter().all(|v| v.is_finite()));
        assert!(t.gain_estimate > 1.0 && t.gain_estimate < 48.0);
    }

    #[test]
    fn deterministic_arrivals_use_one_point() {
        let p = sensor(0.7, 0.7, EnergyModel::table(vec![1], vec![1.0]).unwrap());
        let t = solve_post_update_values(&p, None, &RviOptions::default()).unwrap();
        assert_eq!(t.num_states, 15);
        assert_eq!(t.block_length, 15);
    }
}
