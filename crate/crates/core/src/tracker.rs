//! Edge-node tracking of the inferred partial battery state.
//!
//! After each slot the edge node knows only whether it commanded an update
//! and, if one arrived, the battery level it carried. Failed updates are
//! folded into a real-valued "age of failure-inferred battery level" that
//! stands for the expected battery divided by the arrival rate.

use crate::error::{Error, Result};
use crate::params::SensorParams;

/// `(b_hat, delta, d)`: inferred battery level, untruncated AoCSI and the
/// generalized AoFBL (`0` or at least `1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferredPbsi {
    pub b_hat: u32,
    pub delta: u64,
    pub d: f64,
}

impl Default for InferredPbsi {
    fn default() -> Self {
        InferredPbsi { b_hat: 0, delta: 1, d: 0.0 }
    }
}

impl InferredPbsi {
    /// Age of the inferred battery level, `delta * 1{d = 0} + d`.
    pub fn aoibl(&self) -> f64 {
        aoibl(self.delta as f64, self.d)
    }
}

pub fn aoibl(delta: f64, d: f64) -> f64 {
    if d == 0.0 {
        delta
    } else {
        d
    }
}

/// What the edge node observed after its command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// No command was issued.
    NoTx,
    /// An update arrived carrying the sensor's battery level at send time.
    Success { reported_battery: u32 },
    /// A command was issued but nothing arrived.
    Failure,
}

/// Per-sensor constants the tracker needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerModel {
    pub capacity: u32,
    pub channel_success: f64,
    /// Clipped mean arrival rate.
    pub lambda: f64,
    /// `P{E > 0}`.
    pub p1: f64,
}

impl TrackerModel {
    pub fn from_params(p: &SensorParams) -> Result<Self> {
        p.validate()?;
        Ok(TrackerModel {
            capacity: p.battery_capacity,
            channel_success: p.channel_success,
            lambda: p.lambda()?,
            p1: p.positive_arrival_prob(),
        })
    }
}

/// Advances the tracker by one slot.
pub fn update_inferred_pbsi(
    state: &InferredPbsi,
    commanded: bool,
    outcome: UpdateOutcome,
    model: &TrackerModel,
) -> Result<InferredPbsi> {
    match (commanded, outcome) {
        (false, UpdateOutcome::NoTx) => Ok(InferredPbsi {
            b_hat: state.b_hat,
            delta: state.delta + 1,
            d: if state.d > 0.0 { state.d + 1.0 } else { 0.0 },
        }),
        (true, UpdateOutcome::Success { reported_battery }) => {
            if reported_battery < 1 || reported_battery > model.capacity {
                return Err(Error::Protocol(format!(
                    "reported battery {reported_battery} outside [1, {}]",
                    model.capacity
                )));
            }
            Ok(InferredPbsi { b_hat: reported_battery - 1, delta: 1, d: 0.0 })
        }
        (true, UpdateOutcome::Failure) => {
            let d = if state.b_hat >= 1 {
                0.0
            } else {
                failure_aofbl(state.aoibl(), model)
            };
            Ok(InferredPbsi { b_hat: state.b_hat.saturating_sub(1), delta: state.delta + 1, d })
        }
        (c, o) => Err(Error::Protocol(format!("outcome {o:?} inconsistent with command {c}"))),
    }
}

/// AoFBL after a failed update from an empty inferred battery:
/// `(1-xi)(tau - theta/lambda)/(1 - theta*xi) + 1`, `theta = 1 - (1-p1)^tau`.
fn failure_aofbl(tau: f64, model: &TrackerModel) -> f64 {
    let xi = model.channel_success;
    if xi >= 1.0 {
        return 1.0;
    }
    let theta = 1.0 - (1.0 - model.p1).powf(tau);
    let expected_age = if model.lambda > 0.0 { theta / model.lambda } else { 0.0 };
    (1.0 - xi) * (tau - expected_age) / (1.0 - theta * xi) + 1.0
}
