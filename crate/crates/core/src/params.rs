use serde::{Deserialize, Serialize};

use crate::energy::{clipped_mean, clipped_std, EnergyModel};
use crate::error::{Error, Result};

/// Constants describing one sensor and its link to the edge node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Battery capacity in energy units.
    pub battery_capacity: u32,
    /// Maximum admissible age of cached status information, in slots.
    pub max_aocsi: u32,
    /// Cost weight of the sensor's physical quantity.
    pub weight: f64,
    /// Per-slot probability that a monitor requests this quantity.
    pub request_prob: f64,
    /// Success probability of the sensor-to-edge packet-drop channel.
    pub channel_success: f64,
    pub energy: EnergyModel,
}

impl SensorParams {
    /// Parameters with the defaults used throughout the experiments
    /// (capacity 15, max AoCSI 48, unit weight).
    pub fn with_defaults(request_prob: f64, channel_success: f64, energy: EnergyModel) -> Self {
        SensorParams {
            battery_capacity: 15,
            max_aocsi: 48,
            weight: 1.0,
            request_prob,
            channel_success,
            energy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.battery_capacity < 1 {
            return Err(Error::Parameter("battery_capacity must be at least 1".into()));
        }
        if self.max_aocsi < 2 {
            return Err(Error::Parameter("max_aocsi must be at least 2".into()));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::Parameter(format!("weight {} must be nonnegative", self.weight)));
        }
        if !(self.request_prob > 0.0 && self.request_prob <= 1.0) {
            return Err(Error::Parameter(format!(
                "request_prob {} must be in (0, 1]",
                self.request_prob
            )));
        }
        if !(self.channel_success > 0.0 && self.channel_success <= 1.0) {
            return Err(Error::Parameter(format!(
                "channel_success {} must be in (0, 1]",
                self.channel_success
            )));
        }
        self.energy.validate()
    }

    /// Capacity-clipped mean arrival rate.
    pub fn lambda(&self) -> Result<f64> {
        clipped_mean(&self.energy, self.battery_capacity)
    }

    /// Standard deviation of the capacity-clipped arrival.
    pub fn sigma(&self) -> Result<f64> {
        clipped_std(&self.energy, self.battery_capacity)
    }

    /// `P{E > 0}`.
    pub fn positive_arrival_prob(&self) -> f64 {
        self.energy.positive_prob()
    }
}

/// A complete multi-sensor simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub sensors: Vec<SensorParams>,
    /// Maximum number of sensors that may update in the same slot.
    pub k0: usize,
    pub horizon: u64,
    pub episodes: u64,
    pub seed: u64,
    /// Battery level of every sensor at the start of an episode.
    #[serde(default)]
    pub initial_battery: u32,
}

impl SystemConfig {
    pub fn single(params: SensorParams, horizon: u64, episodes: u64, seed: u64) -> Self {
        SystemConfig { sensors: vec![params], k0: 1, horizon, episodes, seed, initial_battery: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::Parameter("at least one sensor is required".into()));
        }
        if self.k0 < 1 || self.k0 > self.sensors.len() {
            return Err(Error::Parameter(format!(
                "k0 = {} must be in [1, {}]",
                self.k0,
                self.sensors.len()
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Parameter("horizon must be positive".into()));
        }
        if self.episodes < 1 {
            return Err(Error::Parameter("episodes must be positive".into()));
        }
        for (k, s) in self.sensors.iter().enumerate() {
            s.validate().map_err(|e| Error::Parameter(format!("sensor {k}: {e}")))?;
            if self.initial_battery > s.battery_capacity {
                return Err(Error::Parameter(format!(
                    "initial_battery {} exceeds the capacity of sensor {k}",
                    self.initial_battery
                )));
            }
        }
        Ok(())
    }

    /// Mean clipped arrival rate over all sensors.
    pub fn mean_lambda(&self) -> Result<f64> {
        let mut total = 0.0;
        for s in &self.sensors {
            total += s.lambda()?;
        }
        Ok(total / self.sensors.len() as f64)
    }
}
