//! Per-slot energy arrival models and the capacity-clipped moments used by
//! every policy solver.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of an explicit table.
const MASS_TOL: f64 = 1e-12;

/// Distribution of the (i.i.d.) amount of energy harvested in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnergyModel {
    /// One unit with probability `p`, nothing otherwise.
    Bernoulli { p: f64 },
    /// Poisson-distributed number of units.
    Poisson { mean: f64 },
    /// Explicit finite distribution.
    Table { support: Vec<u32>, probs: Vec<f64> },
}

impl EnergyModel {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let m = EnergyModel::Bernoulli { p };
        m.validate()?;
        Ok(m)
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        let m = EnergyModel::Poisson { mean };
        m.validate()?;
        Ok(m)
    }

    pub fn table(support: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        let m = EnergyModel::Table { support, probs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyModel::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Parameter(format!("bernoulli p = {p} is not in [0, 1]")));
                }
            }
            EnergyModel::Poisson { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return Err(Error::Parameter(format!("poisson mean = {mean} must be positive")));
                }
            }
            EnergyModel::Table { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return Err(Error::Parameter(format!(
                        "energy table needs matching non-empty support/probs (got {} and {})",
                        support.len(),
                        probs.len()
                    )));
                }
                if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return Err(Error::Parameter(format!("energy table probability {p} is negative")));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::Parameter(format!("energy table probabilities sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Mean of the unclipped arrival.
    pub fn mean(&self) -> f64 {
        match self {
            EnergyModel::Bernoulli { p } => *p,
            EnergyModel::Poisson { mean } => *mean,
            EnergyModel::Table { support, probs } => {
                support.iter().zip(probs).map(|(&s, &p)| s as f64 * p).sum()
            }
        }
    }

    /// The model's nominal sweep parameter (`p` or `mean`); `None` for tables.
    pub fn nominal(&self) -> Option<f64> {
        match self {
            EnergyModel::Bernoulli { p } => Some(*p),
            EnergyModel::Poisson { mean } => Some(*mean),
            EnergyModel::Table { .. } => None,
        }
    }

    /// Same family with a new nominal parameter.
    pub fn with_nominal(&self, value: f64) -> Result<Self> {
        match self {
            EnergyModel::Bernoulli { .. } => EnergyModel::bernoulli(value),
            EnergyModel::Poisson { .. } => EnergyModel::poisson(value),
            EnergyModel::Table { .. } => Err(Error::Parameter(
                "a table energy model has no nominal parameter to sweep".into(),
            )),
        }
    }

    /// Distribution of `min(E, capacity)` as a dense vector over `0..=capacity`.
    ///
    /// All mass at or above the capacity is lumped into the last entry, which
    /// makes the Poisson moments exact without an infinite sum.
    pub fn clipped_pmf(&self, capacity: u32) -> Result<Vec<f64>> {
        self.validate()?;
        if capacity == 0 {
            return Err(Error::Parameter("capacity must be at least 1".into()));
        }
        let c = capacity as usize;
        let mut pmf = vec![0.0; c + 1];
        match self {
            EnergyModel::Bernoulli { p } => {
                pmf[0] = 1.0 - p;
                pmf[1] += p;
            }
            EnergyModel::Poisson { mean } => {
                let ln_mean = mean.ln();
                let mut ln_fact = 0.0;
                let mut below = 0.0;
                for (k, slot) in pmf.iter_mut().enumerate().take(c) {
                    if k > 0 {
                        ln_fact += (k as f64).ln();
                    }
                    let pk = (k as f64 * ln_mean - mean - ln_fact).exp();
                    *slot = pk;
                    below += pk;
                }
                pmf[c] = (1.0 - below).max(0.0);
            }
            EnergyModel::Table { support, probs } => {
                for (&s, &p) in support.iter().zip(probs) {
                    pmf[(s as usize).min(c)] += p;
                }
            }
        }
        Ok(pmf)
    }

    /// Probability of a positive arrival, `P{E > 0}`.
    pub fn positive_prob(&self) -> f64 {
        match self {
            EnergyModel::Bernoulli { p } => *p,
            EnergyModel::Poisson { mean } => 1.0 - (-mean).exp(),
            EnergyModel::Table { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(s, _)| **s > 0)
                .map(|(_, p)| *p)
                .sum(),
        }
    }
}

/// `E[min(E, capacity)]`, the effective energy arrival rate.
pub fn clipped_mean(model: &EnergyModel, capacity: u32) -> Result<f64> {
    let pmf = model.clipped_pmf(capacity)?;
    Ok(pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum())
}

/// Standard deviation of `min(E, capacity)`.
pub fn clipped_std(model: &EnergyModel, capacity: u32) -> Result<f64> {
    let pmf = model.clipped_pmf(capacity)?;
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let var: f64 = pmf
        .iter()
        .enumerate()
        .map(|(k, p)| (k as f64 - mean).powi(2) * p)
        .sum();
    Ok(var.max(0.0).sqrt())
}

/// Prepared sampler for repeated draws from one model.
#[derive(Debug, Clone)]
pub enum EnergySampler {
    Bernoulli(f64),
    Poisson(Poisson<f64>),
    Table { values: Vec<u32>, cdf: Vec<f64> },
}

impl EnergySampler {
    pub fn new(model: &EnergyModel) -> Result<Self> {
        model.validate()?;
        Ok(match model {
            EnergyModel::Bernoulli { p } => EnergySampler::Bernoulli(*p),
            EnergyModel::Poisson { mean } => EnergySampler::Poisson(
                Poisson::new(*mean).map_err(|e| Error::Parameter(e.to_string()))?,
            ),
            EnergyModel::Table { support, probs } => {
                let mut acc = 0.0;
                let cdf = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                EnergySampler::Table { values: support.clone(), cdf }
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            EnergySampler::Bernoulli(p) => u32::from(rng.random::<f64>() < *p),
            EnergySampler::Poisson(d) => d.sample(rng) as u32,
            EnergySampler::Table { values, cdf } => {
                let u: f64 = rng.random();
                let idx = cdf.partition_point(|&c| c <= u).min(values.len() - 1);
                values[idx]
            }
        }
    }
}

/// One draw from the unclipped arrival distribution.
pub fn sample_energy<R: Rng + ?Sized>(model: &EnergyModel, rng: &mut R) -> Result<u32> {
    Ok(EnergySampler::new(model)?.sample(rng))
}
