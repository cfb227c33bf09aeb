//! Named policies prepared for a concrete system configuration.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::cn::{CnContext, CnPolicy};
use crate::ebsi::{solve_ebsi_policy, EbsiPolicy};
use crate::error::{Error, Result};
use crate::mdp::RviOptions;
use crate::noiseless::{solve_no_policy, NoPolicy, NoiselessParams};
use crate::params::{SensorParams, SystemConfig};
use crate::scheduling::{
    maf_select, oft_search, random_cn_select, weighted_update_gain, wugc_select, OftThresholds,
    SensorSnapshot,
};

/// Registered policy names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    No,
    Cn,
    EbsiOpt,
    Oft,
    Maf,
    WugcCn,
    RandomCn,
    Always,
    Never,
}

impl PolicyName {
    pub const ALL: [PolicyName; 9] = [
        PolicyName::No,
        PolicyName::Cn,
        PolicyName::EbsiOpt,
        PolicyName::Oft,
        PolicyName::Maf,
        PolicyName::WugcCn,
        PolicyName::RandomCn,
        PolicyName::Always,
        PolicyName::Never,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::No => "no",
            PolicyName::Cn => "cn",
            PolicyName::EbsiOpt => "ebsi-opt",
            PolicyName::Oft => "oft",
            PolicyName::Maf => "maf",
            PolicyName::WugcCn => "wugc-cn",
            PolicyName::RandomCn => "random-cn",
            PolicyName::Always => "always",
            PolicyName::Never => "never",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = PolicyName::ALL.iter().map(|p| p.as_str()).collect();
                Error::Parameter(format!("unknown policy '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Settings used while preparing policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub rvi: RviOptions,
    /// Slots of common-random-number simulation per threshold pair.
    pub oft_eval_slots: u64,
    pub oft_seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions { rvi: RviOptions::default(), oft_eval_slots: 200_000, oft_seed: 0x0f7 }
    }
}

/// Per-sensor solutions memoized by sensor parameters, so sensors (and
/// sweep points) sharing parameters are solved once.
#[derive(Debug, Default)]
pub struct SolverCache {
    cn: Vec<(SensorParams, Arc<CnPolicy>)>,
    no: Vec<(SensorParams, Arc<NoPolicy>)>,
    ebsi: Vec<(SensorParams, Arc<EbsiPolicy>)>,
    oft: Vec<(SensorParams, OftThresholds)>,
}

fn memo<T: Clone>(
    store: &mut Vec<(SensorParams, T)>,
    key: &SensorParams,
    solve: impl FnOnce() -> Result<T>,
) -> Result<T> {
    if let Some((_, v)) = store.iter().find(|(k, _)| k == key) {
        return Ok(v.clone());
    }
    let v = solve()?;
    store.push((key.clone(), v.clone()));
    Ok(v)
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cn(&mut self, p: &SensorParams, opts: &PrepareOptions) -> Result<Arc<CnPolicy>> {
        memo(&mut self.cn, p, || {
            let table = crate::post_update::solve_post_update_values(p, None, &opts.rvi)?;
            Ok(Arc::new(CnContext::with_table(p, table)?.into_cached()))
        })
    }

    /// The noiseless table is solved with the channel treated as perfect.
    pub fn no(&mut self, p: &SensorParams, opts: &PrepareOptions) -> Result<Arc<NoPolicy>> {
        memo(&mut self.no, p, || {
            let sensor = SensorParams { channel_success: 1.0, ..p.clone() };
            Ok(Arc::new(solve_no_policy(&NoiselessParams::new(sensor)?, &opts.rvi)?))
        })
    }

    pub fn ebsi(&mut self, p: &SensorParams, opts: &PrepareOptions) -> Result<Arc<EbsiPolicy>> {
        memo(&mut self.ebsi, p, || Ok(Arc::new(solve_ebsi_policy(p, &opts.rvi)?)))
    }

    pub fn oft(&mut self, p: &SensorParams, opts: &PrepareOptions) -> Result<OftThresholds> {
        memo(&mut self.oft, p, || oft_search(p, opts.oft_eval_slots, opts.oft_seed))
    }
}

/// A policy ready to drive the simulator.
#[derive(Debug, Clone)]
pub enum Policy {
    No(Vec<Arc<NoPolicy>>),
    Cn(Vec<Arc<CnPolicy>>),
    /// Fed the true battery level.
    EbsiOpt(Vec<Arc<EbsiPolicy>>),
    /// The exact-knowledge table fed the inferred battery level instead.
    EbsiOnInferred(Vec<Arc<EbsiPolicy>>),
    Oft(Vec<OftThresholds>),
    Maf { k0: usize },
    WugcCn { cn: Vec<Arc<CnPolicy>>, k0: usize },
    RandomCn { cn: Vec<Arc<CnPolicy>>, k0: usize },
    Always,
    Never,
}

fn per_sensor<T>(sensors: &[SensorParams], f: impl FnMut(&SensorParams) -> Result<T>) -> Result<Vec<T>> {
    sensors.iter().map(f).collect()
}

/// Per-slot inputs handed to [`Policy::select`].
#[derive(Debug)]
pub struct SlotView<'a> {
    pub snapshots: &'a [SensorSnapshot],
    /// True battery levels (only the exact-knowledge policy reads them).
    pub batteries: &'a [u32],
}

impl Policy {
    pub fn prepare(name: PolicyName, cfg: &SystemConfig, opts: &PrepareOptions, cache: &mut SolverCache) -> Result<Self> {
        cfg.validate()?;
        let sensors = &cfg.sensors;
        Ok(match name {
            PolicyName::No => Policy::No(per_sensor(sensors, |p| cache.no(p, opts))?),
            PolicyName::Cn => Policy::Cn(per_sensor(sensors, |p| cache.cn(p, opts))?),
            PolicyName::EbsiOpt => Policy::EbsiOpt(per_sensor(sensors, |p| cache.ebsi(p, opts))?),
            PolicyName::Oft => Policy::Oft(per_sensor(sensors, |p| cache.oft(p, opts))?),
            PolicyName::Maf => Policy::Maf { k0: cfg.k0 },
            PolicyName::WugcCn => Policy::WugcCn { cn: per_sensor(sensors, |p| cache.cn(p, opts))?, k0: cfg.k0 },
            PolicyName::RandomCn => Policy::RandomCn { cn: per_sensor(sensors, |p| cache.cn(p, opts))?, k0: cfg.k0 },
            PolicyName::Always => Policy::Always,
            PolicyName::Never => Policy::Never,
        })
    }

    /// Name used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Policy::No(_) => "no",
            Policy::Cn(_) => "cn",
            Policy::EbsiOpt(_) => "ebsi-opt",
            Policy::EbsiOnInferred(_) => "ebsi-on-inferred",
            Policy::Oft(_) => "oft",
            Policy::Maf { .. } => "maf",
            Policy::WugcCn { .. } => "wugc-cn",
            Policy::RandomCn { .. } => "random-cn",
            Policy::Always => "always",
            Policy::Never => "never",
        }
    }

    /// Number of sensors the policy was prepared for, if it is per-sensor.
    pub fn sensor_count(&self) -> Option<usize> {
        match self {
            Policy::No(v) => Some(v.len()),
            Policy::Cn(v) | Policy::WugcCn { cn: v, .. } | Policy::RandomCn { cn: v, .. } => Some(v.len()),
            Policy::EbsiOpt(v) | Policy::EbsiOnInferred(v) => Some(v.len()),
            Policy::Oft(v) => Some(v.len()),
            _ => None,
        }
    }

    /// Fills `actions` for one slot.
    pub fn select(&self, view: &SlotView<'_>, rng: &mut ChaCha8Rng, scratch: &mut Scratch, actions: &mut [bool]) {
        let snaps = view.snapshots;
        match self {
            Policy::No(tables) => {
                for (a, (s, t)) in actions.iter_mut().zip(snaps.iter().zip(tables)) {
                    *a = t.decide(s.request, &s.tracker) == 1;
                }
            }
            Policy::Cn(cn) => {
                for (a, (s, c)) in actions.iter_mut().zip(snaps.iter().zip(cn)) {
                    *a = c.decide(s.request, &s.tracker) == 1;
                }
            }
            Policy::EbsiOpt(tables) => {
                for (k, a) in actions.iter_mut().enumerate() {
                    let s = &snaps[k];
                    *a = tables[k].decide(s.request, view.batteries[k], s.aocsi as u64) == 1;
                }
            }
            Policy::EbsiOnInferred(tables) => {
                for (k, a) in actions.iter_mut().enumerate() {
                    let s = &snaps[k];
                    *a = tables[k].decide(s.request, s.tracker.b_hat, s.aocsi as u64) == 1;
                }
            }
            Policy::Oft(th) => {
                for (a, (s, t)) in actions.iter_mut().zip(snaps.iter().zip(th)) {
                    *a = t.decide(s.request, s.aocsi);
                }
            }
            Policy::Maf { k0 } => maf_select(snaps, *k0, actions),
            Policy::WugcCn { cn, k0 } => {
                scratch.fill_approved(snaps, cn);
                scratch.gains.clear();
                for (s, c) in snaps.iter().zip(cn) {
                    scratch.gains.push(weighted_update_gain(s, &c.ctx.params, c.ctx.p1));
                }
                wugc_select(&scratch.approved, &scratch.gains, *k0, actions);
            }
            Policy::RandomCn { cn, k0 } => {
                scratch.fill_approved(snaps, cn);
                random_cn_select(&scratch.approved, *k0, rng, actions);
            }
            Policy::Always => {
                for (a, s) in actions.iter_mut().zip(snaps) {
                    *a = s.request;
                }
            }
            Policy::Never => actions.iter_mut().for_each(|a| *a = false),
        }
    }
}

/// Reusable buffers for [`Policy::select`].
#[derive(Debug, Default)]
pub struct Scratch {
    approved: Vec<bool>,
    gains: Vec<f64>,
}

impl Scratch {
    fn fill_approved(&mut self, snaps: &[SensorSnapshot], cn: &[Arc<CnPolicy>]) {
        self.approved.clear();
        for (s, c) in snaps.iter().zip(cn) {
            self.approved.push(c.decide(s.request, &s.tracker) == 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for p in PolicyName::ALL {
            assert_eq!(p.as_str().parse::<PolicyName>().unwrap(), p);
            assert_eq!(p.to_string(), p.as_str());
        }
        assert!("greedy".parse::<PolicyName>().is_err());
    }
}
