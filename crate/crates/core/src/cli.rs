//! Command-line front end: argument parsing, experiment specs and CSV output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer};

use crate::bound::{lambda0, theta_high_rate, theta_low_rate, theta_lower_bound, BoundInputs};
use crate::cn::CnContext;
use crate::ebsi::solve_ebsi_policy;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::mdp::RviOptions;
use crate::noiseless::{solve_no_policy, NoiselessParams};
use crate::params::{SensorParams, SystemConfig};
use crate::policy::{Policy, PolicyName, PrepareOptions, SolverCache};
use crate::post_update::solve_post_update_values;
use crate::scheduling::oft_search;
use crate::sim::run_experiment;

#[derive(Debug, Parser)]
#[command(name = "pbsi", version, about = "Status-update control for energy-harvesting sensors")]
pub struct Cli {
    /// Root seed for simulation and threshold search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Episodes per policy (default 100).
    #[arg(long, global = true)]
    pub episodes: Option<u64>,
    /// Slots per episode (default 10000).
    #[arg(long, global = true)]
    pub horizon: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Write CSV output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the lower bound and the branch threshold.
    Bound {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        xi: f64,
        #[arg(long, default_value_t = 48)]
        max_aocsi: u32,
    },
    /// CN action grid over inferred battery and AoCSI.
    PolicyMap {
        #[command(flatten)]
        sensor: SensorArgs,
        /// Largest AoCSI in the grid (defaults to max_aocsi).
        #[arg(long)]
        max_delta: Option<u64>,
    },
    /// Post-update values and gain estimate.
    PostUpdate {
        #[command(flatten)]
        sensor: SensorArgs,
        /// Block length (defaults to round(capacity / lambda)).
        #[arg(long)]
        block_length: Option<u32>,
    },
    /// Optimal policy table for a noiseless channel (`--xi` is ignored).
    SolveNoiseless {
        #[command(flatten)]
        sensor: SensorArgs,
        /// Maximum AoFBL (defaults to max_aocsi).
        #[arg(long)]
        max_aofbl: Option<u32>,
    },
    /// Optimal policy table with exact battery knowledge.
    SolveEbsi {
        #[command(flatten)]
        sensor: SensorArgs,
    },
    /// Run an experiment spec (TOML) and write per-point results.
    Run { spec: PathBuf },
    /// Exhaustive search for the best pair of AoCSI thresholds.
    OftSearch {
        #[command(flatten)]
        sensor: SensorArgs,
        /// Simulated slots per threshold pair.
        #[arg(long, default_value_t = 200_000)]
        eval_slots: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnergyKind {
    Bernoulli,
    Poisson,
}

/// One sensor described on the command line.
#[derive(Debug, Clone, Args)]
pub struct SensorArgs {
    /// Arrival parameter: Bernoulli probability or Poisson mean.
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = EnergyKind::Bernoulli)]
    pub energy: EnergyKind,
    #[arg(long, default_value_t = 0.7)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.7)]
    pub xi: f64,
    #[arg(long, default_value_t = 15)]
    pub capacity: u32,
    #[arg(long, default_value_t = 48)]
    pub max_aocsi: u32,
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
}

impl SensorArgs {
    pub fn params(&self) -> Result<SensorParams> {
        let energy = match self.energy {
            EnergyKind::Bernoulli => EnergyModel::bernoulli(self.lambda)?,
            EnergyKind::Poisson => EnergyModel::poisson(self.lambda)?,
        };
        let p = SensorParams {
            battery_capacity: self.capacity,
            max_aocsi: self.max_aocsi,
            weight: self.weight,
            request_prob: self.eta,
            channel_success: self.xi,
            energy,
        };
        p.validate()?;
        Ok(p)
    }
}

const DEFAULT_EPISODES: u64 = 100;
const DEFAULT_HORIZON: u64 = 10_000;
const DEFAULT_SEED: u64 = 1;

fn probability<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let x = f64::deserialize(d)?;
    if x > 0.0 && x <= 1.0 {
        Ok(x)
    } else {
        Err(serde::de::Error::custom(format!("{x} is not a probability in (0, 1]")))
    }
}

fn positive_u32<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let x = u32::deserialize(d)?;
    if x >= 1 {
        Ok(x)
    } else {
        Err(serde::de::Error::custom("must be at least 1"))
    }
}

fn aocsi_limit<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let x = u32::deserialize(d)?;
    if x >= 2 {
        Ok(x)
    } else {
        Err(serde::de::Error::custom("max_aocsi must be at least 2"))
    }
}

fn nonnegative<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let x = f64::deserialize(d)?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(serde::de::Error::custom(format!("{x} must be nonnegative")))
    }
}

fn energy_model<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<EnergyModel, D::Error> {
    let m = EnergyModel::deserialize(d)?;
    m.validate().map_err(serde::de::Error::custom)?;
    Ok(m)
}

fn policy_names<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<PolicyName>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    if names.is_empty() {
        return Err(serde::de::Error::custom("policy list is empty"));
    }
    names.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()
}

fn default_capacity() -> u32 {
    15
}
fn default_max_aocsi() -> u32 {
    48
}
fn default_weight() -> f64 {
    1.0
}
fn default_count() -> usize {
    1
}

/// A set of identical sensors in an experiment spec.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorGroup {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_capacity", deserialize_with = "positive_u32")]
    pub battery_capacity: u32,
    #[serde(default = "default_max_aocsi", deserialize_with = "aocsi_limit")]
    pub max_aocsi: u32,
    #[serde(default = "default_weight", deserialize_with = "nonnegative")]
    pub weight: f64,
    #[serde(deserialize_with = "probability")]
    pub request_prob: f64,
    #[serde(deserialize_with = "probability")]
    pub channel_success: f64,
    #[serde(deserialize_with = "energy_model")]
    pub energy: EnergyModel,
}

/// Parameters a sweep axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Arrival parameter of every sensor (Bernoulli p or Poisson mean).
    Lambda,
    /// Request probability of every sensor.
    Eta,
    /// Channel success probability of every sensor.
    Xi,
    /// Ratio `k0 / K`; `k0 = max(1, round(msur * K))`.
    Msur,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// An experiment file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(deserialize_with = "policy_names")]
    pub policies: Vec<PolicyName>,
    #[serde(default)]
    pub k0: Option<usize>,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub episodes: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub initial_battery: u32,
    #[serde(default)]
    pub oft_eval_slots: Option<u64>,
    pub groups: Vec<SensorGroup>,
    #[serde(default)]
    pub sweep: Vec<Sweep>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.iter().any(|g| g.count == 0) {
            return Err(Error::Config("at least one sensor group with count >= 1 is required".into()));
        }
        for s in &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config(format!("sweep over {:?} has no values", s.axis)));
            }
            for &v in &s.values {
                let ok = match s.axis {
                    SweepAxis::Lambda => v > 0.0,
                    SweepAxis::Eta | SweepAxis::Xi | SweepAxis::Msur => v > 0.0 && v <= 1.0,
                };
                if !ok || !v.is_finite() {
                    return Err(Error::Config(format!("sweep over {:?}: value {v} out of range", s.axis)));
                }
            }
        }
        Ok(())
    }

    /// Base configuration with command-line overrides applied.
    fn base_config(&self, o: &Overrides) -> SystemConfig {
        let mut sensors = Vec::new();
        for g in &self.groups {
            let p = SensorParams {
                battery_capacity: g.battery_capacity,
                max_aocsi: g.max_aocsi,
                weight: g.weight,
                request_prob: g.request_prob,
                channel_success: g.channel_success,
                energy: g.energy.clone(),
            };
            sensors.extend(std::iter::repeat_n(p, g.count));
        }
        SystemConfig {
            k0: self.k0.unwrap_or(sensors.len()),
            sensors,
            horizon: o.horizon.or(self.horizon).unwrap_or(DEFAULT_HORIZON),
            episodes: o.episodes.or(self.episodes).unwrap_or(DEFAULT_EPISODES),
            seed: o.seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            initial_battery: self.initial_battery,
        }
    }

    /// Every sweep point (cartesian product, first axis outermost).
    pub fn points(&self, o: &Overrides) -> Result<Vec<SystemConfig>> {
        let mut out = vec![self.base_config(o)];
        for s in &self.sweep {
            let mut next = Vec::with_capacity(out.len() * s.values.len());
            for cfg in &out {
                for &v in &s.values {
                    next.push(apply_axis(cfg, s.axis, v)?);
                }
            }
            out = next;
        }
        for cfg in &out {
            cfg.validate()?;
        }
        Ok(out)
    }
}

fn apply_axis(cfg: &SystemConfig, axis: SweepAxis, v: f64) -> Result<SystemConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Lambda => {
            for s in &mut c.sensors {
                s.energy = s.energy.with_nominal(v)?;
            }
        }
        SweepAxis::Eta => c.sensors.iter_mut().for_each(|s| s.request_prob = v),
        SweepAxis::Xi => c.sensors.iter_mut().for_each(|s| s.channel_success = v),
        SweepAxis::Msur => {
            let k = c.sensors.len();
            c.k0 = ((v * k as f64).round() as usize).clamp(1, k);
        }
    }
    Ok(c)
}

/// Command-line values that take precedence over a spec file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub episodes: Option<u64>,
    pub horizon: Option<u64>,
}

/// One output row of `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: String,
    pub lambda: f64,
    pub eta: f64,
    pub xi: f64,
    pub k0_ratio: f64,
    pub mean_cost: f64,
    pub se: f64,
    pub episodes: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Lower bound, single-sensor points only.
    pub theta: Option<f64>,
}

impl ResultRow {
    pub fn additive_gap(&self) -> Option<f64> {
        self.theta.map(|t| self.mean_cost - t)
    }

    pub fn multiplicative_gap(&self) -> Option<f64> {
        self.theta.map(|t| self.mean_cost / t - 1.0)
    }
}

pub const RESULT_HEADER: &str =
    "policy,lambda,eta,xi,k0_ratio,mean_cost,se,episodes,horizon,seed,theta,additive_gap,multiplicative_gap";

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
    let mut out = format!("{RESULT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            fmt_sig(r.lambda),
            fmt_sig(r.eta),
            fmt_sig(r.xi),
            fmt_sig(r.k0_ratio),
            fmt_sig(r.mean_cost),
            fmt_sig(r.se),
            r.episodes,
            r.horizon,
            r.seed,
            opt(r.theta),
            opt(r.additive_gap()),
            opt(r.multiplicative_gap()),
        );
    }
    out
}

fn mean_of(cfg: &SystemConfig, f: impl Fn(&SensorParams) -> Result<f64>) -> Result<f64> {
    let mut total = 0.0;
    for s in &cfg.sensors {
        total += f(s)?;
    }
    Ok(total / cfg.sensors.len() as f64)
}

/// Lower bound of a single-sensor configuration; `None` for several
/// sensors or when the bound is undefined.
pub fn config_bound(cfg: &SystemConfig) -> Result<Option<f64>> {
    if cfg.sensors.len() != 1 {
        return Ok(None);
    }
    let s = &cfg.sensors[0];
    let inputs = BoundInputs {
        lambda: s.lambda()?,
        request_prob: s.request_prob,
        channel_success: s.channel_success,
        max_aocsi: s.max_aocsi,
    };
    match theta_lower_bound(&inputs) {
        Ok(t) => Ok(Some(t)),
        Err(Error::Admissibility { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs every point of a spec.
pub fn run_spec(
    spec: &ExperimentSpec,
    o: &Overrides,
    workers: usize,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<ResultRow>> {
    let points = spec.points(o)?;
    let seed = points[0].seed;
    let mut opts = PrepareOptions { oft_seed: seed ^ 0x05ee_d0f7, ..PrepareOptions::default() };
    if let Some(n) = spec.oft_eval_slots {
        opts.oft_eval_slots = n;
    }
    let mut cache = SolverCache::new();
    let mut rows = Vec::new();
    for (i, cfg) in points.iter().enumerate() {
        let policies = spec
            .policies
            .iter()
            .map(|&n| Policy::prepare(n, cfg, &opts, &mut cache))
            .collect::<Result<Vec<_>>>()?;
        let results = run_experiment(cfg, &policies, workers)?;
        let theta = config_bound(cfg)?;
        let lambda = mean_of(cfg, |s| s.lambda())?;
        let eta = mean_of(cfg, |s| Ok(s.request_prob))?;
        let xi = mean_of(cfg, |s| Ok(s.channel_success))?;
        for r in results {
            rows.push(ResultRow {
                policy: r.policy,
                lambda,
                eta,
                xi,
                k0_ratio: cfg.k0 as f64 / cfg.sensors.len() as f64,
                mean_cost: r.mean_cost,
                se: r.std_error,
                episodes: cfg.episodes,
                horizon: cfg.horizon,
                seed: cfg.seed,
                theta,
            });
        }
        progress(&format!("point {}/{} done", i + 1, points.len()));
    }
    Ok(rows)
}

/// Text report of the bound and both branches.
pub fn bound_report(lambda: f64, eta: f64, xi: f64, max_aocsi: u32) -> Result<String> {
    let inputs = BoundInputs { lambda, request_prob: eta, channel_success: xi, max_aocsi };
    let theta = theta_lower_bound(&inputs)?;
    let l0 = lambda0(eta, xi, max_aocsi)?;
    let branch = if lambda >= l0 { "high-rate" } else { "low-rate" };
    Ok(format!(
        "theta={}\nlambda0={}\nbranch={branch}\ntheta_high_rate={}\ntheta_low_rate={}\n",
        fmt_sig(theta),
        fmt_sig(l0),
        fmt_sig(theta_high_rate(&inputs)),
        fmt_sig(theta_low_rate(&inputs)),
    ))
}

/// CSV `b_hat,delta,action` of the CN rule.
pub fn policy_map_csv(params: &SensorParams, max_delta: u64) -> Result<String> {
    let pol = CnContext::new(params)?.into_cached();
    let mut out = String::from("b_hat,delta,action\n");
    for (b, d, a) in pol.action_grid(max_delta) {
        let _ = writeln!(out, "{b},{d},{a}");
    }
    Ok(out)
}

/// Where the main output and the summary lines go.
struct Output {
    path: Option<PathBuf>,
}

impl Output {
    fn emit(&self, csv: &str, summary: &str) -> Result<()> {
        match &self.path {
            Some(p) => {
                std::fs::write(p, csv).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                print!("{summary}");
            }
            None => {
                print!("{csv}");
                eprint!("{summary}");
            }
        }
        std::io::stdout().flush()?;
        Ok(())
    }
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let out = Output { path: cli.out.clone() };
    let rvi = RviOptions::default();
    match &cli.command {
        Command::Bound { lambda, eta, xi, max_aocsi } => {
            let report = bound_report(*lambda, *eta, *xi, *max_aocsi)?;
            out.emit(&report, "")
        }
        Command::PolicyMap { sensor, max_delta } => {
            let p = sensor.params()?;
            let csv = policy_map_csv(&p, max_delta.unwrap_or(p.max_aocsi as u64))?;
            out.emit(&csv, "")
        }
        Command::PostUpdate { sensor, block_length } => {
            let p = sensor.params()?;
            let t = solve_post_update_values(&p, *block_length, &rvi)?;
            let summary = format!(
                "gain_estimate={}\nblock_length={}\nstates={}\niterations={}\n",
                fmt_sig(t.gain_estimate),
                t.block_length,
                t.num_states,
                t.iterations
            );
            out.emit(&t.to_csv(), &summary)
        }
        Command::SolveNoiseless { sensor, max_aofbl } => {
            let p = SensorParams { channel_success: 1.0, ..sensor.params()? };
            let np = NoiselessParams::with_max_aofbl(p.clone(), max_aofbl.unwrap_or(p.max_aocsi))?;
            if let Some(w) = np.truncation_warning() {
                eprintln!("warning: {w}");
            }
            let pol = solve_no_policy(&np, &rvi)?;
            let summary = format!(
                "gain={}\nstates={}\niterations={}\n",
                fmt_sig(pol.gain()),
                pol.space.len(),
                pol.solution.iterations
            );
            out.emit(&pol.to_csv(), &summary)
        }
        Command::SolveEbsi { sensor } => {
            let p = sensor.params()?;
            let pol = solve_ebsi_policy(&p, &rvi)?;
            let mut summary = format!("gain={}\niterations={}\n", fmt_sig(pol.gain()), pol.solution.iterations);
            let v = pol.threshold_violations();
            if !v.is_empty() {
                let _ = writeln!(summary, "warning: {} (battery, delta) pairs break the AoCSI threshold shape", v.len());
            }
            out.emit(&pol.to_csv(), &summary)
        }
        Command::Run { spec } => {
            let spec = ExperimentSpec::load(spec)?;
            let o = Overrides { seed: cli.seed, episodes: cli.episodes, horizon: cli.horizon };
            let rows = run_spec(&spec, &o, cli.workers, &mut |m| eprintln!("{m}"))?;
            out.emit(&rows_to_csv(&rows), "")
        }
        Command::OftSearch { sensor, eval_slots } => {
            let p = sensor.params()?;
            let th = oft_search(&p, *eval_slots, cli.seed.unwrap_or(DEFAULT_SEED))?;
            let show = |t: Option<u32>| t.map_or("never".to_string(), |t| t.to_string());
            let text = format!(
                "threshold_with_request={}\nthreshold_without_request={}\n",
                show(th.with_request),
                show(th.without_request)
            );
            out.emit(&text, "")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
name = "demo"
policies = ["cn", "always"]
episodes = 2
horizon = 200

[[groups]]
count = 2
request_prob = 0.7
channel_success = 0.7
energy = { kind = "bernoulli", p = 0.12 }

[[sweep]]
axis = "lambda"
values = [0.1, 0.2]

[[sweep]]
axis = "msur"
values = [0.5, 1.0]
"#;

    #[test]
    fn parses_and_expands() {
        let spec = ExperimentSpec::from_toml(SPEC).unwrap();
        assert_eq!(spec.policies, vec![PolicyName::Cn, PolicyName::Always]);
        let pts = spec.points(&Overrides::default()).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].sensors[0].energy, EnergyModel::Bernoulli { p: 0.1 });
        assert_eq!((pts[0].k0, pts[1].k0), (1, 2));
        assert_eq!(pts[2].sensors[1].energy, EnergyModel::Bernoulli { p: 0.2 });
        let o = Overrides { episodes: Some(7), ..Overrides::default() };
        assert_eq!(spec.points(&o).unwrap()[0].episodes, 7);
    }

    #[test]
    fn errors_carry_locations() {
        let bad = SPEC.replace("channel_success = 0.7", "channel_success = 1.7");
        let e = ExperimentSpec::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("line 10"), "{e}");
        let bad = SPEC.replace("[\"cn\", \"always\"]", "[]");
        assert!(ExperimentSpec::from_toml(&bad).unwrap_err().to_string().contains("empty"));
        let bad = SPEC.replace("\"always\"", "\"greedy\"");
        assert!(ExperimentSpec::from_toml(&bad).unwrap_err().to_string().contains("greedy"));
        let bad = SPEC.replace("p = 0.12", "p = 1.5");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn bound_report_contents() {
        let r = bound_report(1.0, 1.0, 1.0, 48).unwrap();
        assert!(r.starts_with("theta=1.00000000\n"));
        assert!(r.contains("branch=high-rate"));
        assert!(matches!(bound_report(0.2, 0.7, 0.01, 48), Err(Error::Admissibility { .. })));
    }

    #[test]
    fn run_is_reproducible() {
        let spec = ExperimentSpec::from_toml(SPEC).unwrap();
        let a = rows_to_csv(&run_spec(&spec, &Overrides::default(), 1, &mut |_| {}).unwrap());
        let b = rows_to_csv(&run_spec(&spec, &Overrides::default(), 2, &mut |_| {}).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 8);
        assert!(a.starts_with(RESULT_HEADER));
    }
}
