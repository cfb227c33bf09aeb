//! C ABI over `pbsi-core`.
//!
//! Every function returns a [`PbsiStatus`]; results go through out
//! pointers. On failure the message is kept per thread and can be copied
//! out with [`pbsi_last_error_message`]. Policies are opaque handles that
//! the caller releases with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pbsi_core::bound::{lambda0, theta_lower_bound, BoundInputs};
use pbsi_core::cn::{CnContext, CnPolicy};
use pbsi_core::mdp::RviOptions;
use pbsi_core::noiseless::{solve_no_policy, NoPolicy, NoiselessParams};
use pbsi_core::policy::{Policy, PolicyName, PrepareOptions, SolverCache};
use pbsi_core::sim::run_experiment;
use pbsi_core::tracker::{update_inferred_pbsi, InferredPbsi, TrackerModel, UpdateOutcome};
use pbsi_core::{EnergyModel, Error, SensorParams, SystemConfig};

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbsiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    BoundUndefined = 4,
    Protocol = 5,
    Internal = 6,
}

/// Energy arrival law of a [`PbsiSensor`].
pub const PBSI_ENERGY_BERNOULLI: i32 = 0;
pub const PBSI_ENERGY_POISSON: i32 = 1;

/// Tracker outcomes for [`pbsi_tracker_update`].
pub const PBSI_OUTCOME_NO_TX: i32 = 0;
pub const PBSI_OUTCOME_SUCCESS: i32 = 1;
pub const PBSI_OUTCOME_FAILURE: i32 = 2;

/// Parameters of one sensor.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbsiSensor {
    pub battery_capacity: u32,
    pub max_aocsi: u32,
    pub weight: f64,
    pub request_prob: f64,
    pub channel_success: f64,
    /// `PBSI_ENERGY_BERNOULLI` or `PBSI_ENERGY_POISSON`.
    pub energy_kind: i32,
    /// Bernoulli probability or Poisson mean.
    pub energy_param: f64,
}

/// Inferred battery state kept by the edge node.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbsiTracker {
    pub b_hat: u32,
    pub delta: u64,
    pub d: f64,
}

/// Opaque CN policy.
pub struct PbsiCnPolicy(CnPolicy);

/// Opaque noiseless-channel optimal policy.
pub struct PbsiNoPolicy(NoPolicy);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PbsiStatus {
    match e {
        Error::IterationLimit { .. } => PbsiStatus::NotConverged,
        Error::Admissibility { .. } => PbsiStatus::BoundUndefined,
        Error::Protocol(_) => PbsiStatus::Protocol,
        Error::Io(_) => PbsiStatus::Internal,
        _ => PbsiStatus::InvalidArgument,
    }
}

struct Fail(PbsiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PbsiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PbsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PbsiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PbsiStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes either null or a valid, aligned pointer.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the contract, valid for writes.
    unsafe { p.write(value) };
    Ok(())
}

fn sensor_params(s: &PbsiSensor) -> Result<SensorParams, Fail> {
    let energy = match s.energy_kind {
        PBSI_ENERGY_BERNOULLI => EnergyModel::bernoulli(s.energy_param)?,
        PBSI_ENERGY_POISSON => EnergyModel::poisson(s.energy_param)?,
        k => return Err(Fail(PbsiStatus::InvalidArgument, format!("unknown energy kind {k}"))),
    };
    let p = SensorParams {
        battery_capacity: s.battery_capacity,
        max_aocsi: s.max_aocsi,
        weight: s.weight,
        request_prob: s.request_prob,
        channel_success: s.channel_success,
        energy,
    };
    p.validate()?;
    Ok(p)
}

fn tracker_in(t: &PbsiTracker) -> InferredPbsi {
    InferredPbsi { b_hat: t.b_hat, delta: t.delta, d: t.d }
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `len`) into `buf`. Returns the full message length in
/// bytes, excluding the terminator. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: buf is valid for len bytes and n + 1 <= len.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Fills `out` with the default sensor (capacity 15, max AoCSI 48,
/// weight 1, Bernoulli arrivals with probability `lambda`).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_sensor_default(lambda: f64, eta: f64, xi: f64, out: *mut PbsiSensor) -> PbsiStatus {
    guard(|| {
        let s = PbsiSensor {
            battery_capacity: 15,
            max_aocsi: 48,
            weight: 1.0,
            request_prob: eta,
            channel_success: xi,
            energy_kind: PBSI_ENERGY_BERNOULLI,
            energy_param: lambda,
        };
        sensor_params(&s)?;
        unsafe { write(out, s, "out") }
    })
}

/// Clipped mean energy arrival rate of a sensor.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_clipped_mean(sensor: *const PbsiSensor, out: *mut f64) -> PbsiStatus {
    guard(|| {
        let p = sensor_params(unsafe { deref(sensor, "sensor") }?)?;
        unsafe { write(out, p.lambda()?, "out") }
    })
}

/// Lower bound on the average cost and the rate separating its branches.
///
/// # Safety
/// `theta` and `lambda0_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_lower_bound(
    lambda: f64,
    eta: f64,
    xi: f64,
    max_aocsi: u32,
    theta: *mut f64,
    lambda0_out: *mut f64,
) -> PbsiStatus {
    guard(|| {
        let inputs = BoundInputs { lambda, request_prob: eta, channel_success: xi, max_aocsi };
        let t = theta_lower_bound(&inputs)?;
        let l0 = lambda0(eta, xi, max_aocsi)?;
        unsafe {
            write(theta, t, "theta")?;
            write(lambda0_out, l0, "lambda0")
        }
    })
}

/// Advances a tracker by one slot. `outcome` is one of the
/// `PBSI_OUTCOME_*` constants; `reported_battery` is read on success only.
///
/// # Safety
/// Pointers must be valid; `out` may alias `state`.
#[no_mangle]
pub unsafe extern "C" fn pbsi_tracker_update(
    sensor: *const PbsiSensor,
    state: *const PbsiTracker,
    commanded: bool,
    outcome: i32,
    reported_battery: u32,
    out: *mut PbsiTracker,
) -> PbsiStatus {
    guard(|| {
        let model = TrackerModel::from_params(&sensor_params(unsafe { deref(sensor, "sensor") }?)?)?;
        let s = tracker_in(unsafe { deref(state, "state") }?);
        let outcome = match outcome {
            PBSI_OUTCOME_NO_TX => UpdateOutcome::NoTx,
            PBSI_OUTCOME_SUCCESS => UpdateOutcome::Success { reported_battery },
            PBSI_OUTCOME_FAILURE => UpdateOutcome::Failure,
            o => return Err(Fail(PbsiStatus::InvalidArgument, format!("unknown outcome {o}"))),
        };
        let n = update_inferred_pbsi(&s, commanded, outcome, &model)?;
        unsafe { write(out, PbsiTracker { b_hat: n.b_hat, delta: n.delta, d: n.d }, "out") }
    })
}

/// Solves the post-update values and builds a CN policy.
///
/// # Safety
/// `sensor` must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_cn_policy_new(sensor: *const PbsiSensor, out: *mut *mut PbsiCnPolicy) -> PbsiStatus {
    guard(|| {
        let p = sensor_params(unsafe { deref(sensor, "sensor") }?)?;
        let policy = CnContext::new(&p)?.into_cached();
        let handle = Box::into_raw(Box::new(PbsiCnPolicy(policy)));
        unsafe { write(out, handle, "out") }
    })
}

/// Releases a CN policy. Null is ignored.
///
/// # Safety
/// `policy` must come from [`pbsi_cn_policy_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pbsi_cn_policy_free(policy: *mut PbsiCnPolicy) {
    if !policy.is_null() {
        // SAFETY: allocated by Box::into_raw in pbsi_cn_policy_new.
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// Action (0 or 1) for the given request flag and tracker.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_cn_policy_decide(
    policy: *const PbsiCnPolicy,
    request: bool,
    state: *const PbsiTracker,
    action: *mut u8,
) -> PbsiStatus {
    guard(|| {
        let p = unsafe { deref(policy, "policy") }?;
        let s = tracker_in(unsafe { deref(state, "state") }?);
        unsafe { write(action, p.0.decide(request, &s), "action") }
    })
}

/// Value difference between updating now and at the next request slot;
/// negative means update.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_cn_policy_delta_v(
    policy: *const PbsiCnPolicy,
    b_hat: u32,
    delta: u64,
    out: *mut f64,
) -> PbsiStatus {
    guard(|| {
        let p = unsafe { deref(policy, "policy") }?;
        if delta < 1 {
            return Err(Fail(PbsiStatus::InvalidArgument, "delta must be at least 1".into()));
        }
        unsafe { write(out, p.0.ctx.delta_v(b_hat.max(1), delta), "out") }
    })
}

/// Per-slot gain estimate behind the CN policy.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_cn_policy_gain(policy: *const PbsiCnPolicy, out: *mut f64) -> PbsiStatus {
    guard(|| {
        let p = unsafe { deref(policy, "policy") }?;
        unsafe { write(out, p.0.ctx.gain, "out") }
    })
}

/// Solves the noiseless-channel MDP. The sensor's channel success
/// probability must be 1. `max_aofbl = 0` uses the sensor's max AoCSI.
///
/// # Safety
/// `sensor` must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_no_policy_new(
    sensor: *const PbsiSensor,
    max_aofbl: u32,
    out: *mut *mut PbsiNoPolicy,
) -> PbsiStatus {
    guard(|| {
        let p = sensor_params(unsafe { deref(sensor, "sensor") }?)?;
        let d = if max_aofbl == 0 { p.max_aocsi } else { max_aofbl };
        let np = NoiselessParams::with_max_aofbl(p, d)?;
        let policy = solve_no_policy(&np, &RviOptions::default())?;
        let handle = Box::into_raw(Box::new(PbsiNoPolicy(policy)));
        unsafe { write(out, handle, "out") }
    })
}

/// Releases a noiseless policy. Null is ignored.
///
/// # Safety
/// `policy` must come from [`pbsi_no_policy_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pbsi_no_policy_free(policy: *mut PbsiNoPolicy) {
    if !policy.is_null() {
        // SAFETY: allocated by Box::into_raw in pbsi_no_policy_new.
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_no_policy_decide(
    policy: *const PbsiNoPolicy,
    request: bool,
    state: *const PbsiTracker,
    action: *mut u8,
) -> PbsiStatus {
    guard(|| {
        let p = unsafe { deref(policy, "policy") }?;
        let s = tracker_in(unsafe { deref(state, "state") }?);
        unsafe { write(action, p.0.decide(request, &s), "action") }
    })
}

/// Optimal average cost of the noiseless problem.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbsi_no_policy_gain(policy: *const PbsiNoPolicy, out: *mut f64) -> PbsiStatus {
    guard(|| {
        let p = unsafe { deref(policy, "policy") }?;
        unsafe { write(out, p.0.gain(), "out") }
    })
}

/// Simulates one sensor under a named policy (`"cn"`, `"no"`, `"oft"`, ...)
/// and reports the mean cost per slot and its standard error.
///
/// # Safety
/// `sensor` and `policy` (NUL-terminated) must be valid; outputs must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pbsi_simulate_single(
    sensor: *const PbsiSensor,
    policy: *const c_char,
    horizon: u64,
    episodes: u64,
    seed: u64,
    mean_cost: *mut f64,
    std_error: *mut f64,
) -> PbsiStatus {
    guard(|| {
        let p = sensor_params(unsafe { deref(sensor, "sensor") }?)?;
        if policy.is_null() {
            return Err(null("policy"));
        }
        // SAFETY: non-null and NUL-terminated per the contract.
        let name = unsafe { CStr::from_ptr(policy) }
            .to_str()
            .map_err(|_| Fail(PbsiStatus::InvalidArgument, "policy name is not UTF-8".into()))?;
        let name: PolicyName = name.parse()?;
        let cfg = SystemConfig::single(p, horizon, episodes, seed);
        let prepared = Policy::prepare(name, &cfg, &PrepareOptions::default(), &mut SolverCache::new())?;
        let r = run_experiment(&cfg, &[prepared], 1)?.remove(0);
        unsafe {
            write(mean_cost, r.mean_cost, "mean_cost")?;
            write(std_error, r.std_error, "std_error")
        }
    })
}
