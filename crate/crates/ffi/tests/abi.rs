use std::ffi::{c_char, CStr};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pbsi_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { pbsi_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn sensor(lambda: f64, xi: f64) -> PbsiSensor {
    let mut s = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { pbsi_sensor_default(lambda, 0.7, xi, s.as_mut_ptr()) }, PbsiStatus::Ok);
    unsafe { s.assume_init() }
}

#[test]
fn bound_and_errors() {
    let (mut theta, mut l0) = (0.0, 0.0);
    assert_eq!(unsafe { pbsi_lower_bound(0.2, 0.7, 0.7, 48, &mut theta, &mut l0) }, PbsiStatus::Ok);
    assert!((theta - 2.4826).abs() < 1e-3, "{theta}");
    assert!(l0 > 0.0);

    let st = unsafe { pbsi_lower_bound(0.2, 0.7, 0.01, 48, &mut theta, &mut l0) };
    assert_eq!(st, PbsiStatus::BoundUndefined);
    assert!(last_error().contains("lower bound undefined"));
    assert_eq!(unsafe { pbsi_lower_bound(0.2, 0.7, 0.7, 48, ptr::null_mut(), &mut l0) }, PbsiStatus::NullPointer);

    let mut bad = sensor(0.2, 0.7);
    bad.energy_kind = 7;
    let mut lam = 0.0;
    assert_eq!(unsafe { pbsi_clipped_mean(&bad, &mut lam) }, PbsiStatus::InvalidArgument);
    assert!(last_error().contains("energy kind"));
    assert_eq!(unsafe { pbsi_sensor_default(1.5, 0.7, 0.7, &mut bad) }, PbsiStatus::InvalidArgument);
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut x = 0.0;
    unsafe { pbsi_lower_bound(0.2, 0.7, 0.01, 48, &mut x, &mut x) };
    let full = unsafe { pbsi_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 5];
    assert_eq!(unsafe { pbsi_last_error_message(buf.as_mut_ptr(), buf.len()) }, full);
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 4);
}

#[test]
fn tracker_round_trip() {
    let s = sensor(0.2, 1.0);
    let t = PbsiTracker { b_hat: 3, delta: 5, d: 0.0 };
    let mut out = t;
    let st = unsafe { pbsi_tracker_update(&s, &t, true, PBSI_OUTCOME_SUCCESS, 9, &mut out) };
    assert_eq!(st, PbsiStatus::Ok);
    assert_eq!(out, PbsiTracker { b_hat: 8, delta: 1, d: 0.0 });

    let st = unsafe { pbsi_tracker_update(&s, &t, false, 42, 0, &mut out) };
    assert_eq!(st, PbsiStatus::InvalidArgument);
}

#[test]
fn policies_through_handles() {
    let s = sensor(0.2, 0.7);
    let mut cn = ptr::null_mut();
    assert_eq!(unsafe { pbsi_cn_policy_new(&s, &mut cn) }, PbsiStatus::Ok);
    let mut a = 9u8;
    let full = PbsiTracker { b_hat: 14, delta: 40, d: 0.0 };
    assert_eq!(unsafe { pbsi_cn_policy_decide(cn, true, &full, &mut a) }, PbsiStatus::Ok);
    assert_eq!(a, 1);
    let mut dv = 0.0;
    assert_eq!(unsafe { pbsi_cn_policy_delta_v(cn, 14, 40, &mut dv) }, PbsiStatus::Ok);
    assert!(dv < 0.0);
    assert_eq!(unsafe { pbsi_cn_policy_delta_v(cn, 14, 0, &mut dv) }, PbsiStatus::InvalidArgument);
    let mut g = 0.0;
    assert_eq!(unsafe { pbsi_cn_policy_gain(cn, &mut g) }, PbsiStatus::Ok);
    assert!(g > 0.0);
    unsafe { pbsi_cn_policy_free(cn) };
    unsafe { pbsi_cn_policy_free(ptr::null_mut()) };

    let mut small = sensor(0.3, 1.0);
    small.battery_capacity = 5;
    small.max_aocsi = 10;
    let mut no = ptr::null_mut();
    assert_eq!(unsafe { pbsi_no_policy_new(&small, 0, &mut no) }, PbsiStatus::Ok);
    assert_eq!(unsafe { pbsi_no_policy_decide(no, false, &PbsiTracker { b_hat: 0, delta: 3, d: 0.0 }, &mut a) }, PbsiStatus::Ok);
    assert_eq!(a, 0);
    assert_eq!(unsafe { pbsi_no_policy_gain(no, &mut g) }, PbsiStatus::Ok);
    assert!(g > 0.0);
    unsafe { pbsi_no_policy_free(no) };

    let noisy = sensor(0.3, 0.7);
    assert_ne!(unsafe { pbsi_no_policy_new(&noisy, 0, &mut no) }, PbsiStatus::Ok);
}

#[test]
fn simulate_matches_core() {
    let s = sensor(0.2, 0.7);
    let (mut m1, mut se1, mut m2, mut se2) = (0.0, 0.0, 0.0, 0.0);
    let name = c"oft";
    assert_eq!(unsafe { pbsi_simulate_single(&s, name.as_ptr(), 3000, 3, 11, &mut m1, &mut se1) }, PbsiStatus::Ok);
    assert_eq!(unsafe { pbsi_simulate_single(&s, name.as_ptr(), 3000, 3, 11, &mut m2, &mut se2) }, PbsiStatus::Ok);
    assert_eq!((m1, se1), (m2, se2));
    let st = unsafe { pbsi_simulate_single(&s, c"nope".as_ptr(), 10, 1, 1, &mut m1, &mut se1) };
    assert_eq!(st, PbsiStatus::InvalidArgument);
    assert!(last_error().contains("unknown policy"));
}

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !have_cc() {
        eprintln!("cc not found, skipping");
        return;
    }
    let header = manifest_dir().join("include/pbsi.h");
    for lang in ["c", "c++"] {
        let o = Command::new("cc")
            .args(["-fsyntax-only", "-Wall", "-Wextra", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .unwrap();
        assert!(o.status.success(), "{lang}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

// The static library sits next to the test binary's deps directory.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libpbsi_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib().filter(|_| have_cc()) else {
        eprintln!("cc or static library not available, skipping");
        return;
    };
    let dir = std::env::temp_dir().join(format!("pbsi-ffi-smoke-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let exe = dir.join("smoke");
    let o = Command::new("cc")
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
