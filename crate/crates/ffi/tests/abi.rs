use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pdsplit_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { pds_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

const FUSED: &str = r#"{"kind":"fused_lasso","n":40,"p":12,"seed":3,"lambda":0.1,"lambda1":1.0}"#;

fn generate(json: &str) -> *mut PdsProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pds_problem_generate(cstr(json).as_ptr(), &mut p) }, PdsStatus::PdsOk, "{}", last_error());
    p
}

#[test]
fn run_round_trip() {
    let problem = generate(FUSED);
    let (mut n, mut m) = (0, 0);
    unsafe {
        assert_eq!(pds_problem_dims(problem, &mut n, &mut m), PdsStatus::PdsOk);
        assert_eq!((n, m), (12, 11));
        let mut run = ptr::null_mut();
        let cfg = cstr(r#"{"solver":"pddy","iters":3000,"log_every":100}"#);
        assert_eq!(pds_run(problem, cfg.as_ptr(), &mut run), PdsStatus::PdsOk);
        assert_eq!(pds_run_len(run), 31);
        let mut rec = std::mem::zeroed::<PdsRecord>();
        assert_eq!(pds_run_record(run, 30, &mut rec), PdsStatus::PdsOk);
        assert_eq!(rec.k, 3000);
        assert!(rec.kkt_primal < 1e-6 && rec.kkt_dual < 1e-6);
        assert!(rec.duality_gap.is_nan());
        let mut x = vec![0.0; 12];
        assert_eq!(pds_run_primal(run, x.as_mut_ptr(), 12), PdsStatus::PdsOk);
        assert!(x.iter().all(|v| v.is_finite()));
        let (mut g, mut t) = (0.0, 0.0);
        assert_eq!(pds_run_steps(run, &mut g, &mut t), PdsStatus::PdsOk);
        assert!(g > 0.0 && t > 0.0);
        assert!(!pds_run_diverged(run, ptr::null_mut()));
        pds_run_free(run);
        pds_problem_free(problem);
    }
}

#[test]
fn error_codes() {
    let problem = generate(FUSED);
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(pds_run(problem, cstr("{").as_ptr(), &mut run), PdsStatus::PdsBadJson);
        assert!(!last_error().is_empty());
        let cfg = cstr(r#"{"solver":"condat_vu_31","iters":10,"estimator":{"kind":"saga"}}"#);
        assert_eq!(pds_run(problem, cfg.as_ptr(), &mut run), PdsStatus::PdsInvalidParameter);
        assert!(last_error().contains("stochastic"), "{}", last_error());
        let cfg = cstr(r#"{"solver":"pd3o","iters":10,"gamma":0.01,"tau":1e6}"#);
        assert_eq!(pds_run(problem, cfg.as_ptr(), &mut run), PdsStatus::PdsStepsizeCondition);
        assert!(run.is_null());

        // γ beyond 2/ν only warns; the run diverges and still yields a handle
        let wild = cstr(r#"{"solver":"pd3o","iters":5000,"gamma":1e3}"#);
        assert_eq!(pds_run(problem, wild.as_ptr(), &mut run), PdsStatus::PdsOk);
        let mut at = 0u64;
        assert!(pds_run_diverged(run, &mut at));
        assert!(at > 0 && at < 5000);
        pds_run_free(run);
        run = ptr::null_mut();
        assert_eq!(pds_run(ptr::null(), cfg.as_ptr(), &mut run), PdsStatus::PdsNullPointer);
        assert!(run.is_null());

        let cfg = cstr(r#"{"solver":"pd3o","iters":5}"#);
        assert_eq!(pds_run(problem, cfg.as_ptr(), &mut run), PdsStatus::PdsOk);
        assert_eq!(last_error(), "");
        let mut rec = std::mem::zeroed::<PdsRecord>();
        assert_eq!(pds_run_record(run, 99, &mut rec), PdsStatus::PdsOutOfRange);
        let mut x = [0.0; 3];
        assert_eq!(pds_run_primal(run, x.as_mut_ptr(), 3), PdsStatus::PdsBufferTooSmall);
        pds_run_free(run);
        pds_problem_free(problem);
        pds_problem_free(ptr::null_mut());
        pds_run_free(ptr::null_mut());
    }
}

#[test]
fn error_message_truncates() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(pds_problem_generate(cstr("not json").as_ptr(), &mut p), PdsStatus::PdsBadJson);
        let mut small = [0 as c_char; 8];
        let full = pds_last_error_message(small.as_mut_ptr(), small.len());
        assert!(full > 7);
        assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 7);
    }
}

#[test]
fn decentralized_instance() {
    let problem = generate(r#"{"kind":"decentralized_quadratic","nodes":4,"graph":{"kind":"ring"},"d":3,"seed":1}"#);
    unsafe {
        let (mut n, mut m) = (0, 0);
        pds_problem_dims(problem, &mut n, &mut m);
        assert_eq!((n, m), (12, 12));
        let mut run = ptr::null_mut();
        let cfg = cstr(r#"{"solver":"destroy","iters":50}"#);
        assert_eq!(pds_run(problem, cfg.as_ptr(), &mut run), PdsStatus::PdsOk, "{}", last_error());
        assert_eq!(pds_run_len(run), 51);
        pds_run_free(run);
        pds_problem_free(problem);
    }
}

#[test]
fn spec_json_matches_generated() {
    let g = pdsplit::bench::generate(&serde_json::from_str(FUSED).unwrap()).unwrap();
    let pdsplit::bench::Instance::Composite(spec) = g.instance else { panic!() };
    let json = serde_json::to_string(&spec).unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(pds_problem_from_spec(cstr(&json).as_ptr(), &mut p), PdsStatus::PdsOk);
        let (mut n, mut m) = (0, 0);
        pds_problem_dims(p, &mut n, &mut m);
        assert_eq!((n, m), (spec.primal_dim(), spec.dual_dim()));
        pds_problem_free(p);
    }
}

#[test]
fn certify_identities() {
    let (mut passed, mut total) = (0, 0);
    unsafe {
        assert_eq!(pds_certify(cstr("identities").as_ptr(), &mut passed, &mut total), PdsStatus::PdsOk);
        assert_eq!(pds_certify(cstr("bogus").as_ptr(), &mut passed, &mut total), PdsStatus::PdsInvalidParameter);
    }
    assert_eq!(passed, total);
    assert!(total >= 4);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pds_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/pdsplit.h")).unwrap();
    for name in [
        "pds_problem_generate",
        "pds_problem_from_spec",
        "pds_problem_dims",
        "pds_problem_free",
        "pds_run",
        "pds_run_record",
        "pds_run_primal",
        "pds_run_free",
        "pds_last_error_message",
        "pds_certify",
        "typedef struct PdsProblem PdsProblem",
        "PDS_OK = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// The static library next to the test binary's `deps` directory, or one
/// built into a private target directory when `cargo test` did not produce
/// it (a separate directory avoids waiting on the outer build lock).
fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libpdsplit_ffi.a");
    if lib.exists() {
        return Some(lib);
    }
    let target = Path::new(env!("CARGO_TARGET_TMPDIR")).join("ffi-target");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "--offline", "--lib", "--manifest-path"])
        .arg(crate_dir().join("Cargo.toml"))
        .arg("--target-dir")
        .arg(&target)
        .status()
        .ok()?;
    let lib = target.join("debug/libpdsplit_ffi.a");
    (status.success() && lib.exists()).then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = staticlib() else {
        eprintln!("could not build the static library; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("pdsplit_smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("kkt "));
}
