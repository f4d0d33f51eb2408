use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use harness::eval::{render_report, EvalReport, RenderFormat};
use harness_ffi::*;

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { harness_string_free(p) };
    s
}

fn last_error() -> Option<String> {
    let p = harness_last_error_message();
    (!p.is_null()).then(|| take_string(p))
}

fn toy_suite() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy/suite.jsonl")
}

#[test]
fn pass_at_k_matches_closed_form() {
    let mut v = 0.0;
    assert_eq!(
        unsafe { harness_pass_at_k(4, 1, 2, &mut v) },
        HarnessStatus::Ok
    );
    assert!((v - 0.5).abs() < 1e-12);
    assert_eq!(
        unsafe { harness_pass_at_k(4, 2, 1, &mut v) },
        HarnessStatus::Ok
    );
    assert!((v - 0.5).abs() < 1e-12);
    assert!(last_error().is_none());
}

#[test]
fn invalid_arguments_report_codes_and_messages() {
    let mut v = 0.0;
    assert_eq!(
        unsafe { harness_pass_at_k(2, 3, 1, &mut v) },
        HarnessStatus::Validation
    );
    assert!(last_error().unwrap().contains("3"));
    assert_eq!(
        unsafe { harness_pass_at_k(4, 1, 1, ptr::null_mut()) },
        HarnessStatus::NullArgument
    );
    let mut empty = false;
    assert_eq!(
        unsafe { harness_is_empty_patch(ptr::null(), &mut empty) },
        HarnessStatus::NullArgument
    );
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { harness_is_empty_patch(bad.as_ptr().cast(), &mut empty) },
        HarnessStatus::InvalidUtf8
    );
}

#[test]
fn empty_patch_detection() {
    let mut empty = false;
    let ws = CString::new("  \n\t\n").unwrap();
    assert_eq!(
        unsafe { harness_is_empty_patch(ws.as_ptr(), &mut empty) },
        HarnessStatus::Ok
    );
    assert!(empty);
    let diff = CString::new("diff --git a/x b/x\n--- a/x\n+++ b/x\n@@ -1 +1 @@\n-a\n+b\n").unwrap();
    assert_eq!(
        unsafe { harness_is_empty_patch(diff.as_ptr(), &mut empty) },
        HarnessStatus::Ok
    );
    assert!(!empty);
}

#[test]
fn report_round_trips_through_handle() {
    let report = EvalReport::from_outcomes(&[], &[0.0]);
    let json = render_report(&report, RenderFormat::Structured).unwrap();
    let json = CString::new(json).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { harness_report_parse(json.as_ptr(), &mut handle) },
        HarnessStatus::Ok
    );
    assert_eq!(unsafe { harness_report_suite_size(handle) }, 0);
    assert_eq!(unsafe { harness_report_resolved(handle) }, 0);
    let mut out = ptr::null_mut();
    let fmt = CString::new("structured").unwrap();
    assert_eq!(
        unsafe { harness_report_render(handle, fmt.as_ptr(), &mut out) },
        HarnessStatus::Ok
    );
    assert_eq!(take_string(out).as_bytes(), json.as_bytes());
    let fmt = CString::new("sparkline").unwrap();
    assert_eq!(
        unsafe { harness_report_render(handle, fmt.as_ptr(), &mut out) },
        HarnessStatus::Config
    );
    unsafe { harness_report_free(handle) };

    let garbage = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { harness_report_parse(garbage.as_ptr(), &mut handle) },
        HarnessStatus::Json
    );
}

#[test]
fn suite_handle_exposes_instances() {
    let path = CString::new(toy_suite().to_str().unwrap()).unwrap();
    let mut suite = ptr::null_mut();
    assert_eq!(
        unsafe { harness_suite_load(path.as_ptr(), &mut suite) },
        HarnessStatus::Ok
    );
    assert_eq!(unsafe { harness_suite_len(suite) }, 5);
    let mut id = ptr::null_mut();
    assert_eq!(
        unsafe { harness_suite_instance_id(suite, 0, &mut id) },
        HarnessStatus::Ok
    );
    assert_eq!(take_string(id), "sum-range");
    assert_eq!(
        unsafe { harness_suite_instance_id(suite, 5, &mut id) },
        HarnessStatus::OutOfRange
    );
    unsafe { harness_suite_free(suite) };

    let missing = CString::new("/nonexistent/suite.jsonl").unwrap();
    let status = unsafe { harness_suite_load(missing.as_ptr(), &mut suite) };
    assert_ne!(status, HarnessStatus::Ok);
    assert!(last_error().is_some());
}

#[test]
fn curate_missing_run_dir_is_config_error() {
    let dir = CString::new("/nonexistent/run").unwrap();
    let fmt = CString::new("xml").unwrap();
    let out = CString::new("/nonexistent/out.jsonl").unwrap();
    let mut n = 0;
    assert_eq!(
        unsafe { harness_curate(dir.as_ptr(), 2, fmt.as_ptr(), out.as_ptr(), &mut n) },
        HarnessStatus::Config
    );
}

#[test]
fn c_program_links_against_header_and_staticlib() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libharness_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let bin = tmp.join("ffi_smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success());
    let out = Command::new(&bin).arg(toy_suite()).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "pass@2=0.500000\nempty=1\nsuite=5 first=sum-range\nstatus=8 has_message=1\n"
    );
}
