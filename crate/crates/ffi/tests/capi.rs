use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use paircausal_ffi::*;

const T4_A: [u8; 4] = [1, 1, 0, 0];
const T4_Y: [f64; 4] = [3.0, 1.0, 2.0, 0.0];
const T4_X: [f64; 4] = [0.5, -1.0, 2.0, 0.0];

fn t4() -> *mut PcDataset {
    let mut ds = ptr::null_mut();
    let status = unsafe { pc_dataset_new(4, T4_A.as_ptr(), T4_Y.as_ptr(), 1, T4_X.as_ptr(), 1, &mut ds) };
    assert_eq!(status, PcStatus::Ok);
    ds
}

fn last_error() -> String {
    let p = pc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn t4_estimate_through_the_abi() {
    let ds = t4();
    let config =
        CString::new(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["I-un", "P"], "methods": ["CR"]}"#)
            .unwrap();
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { pc_estimate(ds, config.as_ptr(), &mut res) }, PcStatus::Ok);
    assert!(pc_last_error_message().is_null());
    // I-un: 3 estimands × (CTW, CR); P: τ × (CTW, CR)
    assert_eq!(unsafe { pc_result_len(res) }, 8);
    let mut row = PcEstimateRow {
        estimand: PcEstimand::Tau,
        method: PcMethod::Hr,
        estimate: 0.0,
        se: 0.0,
        ci_lo: 0.0,
        ci_hi: 0.0,
    };
    assert_eq!(unsafe { pc_result_row(res, 0, &mut row) }, PcStatus::Ok);
    assert_eq!((row.estimand, row.method), (PcEstimand::Lambda10, PcMethod::Ctw));
    assert_eq!(row.estimate, 0.75);
    assert_eq!(row.se, 0.125);
    assert!(row.ci_lo < 0.75 && row.ci_hi > 0.75);
    let name = unsafe { CStr::from_ptr(pc_result_estimator(res, 0)) };
    assert_eq!(name.to_str().unwrap(), "I-un");
    assert!(unsafe { pc_result_estimator(res, 99) }.is_null());
    assert_eq!(unsafe { pc_result_row(res, 99, &mut row) }, PcStatus::OutOfRange);
    let json = unsafe { CStr::from_ptr(pc_result_json(res)) }.to_str().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 8);
    unsafe {
        pc_result_free(res);
        pc_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let ds = t4();
    let mut res = ptr::null_mut();
    let mismatch =
        CString::new(r#"{"contrast": {"kind": "win_strict"}, "estimators": ["A1-adj"], "methods": ["CR"]}"#).unwrap();
    assert_eq!(unsafe { pc_estimate(ds, mismatch.as_ptr(), &mut res) }, PcStatus::MethodMismatch);
    assert!(last_error().contains("CR"));
    assert!(res.is_null());

    let broken = CString::new("{not json").unwrap();
    assert_eq!(unsafe { pc_estimate(ds, broken.as_ptr(), &mut res) }, PcStatus::Config);
    assert_eq!(unsafe { pc_estimate(ds, ptr::null(), &mut res) }, PcStatus::NullPointer);
    assert_eq!(unsafe { pc_estimate(ptr::null(), mismatch.as_ptr(), &mut res) }, PcStatus::NullPointer);

    let mut bad = ptr::null_mut();
    let all_treated = [1u8; 4];
    let status = unsafe { pc_dataset_new(4, all_treated.as_ptr(), T4_Y.as_ptr(), 1, ptr::null(), 0, &mut bad) };
    assert_ne!(status, PcStatus::Ok);
    assert!(bad.is_null());
    let status = unsafe { pc_dataset_new(4, T4_A.as_ptr(), ptr::null(), 1, ptr::null(), 0, &mut bad) };
    assert_eq!(status, PcStatus::NullPointer);
    unsafe {
        pc_dataset_free(ds);
        pc_dataset_free(ptr::null_mut());
        pc_result_free(ptr::null_mut());
    }
    assert_eq!(unsafe { pc_result_len(ptr::null()) }, 0);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(pc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libpaircausal_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "paircausal.h"

int main(void) {
    uint8_t a[4] = {1, 1, 0, 0};
    double y[4] = {3, 1, 2, 0};
    PcDataset *ds = NULL;
    if (pc_dataset_new(4, a, y, 1, NULL, 0, &ds) != PC_STATUS_OK) return 1;
    PcResult *res = NULL;
    PcStatus st = pc_estimate(ds, "{\"contrast\": {\"kind\": \"win_strict\"}, \"estimators\": [\"I-un\"]}", &res);
    if (st != PC_STATUS_OK) { fprintf(stderr, "%s\n", pc_last_error_message()); return 2; }
    PcEstimateRow row;
    pc_result_row(res, 0, &row);
    printf("%s %d %.4f %.4f\n", pc_result_estimator(res, 0), (int)row.method, row.estimate, row.se);
    st = pc_estimate(ds, "{}", &res);
    printf("%d %s\n", (int)st, pc_version());
    pc_result_free(res);
    pc_dataset_free(ds);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("cc is available");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8_lossy(&run.stdout);
    assert_eq!(text, format!("I-un 3 0.7500 0.1250\n6 {}\n", env!("CARGO_PKG_VERSION")));
}
