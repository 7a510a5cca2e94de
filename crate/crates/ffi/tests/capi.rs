use std::ffi::{CStr, CString};
use std::ptr;

use autograph::harness::{generate_sbm, SbmParams};
use autograph_ffi::*;

fn last_error() -> String {
    let p = ag_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn toy_dataset() -> (tempfile::TempDir, CString) {
    let dir = tempfile::tempdir().unwrap();
    generate_sbm(&SbmParams::new(60, 3, 0.3, 0.02, 4))
        .unwrap()
        .save(dir.path())
        .unwrap();
    let c = CString::new(dir.path().to_str().unwrap()).unwrap();
    (dir, c)
}

#[test]
fn load_run_and_read_predictions() {
    let (dir, path) = toy_dataset();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ag_dataset_load(path.as_ptr(), &mut ds), AgStatus::Ok);
        assert!(ag_last_error_message().is_null());
        let (mut n, mut n_test, mut c) = (0, 0, 0);
        assert_eq!(ag_dataset_shape(ds, &mut n, &mut n_test, &mut c), AgStatus::Ok);
        assert_eq!((n, n_test, c), (60, 48, 3));
        assert_eq!(ag_dataset_shape(ds, ptr::null_mut(), ptr::null_mut(), &mut c), AgStatus::Ok);

        let solution = CString::new("baseline_gcn2").unwrap();
        let mut preds = ptr::null_mut();
        assert_eq!(ag_run(ds, solution.as_ptr(), 60.0, 1, 0, &mut preds), AgStatus::Ok);
        let mut len = 0;
        assert_eq!(ag_predictions_len(preds, &mut len), AgStatus::Ok);
        assert_eq!(len, 48);
        let (mut id, mut label) = (0, 0);
        assert_eq!(ag_predictions_get(preds, 0, &mut id, &mut label), AgStatus::Ok);
        assert!(label < 3);
        assert_eq!(ag_predictions_get(preds, len, &mut id, &mut label), AgStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        let mut over = true;
        assert_eq!(ag_predictions_budget_exceeded(preds, &mut over), AgStatus::Ok);
        assert!(!over);

        let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
        assert_eq!(ag_predictions_write(preds, out.as_ptr()), AgStatus::Ok);
        assert!(dir.path().join("out/predictions.tsv").is_file());

        ag_predictions_free(preds);
        ag_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ag_dataset_load(ptr::null(), &mut ds), AgStatus::NullPointer);
        assert!(ds.is_null());

        let missing = CString::new("/nonexistent/dataset").unwrap();
        assert_eq!(ag_dataset_load(missing.as_ptr(), &mut ds), AgStatus::Load);
        assert!(last_error().contains("meta.json"));

        let bad = [0xffu8, 0];
        assert_eq!(
            ag_dataset_load(bad.as_ptr().cast(), &mut ds),
            AgStatus::InvalidUtf8
        );

        let (_dir, path) = toy_dataset();
        assert_eq!(ag_dataset_load(path.as_ptr(), &mut ds), AgStatus::Ok);
        let mut preds = ptr::null_mut();
        let name = CString::new("gcn9").unwrap();
        assert_eq!(ag_run(ds, name.as_ptr(), 5.0, 0, 0, &mut preds), AgStatus::Usage);
        assert!(last_error().contains("gcn9"));
        let name = CString::new("gcn4").unwrap();
        assert_eq!(ag_run(ds, name.as_ptr(), f64::NAN, 0, 0, &mut preds), AgStatus::Usage);
        assert!(preds.is_null());
        ag_dataset_free(ds);
        ag_dataset_free(ptr::null_mut());
        ag_predictions_free(ptr::null_mut());
    }
}

#[test]
fn metrics_through_the_abi() {
    let pred = [0usize, 1, 1];
    let truth = [0usize, 1, 0];
    let mut acc = 0.0;
    unsafe {
        assert_eq!(ag_accuracy(pred.as_ptr(), truth.as_ptr(), 3, &mut acc), AgStatus::Ok);
        assert_eq!(acc, 2.0 / 3.0);
        let (p, t) = ([0usize, 0, 1, 0], [0usize, 0, 1, 1]);
        assert_eq!(ag_balanced_accuracy(p.as_ptr(), t.as_ptr(), 4, 2, &mut acc), AgStatus::Ok);
        assert_eq!(acc, 0.75);
        assert_eq!(ag_accuracy(pred.as_ptr(), truth.as_ptr(), 0, &mut acc), AgStatus::Contract);
        assert_eq!(ag_accuracy(ptr::null(), truth.as_ptr(), 3, &mut acc), AgStatus::NullPointer);
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(ag_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/autograph.h")).unwrap();
    for name in ["ag_dataset_load", "ag_run", "ag_predictions_get", "AG_STATUS_OK", "typedef struct AgDataset AgDataset"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "autograph.h"
int main(void) {
    AgDataset *ds = NULL;
    AgPredictions *p = NULL;
    size_t n = 0, id = 0, label = 0;
    if (ag_dataset_load("data", &ds) != AG_STATUS_OK) return (int)AG_STATUS_LOAD;
    ag_run(ds, "baseline_gcn2", 60.0, 0, 0, &p);
    ag_predictions_len(p, &n);
    ag_predictions_get(p, 0, &id, &label);
    ag_predictions_free(p);
    ag_dataset_free(ds);
    return ag_last_error_message() == NULL ? 0 : 1;
}
"#,
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
