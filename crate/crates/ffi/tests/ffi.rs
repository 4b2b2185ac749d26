use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use lspc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = lspc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn expectile_matches_definition() {
    for (u, xi) in [(0.5, 0.7), (-0.5, 0.7), (2.0, 0.9), (-1.5, 0.1), (0.0, 0.3)] {
        let w: f64 = if u < 0.0 { 1.0 - xi } else { xi };
        assert_eq!(lspc_expectile_loss(u, xi), w * u * u);
        assert_eq!(lspc_expectile_grad(u, xi), 2.0 * w * u);
    }
    let v = unsafe { CStr::from_ptr(lspc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_and_bad_arguments_report_errors() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(lspc_dataset_collect(ptr::null(), c("mixture").as_ptr(), 10, 0, &mut ds), LspcStatus::NullArgument);
        assert!(last_error().contains("env_id"));
        assert_eq!(lspc_dataset_collect(c("moon").as_ptr(), c("mixture").as_ptr(), 10, 0, &mut ds), LspcStatus::InvalidInput);
        assert!(last_error().contains("moon"));
        assert!(ds.is_null());
        assert_eq!(lspc_dataset_load(c("/nonexistent/x.lspcds").as_ptr(), &mut ds), LspcStatus::Io);
        let mut m = ptr::null_mut();
        assert_eq!(lspc_model_load(c("/nonexistent").as_ptr(), &mut m), LspcStatus::Io);
        assert_eq!(lspc_dataset_len(ptr::null()), 0);
        lspc_dataset_free(ptr::null_mut());
        lspc_model_free(ptr::null_mut());
    }
}

#[test]
fn collect_train_act_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = c(dir.path().join("d.lspcds").to_str().unwrap());
    let ck = c(dir.path().join("ck").to_str().unwrap());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(lspc_dataset_collect(c("point-hazard").as_ptr(), c("mixture").as_ptr(), 800, 2, &mut ds), LspcStatus::Ok);
        assert!(lspc_last_error().is_null());
        let n = lspc_dataset_len(ds);
        assert!(n >= 800);
        assert_eq!(lspc_dataset_save(ds, data_path.as_ptr()), LspcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(lspc_dataset_load(data_path.as_ptr(), &mut back), LspcStatus::Ok);
        assert_eq!(lspc_dataset_len(back), n);
        lspc_dataset_free(back);

        let cfg = c(r#"{"profile":"desk","steps":10,"batch_size":16,"hidden":[8],"d_z":2,"eval_every":0}"#);
        assert_eq!(lspc_train(ds, c(r#"{"bogus":1}"#).as_ptr(), ck.as_ptr()), LspcStatus::InvalidInput);
        assert_eq!(lspc_train(ds, cfg.as_ptr(), ck.as_ptr()), LspcStatus::Ok);
        lspc_dataset_free(ds);

        let mut m = ptr::null_mut();
        assert_eq!(lspc_model_load(ck.as_ptr(), &mut m), LspcStatus::Ok);
        let (mut sd, mut ad) = (0usize, 0usize);
        assert_eq!(lspc_model_dims(m, &mut sd, &mut ad), LspcStatus::Ok);
        assert_eq!((sd, ad), (2, 2));

        let s = [-0.5f64, -0.4];
        let mut a = [0.0f64; 2];
        let mut b = [0.0f64; 2];
        for pol in [LspcPolicy::LspcS, LspcPolicy::LspcO, LspcPolicy::Cvae] {
            assert_eq!(lspc_model_act(m, pol, s.as_ptr(), 2, 7, 3, a.as_mut_ptr(), 2), LspcStatus::Ok);
            assert_eq!(lspc_model_act(m, pol, s.as_ptr(), 2, 7, 3, b.as_mut_ptr(), 2), LspcStatus::Ok);
            assert_eq!(a, b);
            assert!(a.iter().all(|x| x.abs() <= 0.2));
        }
        assert_eq!(lspc_model_act(m, LspcPolicy::LspcO, s.as_ptr(), 1, 0, 0, a.as_mut_ptr(), 2), LspcStatus::InvalidInput);
        assert_eq!(lspc_model_act(m, LspcPolicy::LspcO, s.as_ptr(), 2, 0, 0, a.as_mut_ptr(), 3), LspcStatus::InvalidInput);
        assert_eq!(lspc_model_act(m, LspcPolicy::LspcO, ptr::null(), 2, 0, 0, a.as_mut_ptr(), 2), LspcStatus::NullArgument);
        let bad = [f64::NAN, 0.0];
        assert_ne!(lspc_model_act(m, LspcPolicy::LspcO, bad.as_ptr(), 2, 0, 0, a.as_mut_ptr(), 2), LspcStatus::Ok);
        lspc_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/lspc.h");
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
