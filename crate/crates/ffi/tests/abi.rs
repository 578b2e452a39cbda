use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use kolmo_ffi::*;

const K2_A: [f64; 4] = [1.0, 0.0, 0.0, 0.0];
const K2_B: [f64; 4] = [0.0, 0.0, 1.0, 0.0];
const K2_STRATA: [usize; 2] = [1, 1];

fn k2() -> *mut KolmoOperator {
    let mut op = ptr::null_mut();
    let status = unsafe { kolmo_operator_new(2, K2_A.as_ptr(), K2_B.as_ptr(), K2_STRATA.as_ptr(), 2, &mut op) };
    assert_eq!(status, KolmoStatus::Ok);
    op
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        kolmo_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn operator_lifecycle() {
    let op = k2();
    unsafe {
        assert_eq!(kolmo_operator_dim(op), 2);
        assert_eq!(kolmo_operator_homogeneous_dim(op), 4);
        kolmo_operator_free(op);
        kolmo_operator_free(ptr::null_mut());
        assert_eq!(kolmo_operator_dim(ptr::null()), 0);
    }

    let json = CString::new(r#"{"N":2,"A":[[1,0],[0,0]],"B":[[0,0],[1,0]],"m":[1,1]}"#).unwrap();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { kolmo_operator_from_json(json.as_ptr(), &mut op) }, KolmoStatus::Ok);
    unsafe { kolmo_operator_free(op) };

    let broken = CString::new(r#"{"N":2,"A":[[1,0],[0,0]],"B":[[0,0],[0,0]],"m":[1,1]}"#).unwrap();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { kolmo_operator_from_json(broken.as_ptr(), &mut op) }, KolmoStatus::InvalidOperator);
    assert!(op.is_null());
    assert!(last_error().contains("rank deficient"), "{}", last_error());

    let garbage = CString::new("{").unwrap();
    assert_eq!(unsafe { kolmo_operator_from_json(garbage.as_ptr(), &mut op) }, KolmoStatus::InvalidInput);
    assert_eq!(unsafe { kolmo_operator_from_json(ptr::null(), &mut op) }, KolmoStatus::NullPointer);
}

#[test]
fn classify_reports_degenerate_operators() {
    let mut rep = KolmoConditions::default();
    let status = unsafe { kolmo_classify(2, K2_A.as_ptr(), K2_B.as_ptr(), K2_STRATA.as_ptr(), 2, &mut rep) };
    assert_eq!(status, KolmoStatus::Ok);
    assert!(rep.c1 && rep.c2 && rep.c3 && rep.c4 && rep.consistent);
    assert_eq!(rep.kalman_rank, 2);

    let flat = [0.0; 4];
    let status = unsafe { kolmo_classify(2, flat.as_ptr(), K2_B.as_ptr(), K2_STRATA.as_ptr(), 2, &mut rep) };
    assert_eq!(status, KolmoStatus::Ok);
    assert!(!rep.c1 && !rep.c2 && !rep.c3 && !rep.c4);
}

#[test]
fn kernel_sampling_and_cost() {
    let op = k2();
    let origin = [0.0, 0.0];
    unsafe {
        let (mut v, mut lv) = (0.0, 0.0);
        assert_eq!(kolmo_gamma(op, origin.as_ptr(), 1.0, origin.as_ptr(), 0.0, &mut v, &mut lv), KolmoStatus::Ok);
        assert!((v - 3f64.sqrt() / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
        assert!((lv - v.ln()).abs() < 1e-12);
        assert_eq!(
            kolmo_gamma(op, origin.as_ptr(), -1.0, origin.as_ptr(), 0.0, &mut v, ptr::null_mut()),
            KolmoStatus::Ok
        );
        assert_eq!(v, 0.0);
        assert_eq!(
            kolmo_gamma(op, ptr::null(), 1.0, origin.as_ptr(), 0.0, &mut v, ptr::null_mut()),
            KolmoStatus::NullPointer
        );

        let mut a = vec![0.0; 200];
        let mut b = vec![0.0; 200];
        assert_eq!(kolmo_sample_exact(op, origin.as_ptr(), 1.0, 100, 9, a.as_mut_ptr()), KolmoStatus::Ok);
        assert_eq!(kolmo_sample_exact(op, origin.as_ptr(), 1.0, 100, 9, b.as_mut_ptr()), KolmoStatus::Ok);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()) && a.iter().any(|v| *v != 0.0));
        assert_eq!(kolmo_sample_exact(op, origin.as_ptr(), 1.0, 100, 9, ptr::null_mut()), KolmoStatus::NullPointer);

        let target = [0.0, 1.0];
        let mut cost = 0.0;
        assert_eq!(
            kolmo_optimal_cost(op, origin.as_ptr(), target.as_ptr(), 1.0, KolmoCost::Controllability, &mut cost),
            KolmoStatus::Ok
        );
        assert!((cost - 6.0).abs() < 1e-9);
        assert_eq!(
            kolmo_optimal_cost(op, origin.as_ptr(), target.as_ptr(), 1.0, KolmoCost::Gramian, &mut cost),
            KolmoStatus::Ok
        );
        assert!((cost - 12.0).abs() < 1e-9);
        kolmo_operator_free(op);
    }
}

#[test]
fn harnack_bound_through_the_abi() {
    let op = k2();
    let (z0, target) = ([0.0, 0.0], [0.2, 0.1]);
    let (lo, hi) = ([-3.0, -3.0, -2.0], [3.0, 3.0, 1.0]);
    let (mut k, mut bound) = (0usize, 0.0);
    unsafe {
        let status = kolmo_harnack_bound(
            op,
            z0.as_ptr(),
            0.5,
            target.as_ptr(),
            -0.3,
            lo.as_ptr(),
            hi.as_ptr(),
            &mut k,
            &mut bound,
        );
        assert_eq!(status, KolmoStatus::Ok, "{}", last_error());
        assert!(k >= 1);
        assert!((bound.ln() - k as f64).abs() < 1e-9);

        let outside = [5.0, 0.0];
        let status = kolmo_harnack_bound(
            op,
            z0.as_ptr(),
            0.5,
            outside.as_ptr(),
            -0.3,
            lo.as_ptr(),
            hi.as_ptr(),
            &mut k,
            &mut bound,
        );
        assert_eq!(status, KolmoStatus::NotAttainable, "{}", last_error());
        let status = kolmo_harnack_bound(
            op,
            z0.as_ptr(),
            0.5,
            target.as_ptr(),
            -0.3,
            hi.as_ptr(),
            lo.as_ptr(),
            &mut k,
            &mut bound,
        );
        assert_eq!(status, KolmoStatus::InvalidInput, "{}", last_error());
        kolmo_operator_free(op);
    }
}

/// Compiles a C client against the generated header and the static library.
#[test]
fn c_client_links_against_the_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/kolmo.h");
    assert!(header.exists());
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap();
    assert!(lib_dir.join("libkolmo_ffi.a").exists(), "static library missing in {}", lib_dir.display());
    let exe = deps.join("kolmo_ffi_smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(lib_dir.join("libkolmo_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
