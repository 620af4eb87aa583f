use std::ffi::{CStr, CString};
use std::ptr;

use tiltbound_ffi::*;

fn source(json: &str) -> *mut TbSource {
    let text = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { tb_source_from_json(text.as_ptr(), &mut s) };
    assert_eq!(status, TbStatus::Ok);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = tb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn gaussian_log_mgf_and_curvature() {
    let s = source(r#"{"kind":"gaussian","sigma":2.0}"#);
    let mut v = 0.0;
    assert_eq!(unsafe { tb_log_mgf(s, 1.5, &mut v) }, TbStatus::Ok);
    assert!((v - 4.0 * 1.5 * 1.5 / 2.0).abs() < 1e-12);
    assert_eq!(unsafe { tb_cgf_second_derivative(s, 0.7, &mut v) }, TbStatus::Ok);
    assert!((v - 4.0).abs() < 1e-5, "{v}");
    let mut w = 0.0;
    assert_eq!(unsafe { tb_source_window(s, &mut w) }, TbStatus::Ok);
    assert!(w.is_infinite());
    let grid: Vec<f64> = (1..=40).map(|k| k as f64 * 0.25).collect();
    let mut norm = 0.0;
    assert_eq!(unsafe { tb_bphi_norm_phi2(s, grid.as_ptr(), grid.len(), &mut norm) }, TbStatus::Ok);
    assert!((norm - 2.0).abs() < 1e-9, "{norm}");
    unsafe { tb_source_free(s) };
}

#[test]
fn domain_errors_carry_a_message() {
    let s = source(r#"{"kind":"two_sided_exponential","rate":1.0}"#);
    let mut v = 0.0;
    assert_eq!(unsafe { tb_log_mgf(s, 1.5, &mut v) }, TbStatus::Domain);
    assert!(!last_error().is_empty());
    // a successful call clears the message
    assert_eq!(unsafe { tb_log_mgf(s, 0.5, &mut v) }, TbStatus::Ok);
    assert!(tb_last_error_message().is_null());
    assert!((v + (0.75f64).ln()).abs() < 1e-12);
    unsafe { tb_source_free(s) };
}

#[test]
fn bad_input_is_reported() {
    let text = CString::new("{not json").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tb_source_from_json(text.as_ptr(), &mut s) }, TbStatus::Parse);
    assert!(s.is_null());
    assert_eq!(unsafe { tb_source_from_json(ptr::null(), &mut s) }, TbStatus::NullPointer);
    assert!(last_error().contains("json"));
    let mut v = 0.0;
    assert_eq!(unsafe { tb_log_mgf(ptr::null(), 0.0, &mut v) }, TbStatus::NullPointer);
    unsafe { tb_source_free(ptr::null_mut()) };
}

#[test]
fn conjugate_of_sampled_quadratic() {
    let grid: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.05).collect();
    let values: Vec<f64> = grid.iter().map(|y| y * y / 2.0).collect();
    let xs = [-3.0, 0.0, 1.0, 2.5];
    let mut out = [0.0; 4];
    let status = unsafe {
        tb_conjugate(grid.as_ptr(), values.as_ptr(), grid.len(), TB_EXTEND_AFFINE, xs.as_ptr(), xs.len(), out.as_mut_ptr())
    };
    assert_eq!(status, TbStatus::Ok);
    for (x, v) in xs.iter().zip(out) {
        // grid nodes sit on the slopes x, so the piecewise-linear conjugate is exact there
        assert!((v - x * x / 2.0).abs() < 1e-12, "{x}: {v}");
    }
    let far = [20.0];
    let mut o = [0.0];
    let status = unsafe {
        tb_conjugate(grid.as_ptr(), values.as_ptr(), grid.len(), TB_EXTEND_INFINITE, far.as_ptr(), 1, o.as_mut_ptr())
    };
    assert_eq!(status, TbStatus::Ok);
    assert!((o[0] - (20.0 * 10.0 - 50.0)).abs() < 1e-9);
    let status = unsafe { tb_conjugate(grid.as_ptr(), values.as_ptr(), 2, 7, far.as_ptr(), 1, o.as_mut_ptr()) };
    assert_eq!(status, TbStatus::Invalid);
}

#[test]
fn classification_and_tail_bound() {
    let mut lc = -1;
    assert_eq!(unsafe { tb_classify_family_lc(1.0, -1.0, &mut lc) }, TbStatus::Ok);
    assert_eq!(lc, 0);
    assert_eq!(unsafe { tb_classify_family_lc(2.0, -5.0, &mut lc) }, TbStatus::Ok);
    assert_eq!(lc, 1);
    assert_eq!(unsafe { tb_classify_family_lc(f64::NAN, 0.0, &mut lc) }, TbStatus::Invalid);
    let mut b = 0.0;
    assert_eq!(unsafe { tb_tail_bound_phi2(1.0, 3.0, &mut b) }, TbStatus::Ok);
    assert!((b - (-4.5f64).exp()).abs() < 1e-12 * b.max(1e-300) + 1e-15);
    assert_eq!(unsafe { tb_tail_bound_phi2(0.0, 3.0, &mut b) }, TbStatus::Invalid);
}

#[test]
fn header_is_generated_and_complete() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tiltbound.h")).unwrap();
    for name in [
        "tb_source_from_json",
        "tb_source_free",
        "tb_log_mgf",
        "tb_cgf_second_derivative",
        "tb_bphi_norm_phi2",
        "tb_tail_bound_phi2",
        "tb_classify_family_lc",
        "tb_conjugate",
        "tb_last_error_message",
        "TB_STATUS_DOMAIN",
        "typedef struct TbSource TbSource",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(tb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
