use std::ffi::{c_char, CString};
use std::ptr;

use rough_em_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { rough_em_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn model(name: &str, params: Option<&str>) -> (RoughEmStatus, *mut RoughEmModel) {
    let name = CString::new(name).unwrap();
    let params = params.map(|p| CString::new(p).unwrap());
    let mut m = ptr::null_mut();
    let s = unsafe { rough_em_model_new(name.as_ptr(), params.as_ref().map_or(ptr::null(), |p| p.as_ptr()), &mut m) };
    (s, m)
}

#[test]
fn zero_model_constants() {
    let (s, m) = model("zero", None);
    assert_eq!(s, RoughEmStatus::Ok);
    let mut c = RoughEmConstants::default();
    assert_eq!(unsafe { rough_em_constants(m, &mut c) }, RoughEmStatus::Ok);
    assert!((c.lambda - 1.0).abs() < 1e-12);
    assert!((c.lambda_tilde - 288.0 * 2f64.sqrt()).abs() < 1e-10);
    assert!((c.lambda_min - 4.0).abs() < 1e-12);
    let mut dim = 0;
    assert_eq!(unsafe { rough_em_model_state_dim(m, &mut dim) }, RoughEmStatus::Ok);
    assert_eq!(dim, 1);
    unsafe { rough_em_model_free(m) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    let (s, m) = model("no-such-model", None);
    assert_eq!(s, RoughEmStatus::UnknownModel);
    assert!(m.is_null());
    assert!(last_error().contains("no-such-model"));
    let (s, _) = model("holder", Some("beta = abc"));
    assert_eq!(s, RoughEmStatus::InvalidArgument);
    let (s, m) = model("ou", None);
    assert_eq!(s, RoughEmStatus::Ok);
    let mut c = RoughEmConstants::default();
    assert_eq!(unsafe { rough_em_constants(m, &mut c) }, RoughEmStatus::MissingMetadata);
    assert_eq!(unsafe { rough_em_constants(m, ptr::null_mut()) }, RoughEmStatus::NullPointer);
    unsafe { rough_em_model_free(m) };
    assert_eq!(unsafe { rough_em_model_new(ptr::null(), ptr::null(), &mut ptr::null_mut()) }, RoughEmStatus::NullPointer);
    // a successful call clears the message
    let (s, m) = model("zero", None);
    assert_eq!(s, RoughEmStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { rough_em_model_free(m) };
}

#[test]
fn strong_error_through_handles() {
    let (_, m) = model("holder", Some("beta = 0.5\nhorizon = 1"));
    let levels = [3u32, 4, 5];
    let x0 = [0.0];
    let mut r = ptr::null_mut();
    let s = unsafe { rough_em_strong_error(m, levels.as_ptr(), 3, 8, 64, 7, x0.as_ptr(), 1, 0, 1, &mut r) };
    assert_eq!(s, RoughEmStatus::Ok, "{}", last_error());
    let mut len = 0;
    unsafe { rough_em_report_len(r, &mut len) };
    assert_eq!(len, 3);
    let (mut d, mut e, mut se) = (0.0, 0.0, 0.0);
    let mut prev = f64::INFINITY;
    for (i, level) in levels.iter().enumerate() {
        assert_eq!(unsafe { rough_em_report_level(r, i, &mut d, &mut e, &mut se) }, RoughEmStatus::Ok);
        assert_eq!(d, 2f64.powi(-(*level as i32)));
        assert!(e > 0.0 && e < prev && se > 0.0);
        prev = e;
    }
    assert_eq!(unsafe { rough_em_report_level(r, 3, &mut d, &mut e, &mut se) }, RoughEmStatus::InvalidArgument);
    let (mut slope, mut r2) = (0.0, 0.0);
    assert_eq!(unsafe { rough_em_report_fit(r, &mut slope, &mut r2) }, RoughEmStatus::Ok);
    assert!(slope > 0.45);
    unsafe {
        rough_em_report_free(r);
        rough_em_model_free(m);
    }
    // exact reference on a model without one
    let (_, m) = model("holder", None);
    let s = unsafe { rough_em_strong_error(m, levels.as_ptr(), 3, 8, 4, 7, x0.as_ptr(), 1, 1, 1, &mut r) };
    assert_eq!(s, RoughEmStatus::InvalidArgument);
    assert!(r.is_null());
    unsafe { rough_em_model_free(m) };
}

#[test]
fn modulus_handles() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rough_em_modulus_power(0.5, &mut m) }, RoughEmStatus::Ok);
    let mut v = 0.0;
    unsafe { rough_em_modulus_eval(m, 0.25, &mut v) };
    assert_eq!(v, 0.5);
    assert_eq!(unsafe { rough_em_modulus_eval(m, -1.0, &mut v) }, RoughEmStatus::Domain);
    unsafe { rough_em_modulus_dini_integral(m, 1e-10, 2000, &mut v) };
    assert!((v - 2.0).abs() < 1e-4);
    unsafe { rough_em_modulus_free(m) };
    assert_eq!(unsafe { rough_em_modulus_log_power(1.0, 2.0, &mut m) }, RoughEmStatus::InvalidArgument);
    assert_eq!(unsafe { rough_em_modulus_log_power(5f64.exp(), 2.0, &mut m) }, RoughEmStatus::Ok);
    unsafe { rough_em_modulus_eval(m, 0.0, &mut v) };
    assert_eq!(v, 0.0);
    unsafe { rough_em_modulus_free(m) };
}

#[test]
fn fit_rate_rejects_zero_errors() {
    let d = [0.25, 0.125, 0.0625];
    let (mut s, mut i, mut r2) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { rough_em_fit_rate(d.as_ptr(), d.as_ptr(), 3, &mut s, &mut i, &mut r2) }, RoughEmStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);
    let e = [1.0, 0.0, 1.0];
    assert_eq!(unsafe { rough_em_fit_rate(d.as_ptr(), e.as_ptr(), 3, &mut s, &mut i, &mut r2) }, RoughEmStatus::NonPositiveError);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(rough_em_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
