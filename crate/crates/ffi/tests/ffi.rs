use std::ffi::{CStr, CString};
use std::ptr;

use pntkit_ffi::*;

fn model(name: &str) -> *mut PntModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pntkit_model_builtin(name.as_ptr(), &mut m) }, PntStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = pntkit_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn builtin_parameter_count() {
    let m = model("kerr2");
    let mut n = 0usize;
    assert_eq!(unsafe { pntkit_model_param_count(m, &mut n) }, PntStatus::Ok);
    assert_eq!(n, 8);
    unsafe { pntkit_model_free(m) };
}

#[test]
fn unknown_builtin_sets_error() {
    let name = CString::new("nope").unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { pntkit_model_builtin(name.as_ptr(), &mut m) };
    assert_ne!(s, PntStatus::Ok);
    assert!(m.is_null());
    assert!(last_error().contains("nope"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pntkit_model_builtin(ptr::null(), &mut m) }, PntStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(unsafe { pntkit_model_param_count(ptr::null(), &mut n) }, PntStatus::NullPointer);
    unsafe {
        pntkit_model_free(ptr::null_mut());
        pntkit_string_free(ptr::null_mut());
    }
}

#[test]
fn malformed_document_is_a_parse_error() {
    let doc = CString::new("modes = [\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pntkit_model_parse(doc.as_ptr(), &mut m) }, PntStatus::Parse);
    assert!(last_error().contains("line"));
}

#[test]
fn lambda_threshold_and_report() {
    let m = model("lambda");
    let mut n_t = 99u32;
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { pntkit_pnt_scan(m, 3, 2, 7, &mut n_t, &mut json) }, PntStatus::Ok);
    assert_eq!(n_t, 1);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"n_t\":1"), "{text}");
    unsafe {
        pntkit_string_free(json);
        pntkit_model_free(m);
    }
}

#[test]
fn fcg4_two_particle_dimension() {
    let m = model("fcg4");
    let (mut rank, mut dim_f) = (0usize, 0usize);
    assert_eq!(unsafe { pntkit_holonomy_dimension(m, 2, 0.0, 1, 0, 1, 1e-6, &mut rank, &mut dim_f) }, PntStatus::Ok);
    assert_eq!(rank, 5);
    assert_eq!(dim_f, 5);
    unsafe { pntkit_model_free(m) };
}

#[test]
fn lambda_loop_phase_and_buffer_size() {
    let m = model("lambda");
    let doc = CString::new(
        "segments_per_leg = 200\nwaypoints = [ { theta = 0.0, phi = 0.0 }, { theta = 0.7853981633974483, phi = 0.0 }, \
         { theta = 0.7853981633974483, phi = 1.5707963267948966 }, { theta = 0.0, phi = 1.5707963267948966 } ]\nclose = true\n",
    )
    .unwrap();
    for method in [PntMethod::OrderedExponential, PntMethod::ProjectorTransport] {
        let (mut re, mut im, mut d) = ([0.0f64; 4], [0.0f64; 4], 0usize);
        let s = unsafe { pntkit_holonomy_loop(m, 1, 0.0, doc.as_ptr(), method, re.as_mut_ptr(), im.as_mut_ptr(), 4, &mut d) };
        assert_eq!(s, PntStatus::Ok, "{}", last_error());
        assert_eq!(d, 1);
        assert!((im[0].atan2(re[0]) - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
    }
    let (mut re, mut im, mut d) = ([0.0f64; 1], [0.0f64; 1], 0usize);
    let s = unsafe { pntkit_holonomy_loop(m, 2, 0.0, doc.as_ptr(), PntMethod::OrderedExponential, re.as_mut_ptr(), im.as_mut_ptr(), 1, &mut d) };
    assert_eq!(s, PntStatus::BufferTooSmall);
    assert_eq!(d, 2);
    unsafe { pntkit_model_free(m) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pntkit.h")).unwrap();
    for f in [
        "pntkit_last_error",
        "pntkit_string_free",
        "pntkit_model_builtin",
        "pntkit_model_parse",
        "pntkit_model_free",
        "pntkit_model_param_count",
        "pntkit_pnt_scan",
        "pntkit_holonomy_dimension",
        "pntkit_holonomy_loop",
        "PNT_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}
