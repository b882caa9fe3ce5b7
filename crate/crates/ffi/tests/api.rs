use std::ffi::{CStr, CString};
use std::ptr;

use uset_core::Loss;
use uset_ffi::*;

fn last_error() -> String {
    let p = uset_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn loss(spec: &str) -> *mut UsetLoss {
    let spec = CString::new(spec).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { uset_loss_new(spec.as_ptr(), &mut handle) }, UsetStatus::Ok);
    assert!(uset_last_error().is_null());
    handle
}

/// Two Gaussian-free clusters on either side of the origin.
fn clusters() -> (Vec<f64>, Vec<i32>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let t = i as f64 / 20.0;
        x.extend([1.0 + t, 0.5 - t]);
        y.push(1);
        x.extend([-1.0 - t, -0.5 + t * 0.3]);
        y.push(-1);
    }
    (x, y)
}

#[test]
fn loss_values_match_core() {
    for spec in ["tq", "exp", "hinge:nu=0.5", "esterr:h=1,w=1"] {
        let h = loss(spec);
        let core: Loss = spec.parse().unwrap();
        for k in -20..=20 {
            let t = k as f64 / 7.0;
            let mut v = 0.0;
            assert_eq!(unsafe { uset_loss_eval(h, t, &mut v) }, UsetStatus::Ok);
            assert_eq!(v, core.eval(t));
            assert_eq!(unsafe { uset_loss_conjugate(h, t, &mut v) }, UsetStatus::Ok);
            assert_eq!(v, core.conjugate(t).to_f64());
        }
        let mut v = 0.0;
        unsafe { uset_loss_conjugate(h, -1.0, &mut v) };
        assert_eq!(v, f64::INFINITY);
        unsafe { uset_loss_free(h) };
    }
}

#[test]
fn bad_loss_spec_sets_message() {
    let spec = CString::new("hinge:nu=3").unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { uset_loss_new(spec.as_ptr(), &mut handle) };
    assert_eq!(status, UsetStatus::InvalidArgument);
    assert!(handle.is_null());
    assert!(last_error().contains("nu"), "{}", last_error());
}

#[test]
fn null_arguments_are_rejected() {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { uset_loss_new(ptr::null(), &mut handle) }, UsetStatus::NullPointer);
    assert!(last_error().contains("spec"));
    let mut v = 0.0;
    assert_eq!(unsafe { uset_loss_eval(ptr::null(), 0.0, &mut v) }, UsetStatus::NullPointer);
    let h = loss("tq");
    assert_eq!(unsafe { uset_loss_eval(h, 0.0, ptr::null_mut()) }, UsetStatus::NullPointer);
    unsafe {
        uset_loss_free(h);
        uset_loss_free(ptr::null_mut());
        uset_model_free(ptr::null_mut());
    }
}

#[test]
fn train_predict_save_load() {
    let (x, y) = clusters();
    let l = loss("tq");
    let mut model = ptr::null_mut();
    let status = unsafe { uset_train(x.as_ptr(), y.as_ptr(), y.len(), 2, l, 1.0, 0.0, &mut model) };
    assert_eq!(status, UsetStatus::Ok);
    let mut dim = 0;
    assert_eq!(unsafe { uset_model_dim(model, &mut dim) }, UsetStatus::Ok);
    assert_eq!(dim, 2);

    let mut labels = vec![0i32; y.len()];
    let status = unsafe { uset_model_predict(model, x.as_ptr(), y.len(), 2, labels.as_mut_ptr()) };
    assert_eq!(status, UsetStatus::Ok);
    assert_eq!(labels, y);

    let mut values = vec![0.0; y.len()];
    unsafe { uset_model_decision(model, x.as_ptr(), y.len(), 2, values.as_mut_ptr()) };
    for (v, l) in values.iter().zip(&labels) {
        assert_eq!(if *v >= 0.0 { 1 } else { -1 }, *l);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { uset_model_save(model, path.as_ptr()) }, UsetStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { uset_model_load(path.as_ptr(), &mut loaded) }, UsetStatus::Ok);
    let mut again = vec![0.0; y.len()];
    unsafe { uset_model_decision(loaded, x.as_ptr(), y.len(), 2, again.as_mut_ptr()) };
    assert_eq!(values, again);

    unsafe {
        uset_model_free(model);
        uset_model_free(loaded);
        uset_loss_free(l);
    }
}

#[test]
fn gaussian_training_works() {
    let (x, y) = clusters();
    let l = loss("esterr:h=0.5,w=1");
    let mut model = ptr::null_mut();
    let status = unsafe { uset_train(x.as_ptr(), y.as_ptr(), y.len(), 2, l, 0.5, 0.5, &mut model) };
    assert_eq!(status, UsetStatus::Ok, "{}", if status == UsetStatus::Ok { String::new() } else { last_error() });
    let mut labels = vec![0i32; y.len()];
    unsafe { uset_model_predict(model, x.as_ptr(), y.len(), 2, labels.as_mut_ptr()) };
    assert_eq!(labels, y);
    unsafe {
        uset_model_free(model);
        uset_loss_free(l);
    }
}

#[test]
fn training_errors() {
    let (x, mut y) = clusters();
    let l = loss("tq");
    let mut model = ptr::null_mut();
    let st = unsafe { uset_train(x.as_ptr(), y.as_ptr(), y.len(), 2, l, -1.0, 0.0, &mut model) };
    assert_eq!(st, UsetStatus::InvalidArgument);
    assert!(last_error().contains("lambda"));

    y[0] = 0;
    let st = unsafe { uset_train(x.as_ptr(), y.as_ptr(), y.len(), 2, l, 1.0, 0.0, &mut model) };
    assert_eq!(st, UsetStatus::InvalidArgument);
    assert!(last_error().contains("label 0"));

    let ones = vec![1i32; y.len()];
    let st = unsafe { uset_train(x.as_ptr(), ones.as_ptr(), ones.len(), 2, l, 1.0, 0.0, &mut model) };
    assert_ne!(st, UsetStatus::Ok);
    assert!(model.is_null());

    let st = unsafe { uset_train(ptr::null(), ones.as_ptr(), ones.len(), 2, l, 1.0, 0.0, &mut model) };
    assert_eq!(st, UsetStatus::NullPointer);
    unsafe { uset_loss_free(l) };
}

#[test]
fn predict_dimension_mismatch() {
    let (x, y) = clusters();
    let l = loss("tq");
    let mut model = ptr::null_mut();
    unsafe { uset_train(x.as_ptr(), y.as_ptr(), y.len(), 2, l, 1.0, 0.0, &mut model) };
    let q = [0.0; 6];
    let mut out = [0.0; 2];
    let st = unsafe { uset_model_decision(model, q.as_ptr(), 2, 3, out.as_mut_ptr()) };
    assert_eq!(st, UsetStatus::DimensionMismatch);
    unsafe {
        uset_model_free(model);
        uset_loss_free(l);
    }
}

#[test]
fn missing_model_file_is_io_error() {
    let path = CString::new("/nonexistent/dir/model.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { uset_model_load(path.as_ptr(), &mut m) }, UsetStatus::Io);
    assert!(last_error().contains("/nonexistent"));
}

#[test]
fn errors_are_thread_local() {
    let spec = CString::new("bogus").unwrap();
    let mut handle = ptr::null_mut();
    unsafe { uset_loss_new(spec.as_ptr(), &mut handle) };
    assert!(!uset_last_error().is_null());
    std::thread::spawn(|| assert!(uset_last_error().is_null())).join().unwrap();
}
