use std::ffi::CStr;
use std::ptr;

use netreg_ffi::*;

fn last_error() -> String {
    let p = netreg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generated(groups: usize, seed: u64) -> *mut NetregNetwork {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { netreg_network_generate(groups, 10, 3, seed, &mut net) }, NetregStatus::Ok);
    net
}

fn panel(net: *const NetregNetwork) -> *mut NetregData {
    let n = unsafe { netreg_network_node_count(net) };
    let x1: Vec<f64> = (0..n).map(|i| (1.3 * i as f64).sin()).collect();
    let x2: Vec<f64> = (0..n).map(|i| (0.7 * i as f64).cos()).collect();
    let y: Vec<f64> = (0..n).map(|i| x1[i] - x2[i] + (3.1 * i as f64).sin()).collect();
    let mut data = ptr::null_mut();
    let s = unsafe { netreg_data_new(net, n, y.as_ptr(), 1, x1.as_ptr(), 1, x2.as_ptr(), &mut data) };
    assert_eq!(s, NetregStatus::Ok);
    data
}

#[test]
fn estimate_round_trip() {
    let net = generated(20, 3);
    assert_eq!(unsafe { netreg_network_group_count(net) }, 20);
    let data = panel(net);
    for method in [
        NetregMethod::Classical,
        NetregMethod::BiasCorrected,
        NetregMethod::Tikhonov,
        NetregMethod::LandweberFridman,
        NetregMethod::PrincipalComponents,
    ] {
        let opts = NetregEstimateOptions {
            method,
            ..netreg_estimate_options_default()
        };
        let mut res = ptr::null_mut();
        assert_eq!(unsafe { netreg_estimate(net, data, &opts, &mut res) }, NetregStatus::Ok, "{method:?}");
        let dim = unsafe { netreg_result_dim(res) };
        assert_eq!(dim, 3);
        let mut coef = vec![0.0; dim];
        let mut se = vec![0.0; dim];
        unsafe {
            assert_eq!(netreg_result_coefficients(res, coef.as_mut_ptr(), dim), NetregStatus::Ok);
            assert_eq!(netreg_result_std_errors(res, se.as_mut_ptr(), dim), NetregStatus::Ok);
            assert!(netreg_result_rho(res).is_finite());
            assert!(netreg_result_sigma2(res) > 0.0);
            let classical = method == NetregMethod::Classical;
            assert_eq!(netreg_result_alpha(res).is_nan(), classical);
            assert_eq!(netreg_result_parameter(res).is_nan(), classical);
            netreg_result_free(res);
        }
        assert!(coef.iter().chain(&se).all(|v| v.is_finite()));
    }
    unsafe {
        netreg_data_free(data);
        netreg_network_free(net);
    }
}

#[test]
fn fixed_parameter_and_null_options() {
    let net = generated(15, 9);
    let data = panel(net);
    let opts = NetregEstimateOptions {
        method: NetregMethod::PrincipalComponents,
        parameter: 4.0,
        ..netreg_estimate_options_default()
    };
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(netreg_estimate(net, data, &opts, &mut a), NetregStatus::Ok);
        assert_eq!(netreg_estimate(net, data, ptr::null(), &mut b), NetregStatus::Ok);
        assert_eq!(netreg_result_parameter(a), 4.0);
        assert_eq!(netreg_result_alpha(a), 0.25);
        assert!(netreg_result_alpha(b) > 0.0);
        netreg_result_free(a);
        netreg_result_free(b);
        netreg_data_free(data);
        netreg_network_free(net);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(netreg_network_generate(0, 10, 3, 1, &mut net), NetregStatus::InvalidArgument);
        assert!(net.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(netreg_network_generate(5, 10, 3, 1, ptr::null_mut()), NetregStatus::NullPointer);
        assert!(last_error().contains("null"));

        let group = [1u64];
        let id = [0u64];
        let s = netreg_network_from_edges(1, group.as_ptr(), id.as_ptr(), id.as_ptr(), ptr::null(), 0, ptr::null(), ptr::null(), false, &mut net);
        assert_eq!(s, NetregStatus::Data);
        assert!(last_error().contains("self"), "{}", last_error());

        let good = generated(5, 2);
        let y = [0.0; 3];
        let mut data = ptr::null_mut();
        let s = netreg_data_new(good, 3, y.as_ptr(), 0, ptr::null(), 0, ptr::null(), &mut data);
        assert_ne!(s, NetregStatus::Ok);
        assert!(data.is_null());

        let (mut v, mut c) = (NetregVerdict::Identified, 0);
        assert_eq!(netreg_network_identification(good, 1e-8, &mut v, &mut c), NetregStatus::Data);
        assert!(last_error().contains("symmetric"));

        netreg_network_free(good);
        netreg_network_free(ptr::null_mut());
        netreg_data_free(ptr::null_mut());
        netreg_result_free(ptr::null_mut());
        assert_eq!(netreg_network_node_count(ptr::null()), 0);
        assert!(netreg_result_rho(ptr::null()).is_nan());
    }
}

#[test]
fn explicit_node_list_keeps_isolates() {
    let group = [0u64, 0];
    let src = [0u64, 1];
    let dst = [1u64, 0];
    let ng = [0u64, 0, 0];
    let ni = [0u64, 1, 2];
    let mut net = ptr::null_mut();
    unsafe {
        let s = netreg_network_from_edges(2, group.as_ptr(), src.as_ptr(), dst.as_ptr(), ptr::null(), 3, ng.as_ptr(), ni.as_ptr(), false, &mut net);
        assert_eq!(s, NetregStatus::Ok, "{}", last_error());
        assert_eq!(netreg_network_node_count(net), 3);
        let (mut v, mut c) = (NetregVerdict::Identified, 0);
        assert_eq!(netreg_network_identification(net, 1e-8, &mut v, &mut c), NetregStatus::Ok);
        assert_eq!(c, 3);
        netreg_network_free(net);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(netreg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
