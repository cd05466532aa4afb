//! Calls through the C ABI from Rust.

use std::ffi::{CStr, CString};
use std::ptr;

use shelving_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(shelving_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn closed_form_and_thresholds() {
    let mut e = 0.0;
    let a_m1 = 2.0 * std::f64::consts::PI * 4.5e-3;
    let s = unsafe { shelving_error_closed_form(10.0, 0.824, 7.2e-3, a_m1, &mut e) };
    assert_eq!(s, ShelvingStatus::Ok);
    assert!((e / 8.235e-5 - 1.0).abs() < 1e-3, "{e}");
    let (mut d, mut c) = (0u64, 0u64);
    assert_eq!(unsafe { shelving_detection_threshold(0.1, 1e-7, &mut d) }, ShelvingStatus::Ok);
    assert_eq!(d, 5);
    assert_eq!(unsafe { shelving_doppler_threshold(100.0, 1e-6, &mut c) }, ShelvingStatus::Ok);
    assert_eq!(c, 56);
    assert_eq!(last_error(), "");
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut d = 0u64;
    assert_eq!(unsafe { shelving_detection_threshold(0.1, 2.0, &mut d) }, ShelvingStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { shelving_detection_threshold(0.1, 1e-7, ptr::null_mut()) }, ShelvingStatus::NullPointer);
    let mut e = 0.0;
    assert_eq!(unsafe { shelving_error_closed_form(1.0, 1.5, 7.2e-3, 0.03, &mut e) }, ShelvingStatus::InvalidArgument);
    let mut w = ShelvingEstimate::default();
    assert_eq!(unsafe { shelving_wilson_interval(5, 2, 1.0, &mut w) }, ShelvingStatus::InvalidArgument);
}

#[test]
fn fit_reports_non_identifiable_scans() {
    let mut f = ShelvingM1Fit::default();
    let (t, k, n) = ([0.01, 0.02], [5000u64, 2000], [100_000u64, 100_000]);
    let s = unsafe { shelving_fit_a_m1(t.as_ptr(), k.as_ptr(), n.as_ptr(), 2, 1.0, &mut f) };
    assert_eq!(s, ShelvingStatus::NonIdentifiable);
    let s = unsafe { shelving_fit_a_m1([0.3].as_ptr(), [7u64].as_ptr(), [100_000u64].as_ptr(), 1, 1.0, &mut f) };
    assert_eq!(s, ShelvingStatus::Ok);
    assert!(f.low < f.a_m1 && f.a_m1 < f.high);
}

#[test]
fn campaign_handle_round_trip() {
    let toml = CString::new("n_per_state = 400\nseed = 3\n[calibration]\nn_per_state = 1000\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { shelving_config_from_toml(toml.as_ptr(), &mut cfg) }, ShelvingStatus::Ok);
    let mut camp = ptr::null_mut();
    assert_eq!(unsafe { shelving_campaign_run(cfg, &mut camp) }, ShelvingStatus::Ok);
    let mut sum = ShelvingCampaignSummary::default();
    assert_eq!(unsafe { shelving_campaign_summary(camp, &mut sum) }, ShelvingStatus::Ok);
    assert_eq!((sum.detect_cutoff, sum.doppler_cutoff), (5, 56));
    assert_eq!(unsafe { shelving_campaign_len(camp) }, 800);
    let mut shot = ShelvingShot::default();
    assert_eq!(unsafe { shelving_campaign_shot(camp, 799, &mut shot) }, ShelvingStatus::Ok);
    assert_eq!(shot.index, 799);
    assert_eq!(unsafe { shelving_campaign_shot(camp, 800, &mut shot) }, ShelvingStatus::InvalidArgument);
    unsafe {
        shelving_campaign_free(camp);
        shelving_config_free(cfg);
        shelving_campaign_free(ptr::null_mut());
    }
}

#[test]
fn bad_config_leaves_out_untouched() {
    let toml = CString::new("[lasers]\non_935 = true\non_861 = true\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { shelving_config_from_toml(toml.as_ptr(), &mut cfg) }, ShelvingStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert!(last_error().contains("repump"), "{}", last_error());
}

#[test]
fn run_command_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("b").to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(shelving_config_default(&mut cfg), ShelvingStatus::Ok);
        assert_eq!(shelving_run_command(cfg, c"budget".as_ptr(), out.as_ptr()), ShelvingStatus::Ok);
        assert_eq!(shelving_run_command(cfg, c"dance".as_ptr(), out.as_ptr()), ShelvingStatus::InvalidArgument);
        shelving_config_free(cfg);
    }
    assert!(dir.path().join("b/budget.json").exists());
}
