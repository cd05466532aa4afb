//! C ABI for the shelving simulator.
//!
//! Every fallible call returns a [`ShelvingStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`shelving_last_error`] on the same thread. Configurations and campaign
//! results are opaque handles released with their `_free` functions.
//! Panics never cross the boundary; they surface as `SHELVING_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use shelving::analysis::{fit_a_m1, wilson_interval, BinomialEstimate, ScanPoint};
use shelving::atomic::{AtomicConstants, Manifold};
use shelving::cli::{execute, Command};
use shelving::config::RunConfig;
use shelving::dynamics::shelving_error_analytic;
use shelving::photon::{choose_detection_threshold, choose_doppler_threshold};
use shelving::protocol::{freeze_thresholds, run_calibration, run_spam_campaign, CampaignSummary, Qubit, ShotRecord};
use shelving::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShelvingStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, configuration or input file.
    InvalidArgument = 2,
    /// The simulation or fit failed at run time.
    Runtime = 3,
    /// A_M1 could not be fitted: no point in the asymptotic regime.
    NonIdentifiable = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ShelvingStatus {
    match e {
        Error::NonIdentifiable => ShelvingStatus::NonIdentifiable,
        e if e.is_config() => ShelvingStatus::InvalidArgument,
        _ => ShelvingStatus::Runtime,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), (ShelvingStatus, String)>>(f: F) -> ShelvingStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ShelvingStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_last_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            ShelvingStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (ShelvingStatus, String)>;
}

impl<T> IntoFfi<T> for shelving::Result<T> {
    fn ffi(self) -> Result<T, (ShelvingStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null() -> (ShelvingStatus, String) {
    (ShelvingStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> (ShelvingStatus, String) {
    (ShelvingStatus::InvalidArgument, msg.into())
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, (ShelvingStatus, String)> {
    p.as_mut().ok_or_else(null)
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (ShelvingStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not UTF-8"))
}

/// Message for the last failed call on this thread, or "" after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn shelving_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn shelving_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Binomial estimate with a Wilson interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShelvingEstimate {
    pub k: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&BinomialEstimate> for ShelvingEstimate {
    fn from(b: &BinomialEstimate) -> Self {
        ShelvingEstimate { k: b.k, n: b.n, p_hat: b.p_hat, ci_low: b.ci_low, ci_high: b.ci_high }
    }
}

/// Closed-form shelving error after `t` seconds. `a_m1` is in rad/s.
#[no_mangle]
pub unsafe extern "C" fn shelving_error_closed_form(
    t: f64,
    zeta: f64,
    tau_d: f64,
    a_m1: f64,
    out: *mut f64,
) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        let c = AtomicConstants { zeta, tau_d, ..AtomicConstants::default() }.with_a_m1(a_m1);
        c.validate().ffi()?;
        *out = shelving_error_analytic(t, &c).ffi()?;
        Ok(())
    })
}

/// Smallest cutoff c with P(Poisson(dark_mean) ≥ c) ≤ bound.
#[no_mangle]
pub unsafe extern "C" fn shelving_detection_threshold(dark_mean: f64, bound: f64, out: *mut u64) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = choose_detection_threshold(dark_mean, bound).ffi()?;
        Ok(())
    })
}

/// Largest cutoff c with P(Poisson(cooling_mean) < c) ≤ bound.
#[no_mangle]
pub unsafe extern "C" fn shelving_doppler_threshold(cooling_mean: f64, bound: f64, out: *mut u64) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = choose_doppler_threshold(cooling_mean, bound).ffi()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn shelving_wilson_interval(
    k: u64,
    n: u64,
    z: f64,
    out: *mut ShelvingEstimate,
) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = (&wilson_interval(k, n, z).ffi()?).into();
        Ok(())
    })
}

/// A_M1 fit result, all rates in rad/s.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShelvingM1Fit {
    pub a_m1: f64,
    pub stat_low: f64,
    pub stat_high: f64,
    pub systematic: f64,
    pub low: f64,
    pub high: f64,
    pub upper_limit_only: bool,
}

/// Fits A_M1 to `len` scan points with the default atomic constants.
/// The interval is at `z` sigma, statistics and constants combined.
#[no_mangle]
pub unsafe extern "C" fn shelving_fit_a_m1(
    times: *const f64,
    errors: *const u64,
    trials: *const u64,
    len: usize,
    z: f64,
    out: *mut ShelvingM1Fit,
) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        if len == 0 {
            return Err(invalid("need at least one scan point"));
        }
        if times.is_null() || errors.is_null() || trials.is_null() {
            return Err(null());
        }
        if !(z > 0.0) {
            return Err(invalid("z must be > 0"));
        }
        let (t, e, n) = (
            std::slice::from_raw_parts(times, len),
            std::slice::from_raw_parts(errors, len),
            std::slice::from_raw_parts(trials, len),
        );
        let scan: Vec<ScanPoint> = (0..len).map(|i| ScanPoint { time: t[i], errors: e[i], trials: n[i] }).collect();
        let cfg = RunConfig::default();
        let f = fit_a_m1(&scan, &cfg.constants.constants(), &cfg.constants.uncertainties(), z * z / 2.0).ffi()?;
        *out = ShelvingM1Fit {
            a_m1: f.a_m1,
            stat_low: f.stat_low,
            stat_high: f.stat_high,
            systematic: f.systematic,
            low: f.low,
            high: f.high,
            upper_limit_only: f.upper_limit_only,
        };
        Ok(())
    })
}

/// Opaque run configuration.
pub struct ShelvingConfig {
    inner: RunConfig,
}

/// Creates a configuration with built-in defaults.
#[no_mangle]
pub unsafe extern "C" fn shelving_config_default(out: *mut *mut ShelvingConfig) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = Box::into_raw(Box::new(ShelvingConfig { inner: RunConfig::default() }));
        Ok(())
    })
}

/// Parses and validates a TOML configuration. `*out` is untouched on failure.
#[no_mangle]
pub unsafe extern "C" fn shelving_config_from_toml(
    toml: *const c_char,
    out: *mut *mut ShelvingConfig,
) -> ShelvingStatus {
    guard(|| {
        let out = out_ref(out)?;
        let text = str_arg(toml)?;
        let cfg = RunConfig::from_toml_str(text, std::path::Path::new("<ffi>")).ffi()?;
        cfg.validate().ffi()?;
        *out = Box::into_raw(Box::new(ShelvingConfig { inner: cfg }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn shelving_config_set_seed(cfg: *mut ShelvingConfig, seed: u64) -> ShelvingStatus {
    guard(|| {
        out_ref(cfg)?.inner.seed = seed;
        Ok(())
    })
}

/// Shots per prepared state for the SPAM campaign.
#[no_mangle]
pub unsafe extern "C" fn shelving_config_set_shots(cfg: *mut ShelvingConfig, n_per_state: u64) -> ShelvingStatus {
    guard(|| {
        if n_per_state == 0 {
            return Err(invalid("n_per_state must be >= 1"));
        }
        out_ref(cfg)?.inner.n_per_state = n_per_state;
        Ok(())
    })
}

/// Releases a configuration. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn shelving_config_free(cfg: *mut ShelvingConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a CLI command (`spam`, `scan`, `rb`, `budget`, `two-ion`) and
/// writes its artifacts to `out_dir`. Nothing is written on failure.
#[no_mangle]
pub unsafe extern "C" fn shelving_run_command(
    cfg: *const ShelvingConfig,
    command: *const c_char,
    out_dir: *const c_char,
) -> ShelvingStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(null)?;
        let dir = PathBuf::from(str_arg(out_dir)?);
        let cmd = match str_arg(command)? {
            "spam" => Command::Spam,
            "scan" => Command::Scan,
            "rb" => Command::Rb,
            "budget" => Command::Budget { components: None },
            "two-ion" => Command::TwoIon,
            other => return Err(invalid(format!("unknown command {other:?}"))),
        };
        cfg.inner.validate().ffi()?;
        let (set, _) = execute(&cmd, &cfg.inner).ffi()?;
        set.write_all(&dir).ffi()?;
        Ok(())
    })
}

/// Opaque result of a blinded SPAM campaign.
pub struct ShelvingCampaign {
    records: Vec<ShotRecord>,
    summary: CampaignSummary,
    detect_cutoff: u64,
    doppler_cutoff: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShelvingCampaignSummary {
    pub detect_cutoff: u64,
    pub doppler_cutoff: u64,
    pub zero_inaccuracy: ShelvingEstimate,
    pub one_inaccuracy: ShelvingEstimate,
    pub avg_inaccuracy: ShelvingEstimate,
    pub avg_infidelity: ShelvingEstimate,
    pub flagged: u64,
    pub restarts: u64,
}

/// Manifold codes match the declaration order of the core enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShelvingShot {
    pub index: u64,
    /// 0 or 1.
    pub prepared: u8,
    pub classified: u8,
    pub storage_flagged: bool,
    pub restarts: u32,
    pub pre_doppler_counts: u64,
    pub detect_counts: u64,
    pub post_doppler_counts: u64,
    /// 0 S_F0, 1 S_F1, 2 D52, 3 D32_F1, 4 D32_F2, 5 F72, 6 LOST.
    pub final_manifold: u8,
}

fn qubit_code(q: Qubit) -> u8 {
    match q {
        Qubit::Zero => 0,
        Qubit::One => 1,
    }
}

/// Calibrates, freezes thresholds and runs the campaign described by `cfg`.
#[no_mangle]
pub unsafe extern "C" fn shelving_campaign_run(
    cfg: *const ShelvingConfig,
    out: *mut *mut ShelvingCampaign,
) -> ShelvingStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(null)?.inner;
        let out = out_ref(out)?;
        cfg.validate().ffi()?;
        let app = cfg.apparatus();
        let cal = run_calibration(&app, &cfg.protocol, cfg.calibration.n_per_state, cfg.calibration_seed()).ffi()?;
        let frozen = freeze_thresholds(&cal, cfg.calibration.detect_bound, cfg.calibration.doppler_bound).ffi()?;
        let records = run_spam_campaign(&app, &cfg.protocol, &frozen, cfg.n_per_state, cfg.seed).ffi()?;
        let summary = CampaignSummary::from_records(&records, cfg.z).ffi()?;
        *out = Box::into_raw(Box::new(ShelvingCampaign {
            records,
            summary,
            detect_cutoff: frozen.thresholds.detect_cutoff,
            doppler_cutoff: frozen.thresholds.doppler_cutoff,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn shelving_campaign_summary(
    c: *const ShelvingCampaign,
    out: *mut ShelvingCampaignSummary,
) -> ShelvingStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(null)?;
        let out = out_ref(out)?;
        let s = &c.summary;
        *out = ShelvingCampaignSummary {
            detect_cutoff: c.detect_cutoff,
            doppler_cutoff: c.doppler_cutoff,
            zero_inaccuracy: (&s.zero.inaccuracy).into(),
            one_inaccuracy: (&s.one.inaccuracy).into(),
            avg_inaccuracy: (&s.avg_inaccuracy).into(),
            avg_infidelity: (&s.avg_infidelity).into(),
            flagged: s.zero.flagged + s.one.flagged,
            restarts: s.zero.restarts + s.one.restarts,
        };
        Ok(())
    })
}

/// Number of shot records; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn shelving_campaign_len(c: *const ShelvingCampaign) -> usize {
    c.as_ref().map_or(0, |c| c.records.len())
}

#[no_mangle]
pub unsafe extern "C" fn shelving_campaign_shot(
    c: *const ShelvingCampaign,
    i: usize,
    out: *mut ShelvingShot,
) -> ShelvingStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(null)?;
        let out = out_ref(out)?;
        let r = c.records.get(i).ok_or_else(|| invalid(format!("shot {i} out of range ({})", c.records.len())))?;
        *out = ShelvingShot {
            index: r.index,
            prepared: qubit_code(r.prepared),
            classified: qubit_code(r.classified),
            storage_flagged: r.storage_flagged,
            restarts: r.restarts,
            pre_doppler_counts: r.pre_doppler_counts,
            detect_counts: r.detect_counts,
            post_doppler_counts: r.post_doppler_counts,
            final_manifold: Manifold::index(r.final_manifold) as u8,
        };
        Ok(())
    })
}

/// Releases a campaign. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn shelving_campaign_free(c: *mut ShelvingCampaign) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
