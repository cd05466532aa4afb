//! Maximum-likelihood extraction of the M1 decay rate from a shelving scan.
//!
//! Each scan point contributes a binomial likelihood with success probability
//! given by the closed-form shelving-error curve, which is linear in A_M1.
//! The log-likelihood is therefore concave in A_M1 and the MLE and profile
//! interval are found by bisection.

use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicConstants, ConstantUncertainties};
use crate::dynamics::shelving_error_transient;
use crate::error::{Error, Result};

/// A point is asymptotic when t·ζ/(2τ_D) reaches this value.
pub const ASYMPTOTIC_EXPONENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Shelving time (s).
    pub time: f64,
    pub errors: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M1Fit {
    /// MLE of A_M1 (rad/s).
    pub a_m1: f64,
    /// Profile-likelihood interval (rad/s), statistics only.
    pub stat_low: f64,
    pub stat_high: f64,
    /// Shift from one-sigma τ_D and ζ uncertainties, combined in quadrature (rad/s).
    pub systematic: f64,
    /// Statistical and systematic sides combined in quadrature, floored at 0.
    pub low: f64,
    pub high: f64,
    /// Δ ln L defining the interval.
    pub delta_log_likelihood: f64,
    pub log_likelihood: f64,
    /// MLE sits on the A_M1 = 0 boundary.
    pub upper_limit_only: bool,
}

impl M1Fit {
    pub fn to_mhz(rad_per_s: f64) -> f64 {
        rad_per_s / (2.0 * std::f64::consts::PI) * 1e3
    }
}

struct Likelihood<'a> {
    points: &'a [ScanPoint],
    slope: f64,
    transients: Vec<f64>,
}

impl<'a> Likelihood<'a> {
    fn new(points: &'a [ScanPoint], c: &AtomicConstants) -> Self {
        Likelihood {
            points,
            slope: c.tau_d / (3.0 * c.zeta),
            transients: points.iter().map(|p| shelving_error_transient(p.time, c)).collect(),
        }
    }

    /// Largest A_M1 keeping every probability below 1.
    fn a_max(&self) -> f64 {
        let worst = self.transients.iter().fold(0.0f64, |a, &b| a.max(b));
        (1.0 - worst) / self.slope
    }

    fn prob(&self, i: usize, a: f64) -> f64 {
        self.slope * a + self.transients[i]
    }

    fn value(&self, a: f64) -> f64 {
        let mut ll = 0.0;
        for (i, pt) in self.points.iter().enumerate() {
            let p = self.prob(i, a);
            let k = pt.errors as f64;
            let f = (pt.trials - pt.errors) as f64;
            if k > 0.0 {
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += k * p.ln();
            }
            if f > 0.0 {
                if p >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                ll += f * (-p).ln_1p();
            }
        }
        ll
    }

    fn slope_at(&self, a: f64) -> f64 {
        let mut d = 0.0;
        for (i, pt) in self.points.iter().enumerate() {
            let p = self.prob(i, a);
            let k = pt.errors as f64;
            let f = (pt.trials - pt.errors) as f64;
            if k > 0.0 {
                d += if p > 0.0 { k / p } else { f64::INFINITY };
            }
            if f > 0.0 {
                d -= f / (1.0 - p);
            }
        }
        d * self.slope
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> bool) -> f64 {
    // f(lo) is true, f(hi) is false; lo may lie on either side of hi.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn validate_scan(scan: &[ScanPoint]) -> Result<()> {
    if scan.is_empty() {
        return Err(Error::InvalidParameter("scan is empty".into()));
    }
    for p in scan {
        if p.trials == 0 || p.errors > p.trials || !(p.time >= 0.0) {
            return Err(Error::InvalidParameter(format!("bad scan point {p:?}")));
        }
    }
    Ok(())
}

/// MLE and profile interval of A_M1 for fixed τ_D and ζ.
fn fit_stat(scan: &[ScanPoint], c: &AtomicConstants, delta: f64) -> Result<(f64, f64, f64, f64, bool)> {
    let lik = Likelihood::new(scan, c);
    let a_max = lik.a_max();
    if !(a_max > 0.0) {
        return Err(Error::InvalidParameter("transient term saturates the error probability".into()));
    }
    let upper_limit_only = lik.slope_at(0.0) <= 0.0;
    let a_hat = if upper_limit_only { 0.0 } else { bisect(0.0, a_max, |a| lik.slope_at(a) > 0.0) };
    let l_max = lik.value(a_hat);
    let target = l_max - delta;
    let low = if upper_limit_only || lik.value(0.0) >= target {
        0.0
    } else {
        bisect(a_hat, 0.0, |a| lik.value(a) >= target).min(a_hat)
    };
    let high = bisect(a_hat, a_max, |a| lik.value(a) >= target);
    Ok((a_hat, low, high, l_max, upper_limit_only))
}

/// Binomial maximum-likelihood fit of A_M1 with profile-likelihood interval
/// at `delta_log_likelihood` (½ for one sigma).
pub fn fit_a_m1(
    scan: &[ScanPoint],
    constants: &AtomicConstants,
    uncertainties: &ConstantUncertainties,
    delta_log_likelihood: f64,
) -> Result<M1Fit> {
    validate_scan(scan)?;
    constants.validate()?;
    if !(delta_log_likelihood > 0.0) {
        return Err(Error::InvalidParameter("delta log-likelihood must be > 0".into()));
    }
    let asymptotic = scan.iter().any(|p| p.time * constants.zeta / (2.0 * constants.tau_d) >= ASYMPTOTIC_EXPONENT);
    if !asymptotic {
        return Err(Error::NonIdentifiable);
    }

    let (a_hat, stat_low, stat_high, ll, upper_limit_only) = fit_stat(scan, constants, delta_log_likelihood)?;

    // Symmetric finite shifts of the nuisance constants.
    let shift = |c: AtomicConstants| -> Result<f64> {
        let (a, ..) = fit_stat(scan, &c, delta_log_likelihood)?;
        Ok(a)
    };
    let mut sys2 = 0.0;
    if uncertainties.tau_d > 0.0 {
        let up = shift(AtomicConstants { tau_d: constants.tau_d + uncertainties.tau_d, ..*constants })?;
        let dn = shift(AtomicConstants { tau_d: constants.tau_d - uncertainties.tau_d, ..*constants })?;
        sys2 += (0.5 * (up - dn)).powi(2);
    }
    if uncertainties.zeta > 0.0 {
        let up = shift(AtomicConstants { zeta: constants.zeta + uncertainties.zeta, ..*constants })?;
        let dn = shift(AtomicConstants { zeta: constants.zeta - uncertainties.zeta, ..*constants })?;
        sys2 += (0.5 * (up - dn)).powi(2);
    }
    let systematic = sys2.sqrt();
    let low = (a_hat - ((a_hat - stat_low).powi(2) + sys2).sqrt()).max(0.0);
    let high = a_hat + ((stat_high - a_hat).powi(2) + sys2).sqrt();

    Ok(M1Fit {
        a_m1: a_hat,
        stat_low,
        stat_high,
        systematic,
        low,
        high,
        delta_log_likelihood,
        log_likelihood: ll,
        upper_limit_only,
    })
}

/// Direct inversion of the closed-form curve for one observed error rate.
pub fn invert_single_point(time: f64, error_rate: f64, c: &AtomicConstants) -> f64 {
    ((error_rate - shelving_error_transient(time, c)) * 3.0 * c.zeta / c.tau_d).max(0.0)
}
