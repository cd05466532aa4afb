//! Two-sample comparison of error rates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::photon::ln_factorial;

/// Largest total error count handled by the exact conditional test.
pub const EXACT_MAX_SUCCESSES: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    /// One-sided p-value for H1: rate 1 > rate 2.
    pub p_value: f64,
    pub method: TestMethod,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Tests H0: p1 = p2 against H1: p1 > p2.
///
/// Conditions on the total error count m = k1 + k2 and uses the exact
/// hypergeometric tail when m is at most [`EXACT_MAX_SUCCESSES`], otherwise a
/// continuity-corrected normal approximation to the same conditional law.
pub fn binomial_two_sample_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<TwoSampleTest> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InvalidParameter(format!("invalid counts {k1}/{n1} vs {k2}/{n2}")));
    }
    let m = k1 + k2;
    let n = n1 + n2;
    if m == 0 {
        return Ok(TwoSampleTest { p_value: 1.0, method: TestMethod::Exact });
    }
    if m <= EXACT_MAX_SUCCESSES {
        let hi = m.min(n1);
        let denom = ln_choose(n, m);
        let mut p = 0.0;
        for x in k1..=hi {
            if m - x > n2 {
                continue;
            }
            p += (ln_choose(n1, x) + ln_choose(n2, m - x) - denom).exp();
        }
        return Ok(TwoSampleTest { p_value: p.clamp(0.0, 1.0), method: TestMethod::Exact });
    }
    let (n1f, n2f, nf, mf) = (n1 as f64, n2 as f64, n as f64, m as f64);
    let mean = mf * n1f / nf;
    let var = mf * (n1f / nf) * (n2f / nf) * (nf - mf) / (nf - 1.0).max(1.0);
    if var <= 0.0 {
        return Ok(TwoSampleTest { p_value: if k1 as f64 >= mean { 1.0 } else { 0.0 }, method: TestMethod::Normal });
    }
    let z = (k1 as f64 - 0.5 - mean) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(TwoSampleTest { p_value: std.sf(z), method: TestMethod::Normal })
}
