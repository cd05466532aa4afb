use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binomial proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialEstimate {
    pub k: u64,
    pub n: u64,
    pub z: f64,
    pub p_hat: f64,
    /// Wilson center (p̂ + z²/2n)/(1 + z²/n).
    pub center: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn wilson_interval(k: u64, n: u64, z: f64) -> Result<BinomialEstimate> {
    if n == 0 {
        return Err(Error::InvalidParameter("wilson interval needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("z must be > 0, got {z}")));
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let ci_low = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let ci_high = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok(BinomialEstimate { k, n, z, p_hat: p, center, ci_low, ci_high })
}

impl BinomialEstimate {
    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.ci_low <= hi && lo <= self.ci_high
    }
}

pub fn to_decibels(p: f64) -> f64 {
    10.0 * p.log10()
}

pub fn from_decibels(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes() {
        let e = wilson_interval(0, 100, 1.0).unwrap();
        assert_eq!(e.ci_low, 0.0);
        assert!((e.ci_high - 0.0099).abs() < 1e-4);
        assert!((e.center - 0.00495).abs() < 1e-5);
    }

    #[test]
    fn all_successes_reach_one() {
        for n in [1, 7, 100, 100_000] {
            assert_eq!(wilson_interval(n, n, 1.0).unwrap().ci_high, 1.0);
        }
    }

    #[test]
    fn thirteen_in_1e5() {
        let e = wilson_interval(13, 100_000, 1.0).unwrap();
        assert!((e.ci_low - 0.99e-4).abs() < 0.01e-4, "{}", e.ci_low);
        assert!((e.ci_high - 1.71e-4).abs() < 0.01e-4, "{}", e.ci_high);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(wilson_interval(0, 0, 1.0).is_err());
        assert!(wilson_interval(3, 2, 1.0).is_err());
        assert!(wilson_interval(1, 2, 0.0).is_err());
    }

    #[test]
    fn decibel_examples() {
        assert!((to_decibels(1.3e-4) - -38.86).abs() < 0.01);
        assert_eq!(to_decibels(1.0), 0.0);
        assert!((to_decibels(8.2e-5) - -40.86).abs() < 0.01);
        let p = 1.234e-5;
        assert!((from_decibels(to_decibels(p)) / p - 1.0).abs() < 1e-12);
    }
}
