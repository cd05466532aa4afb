//! Microwave Rabi flops and Ramsey fringes seen through imperfect readout.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Readout error probabilities per prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpamErrors {
    /// P(read one | zero).
    pub zero: f64,
    /// P(read zero | one), not counting the transfer pulse.
    pub one: f64,
}

impl Default for SpamErrors {
    /// Budget rows other than the transfer pulse: |0⟩ gets preparation and
    /// unflagged storage, |1⟩ gets preparation, finite shelving and M1 decay.
    fn default() -> Self {
        SpamErrors { zero: 0.12e-4, one: 0.90e-4 }
    }
}

impl SpamErrors {
    pub const PERFECT: SpamErrors = SpamErrors { zero: 0.0, one: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !((0.0..=1.0).contains(&self.zero) && (0.0..=1.0).contains(&self.one)) {
            return Err(Error::InvalidParameter("readout errors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// P(read one) for true excited-state probability `p1`.
    pub fn read_one(&self, p1: f64) -> f64 {
        p1 * (1.0 - self.one) + (1.0 - p1) * self.zero
    }
}

/// P(read one) after a resonant pulse of length `t` for each `t` in `times`.
pub fn simulate_rabi(times: &[f64], t_pi: f64, spam: &SpamErrors) -> Result<Vec<f64>> {
    if !(t_pi > 0.0) {
        return Err(Error::InvalidParameter("t_pi must be > 0".into()));
    }
    spam.validate()?;
    Ok(times.iter().map(|&t| spam.read_one((std::f64::consts::PI * t / (2.0 * t_pi)).sin().powi(2))).collect())
}

/// P(read one) after π/2 – `delay` – π/2 at detuning `detuning` (Hz).
pub fn simulate_ramsey(delays: &[f64], detuning: f64, spam: &SpamErrors) -> Result<Vec<f64>> {
    spam.validate()?;
    Ok(delays.iter().map(|&d| spam.read_one(0.5 * (1.0 + (2.0 * std::f64::consts::PI * detuning * d).cos()))).collect())
}

/// Binomial draws of `shots` readouts per probability, seeded per point.
pub fn sample_rabi(probabilities: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut r = rng::shot_rng(seed, i as u64);
            match Binomial::new(shots, p.clamp(0.0, 1.0)) {
                Ok(b) => b.sample(&mut r),
                Err(_) => (0..shots).filter(|_| r.random::<f64>() < p).count() as u64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_pi_pulse_flips() {
        let p = simulate_rabi(&[0.0, 1e-3, 2e-3], 1e-3, &SpamErrors::PERFECT).unwrap();
        assert!(p[0].abs() < 1e-15);
        assert!((p[1] - 1.0).abs() < 1e-15);
        assert!(p[2].abs() < 1e-15);
    }

    #[test]
    fn readout_errors_set_the_floor_and_ceiling() {
        let s = SpamErrors::default();
        let p = simulate_rabi(&[0.0, 1e-3], 1e-3, &s).unwrap();
        assert!((p[0] - s.zero).abs() < 1e-15);
        assert!((p[1] - (1.0 - s.one)).abs() < 1e-15);
    }

    #[test]
    fn ramsey_on_resonance_is_full_transfer() {
        let p = simulate_ramsey(&[0.0, 0.01, 0.025], 20.0, &SpamErrors::PERFECT).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        // 20 Hz drift over 25 ms is half a fringe.
        assert!(p[2].abs() < 1e-12);
    }

    #[test]
    fn sampled_flops_match_within_binomial_error() {
        let s = SpamErrors::default();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1e-3).collect();
        let p = simulate_rabi(&times, 1e-3, &s).unwrap();
        let k = sample_rabi(&p, 400, 4);
        for (pi, ki) in p.iter().zip(&k) {
            let sigma = (400.0 * pi * (1.0 - pi)).sqrt().max(0.5);
            assert!((*ki as f64 - 400.0 * pi).abs() <= 4.0 * sigma + 1.0);
        }
        assert_eq!(k, sample_rabi(&p, 400, 4));
    }
}
