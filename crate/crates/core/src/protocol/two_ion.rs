//! S/F manifold discrimination for two ions from a continuous count stream.
//!
//! Each configuration (both ions in S, or exactly one shelved in F) is
//! observed as a stream of equal bins. Even bins from 2 on are detection
//! bins; the odd bins either side act as checks, and bin 0 opens the stream
//! as a lead-in check. A detection bin is vetoed when a neighboring check
//! disagrees with the level it was classified as, which removes bins in
//! which an ion went dark partway through.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::{wilson_interval, BinomialEstimate};
use crate::error::{Error, Result};
use crate::photon::{
    choose_detection_threshold, choose_doppler_threshold, poisson_lower_tail, poisson_upper_tail, CountModel,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoIonParams {
    /// Detection bins in total, split evenly between the two configurations.
    pub detection_bins: u64,
    /// Expected storage episodes per detection bin.
    pub storage_rate: f64,
    /// Length of each episode during which one fluorescing ion is dark (s).
    pub storage_dark_time: f64,
    /// Two-sided tail allowed for a check bin to count as agreeing.
    pub check_bound: f64,
    pub veto: bool,
}

impl Default for TwoIonParams {
    fn default() -> Self {
        TwoIonParams {
            detection_bins: 1_000_000,
            storage_rate: 0.0,
            storage_dark_time: 15e-3,
            check_bound: 1e-6,
            veto: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoIonResult {
    /// Counts ≥ `threshold` read as both ions in S.
    pub threshold: u64,
    pub one_bright_mean: f64,
    pub two_bright_mean: f64,
    /// P(misclassify) per bin for an unperturbed stream, from Poisson tails.
    pub expected_error: f64,
    pub detection_bins: u64,
    pub vetoed: u64,
    /// Misclassified detection bins that survived the veto.
    pub misclassified: u64,
    /// Detection bins touched by an injected storage episode.
    pub corrupted: u64,
    pub corrupted_misclassified: u64,
    pub corrupted_vetoed: u64,
    pub error_rate: BinomialEstimate,
}

/// Cutoff c minimizing P(X_lo ≥ c) + P(X_hi < c).
pub fn optimal_two_level_threshold(lo: f64, hi: f64) -> Result<u64> {
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("need 0 <= lo < hi, got {lo}, {hi}")));
    }
    let start = lo.floor() as u64 + 1;
    let end = hi.ceil() as u64;
    let cost = |c: u64| poisson_upper_tail(c, lo) + poisson_lower_tail(c, hi);
    Ok((start..=end.max(start)).min_by(|a, b| cost(*a).total_cmp(&cost(*b))).unwrap_or(start))
}

struct Stream {
    counts: Vec<u64>,
    /// Whether any episode overlaps the bin.
    touched: Vec<bool>,
}

fn simulate_stream<R: Rng>(bright_ions: u32, bins: usize, model: &CountModel, p: &TwoIonParams, rng: &mut R) -> Stream {
    let w = model.bin_width;
    let mut dark_time = vec![0.0f64; bins];
    let total = bins as f64 * w;
    let expected = p.storage_rate * (bins / 2) as f64;
    if expected > 0.0 && bright_ions > 0 {
        let n_events = Poisson::new(expected).map(|d| d.sample(rng) as u64).unwrap_or(0);
        let mut starts: Vec<f64> = (0..n_events).map(|_| rng.random::<f64>() * total).collect();
        starts.sort_by(f64::total_cmp);
        // Episodes are isolated: one starting within a dark time plus two
        // bins of the previous one is dropped.
        let mut last = f64::NEG_INFINITY;
        for start in starts {
            if start < last + p.storage_dark_time + 2.0 * w {
                continue;
            }
            last = start;
            let stop = (start + p.storage_dark_time).min(total);
            let mut b = (start / w) as usize;
            while b < bins && (b as f64) * w < stop {
                let lo = start.max(b as f64 * w);
                let hi = stop.min((b + 1) as f64 * w);
                dark_time[b] += (hi - lo).max(0.0);
                b += 1;
            }
        }
    }
    let mut counts = Vec::with_capacity(bins);
    let mut touched = Vec::with_capacity(bins);
    for d in &dark_time {
        let bright_time = (bright_ions as f64 * w - d).max(0.0);
        let mean = model.cooling_rate * bright_time + model.dark_rate * w;
        counts.push(if mean > 0.0 { Poisson::new(mean).map(|x| x.sample(rng) as u64).unwrap_or(0) } else { 0 });
        touched.push(*d > 0.0);
    }
    Stream { counts, touched }
}

/// Runs both configurations and counts misclassified detection bins.
///
/// Per-ion counts in a bin come from the laser-cooling rate of the count
/// model. Configuration g uses seed `seed + g`.
pub fn run_two_ion_discrimination(model: &CountModel, params: &TwoIonParams, seed: u64) -> Result<TwoIonResult> {
    model.validate()?;
    if params.detection_bins < 2 {
        return Err(Error::InvalidParameter("need at least two detection bins".into()));
    }
    if !(params.storage_rate >= 0.0 && params.storage_dark_time >= 0.0) {
        return Err(Error::InvalidParameter("storage rate and dark time must be >= 0".into()));
    }
    let w = model.bin_width;
    let one = (model.cooling_rate + model.dark_rate) * w;
    let two = (2.0 * model.cooling_rate + model.dark_rate) * w;
    let threshold = optimal_two_level_threshold(one, two)?;
    let expected_error = 0.5 * (poisson_upper_tail(threshold, one) + poisson_lower_tail(threshold, two));
    let band = |mean: f64| -> Result<(u64, u64)> {
        Ok((choose_doppler_threshold(mean, params.check_bound)?, choose_detection_threshold(mean, params.check_bound)?))
    };
    let bands = [band(one)?, band(two)?];

    let per_config = params.detection_bins / 2;
    let mut res = TwoIonResult {
        threshold,
        one_bright_mean: one,
        two_bright_mean: two,
        expected_error,
        detection_bins: 2 * per_config,
        vetoed: 0,
        misclassified: 0,
        corrupted: 0,
        corrupted_misclassified: 0,
        corrupted_vetoed: 0,
        error_rate: wilson_interval(0, 1, 1.0)?,
    };
    for (g, bright_ions) in [(0u64, 2u32), (1, 1)] {
        let mut r = rng::shot_rng(seed, g);
        let bins = 2 * per_config as usize + 2;
        let s = simulate_stream(bright_ions, bins, model, params, &mut r);
        for k in 1..=per_config as usize {
            let b = 2 * k;
            let read_two = s.counts[b] >= threshold;
            let (lo, hi) = bands[read_two as usize];
            let agrees = |i: usize| s.counts[i] >= lo && s.counts[i] < hi;
            let vetoed = params.veto && (!agrees(b - 1) || !agrees(b + 1));
            let wrong = read_two != (bright_ions == 2);
            let touched = s.touched[b];
            res.corrupted += touched as u64;
            if vetoed {
                res.vetoed += 1;
                res.corrupted_vetoed += touched as u64;
            } else if wrong {
                res.misclassified += 1;
                res.corrupted_misclassified += touched as u64;
            }
        }
    }
    res.error_rate = wilson_interval(res.misclassified, (res.detection_bins - res.vetoed).max(1), 1.0)?;
    Ok(res)
}
