//! Photon counting, threshold selection and count histograms.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::atomic::Manifold;
use crate::error::{Error, Result};
use crate::rng;

/// Time-tag resolution of the counter, in nanoseconds.
pub const TIME_TAG_RESOLUTION_NS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountModel {
    /// Detected counts/s from one fluorescing ion under detection light.
    pub bright_rate: f64,
    /// Background counts/s.
    pub dark_rate: f64,
    /// Detection window (s).
    pub detect_window: f64,
    /// Bin width for the two-ion count stream (s).
    pub bin_width: f64,
    /// Overall photon detection efficiency. Informational.
    pub efficiency: f64,
    /// Detected counts/s from one ion under Doppler cooling light.
    pub cooling_rate: f64,
    /// Length of each Doppler cooling check (s).
    pub doppler_window: f64,
}

impl Default for CountModel {
    fn default() -> Self {
        let detect_window = 17e-3;
        CountModel {
            bright_rate: 60.0 / detect_window,
            dark_rate: 0.1 / detect_window,
            detect_window,
            bin_width: 10e-3,
            efficiency: 0.0016,
            cooling_rate: 2e4,
            doppler_window: 5e-3,
        }
    }
}

impl CountModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let non_neg = [self.bright_rate, self.dark_rate, self.cooling_rate, self.efficiency];
        if non_neg.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("count rates and efficiency must be >= 0");
        }
        if !(self.detect_window > 0.0 && self.bin_width > 0.0 && self.doppler_window > 0.0) {
            return bad("detection window, bin width and Doppler window must be > 0");
        }
        Ok(())
    }

    pub fn dark_mean(&self) -> f64 {
        self.dark_rate * self.detect_window
    }

    pub fn bright_mean(&self) -> f64 {
        self.bright_rate * self.detect_window
    }

    /// Expected Doppler-check counts for a cold, trapped ion.
    pub fn doppler_mean(&self) -> f64 {
        (self.cooling_rate + self.dark_rate) * self.doppler_window
    }

    pub fn doppler_dark_mean(&self) -> f64 {
        self.dark_rate * self.doppler_window
    }
}

/// Frozen count cutoffs.
///
/// Detection: counts ≥ `detect_cutoff` read as S-manifold (bright).
/// Doppler: counts < `doppler_cutoff` flag a cooling or storage failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub detect_cutoff: u64,
    pub doppler_cutoff: u64,
    pub detect_error_bound: Bound,
    pub doppler_error_bound: Bound,
}

/// A probability bound stored as its exact decimal exponent pair so that the
/// artifact hashes identically everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bound {
    pub mantissa: u32,
    pub exponent: i32,
}

impl Bound {
    pub const fn new(mantissa: u32, exponent: i32) -> Self {
        Bound { mantissa, exponent }
    }

    pub fn value(self) -> f64 {
        self.mantissa as f64 * 10f64.powi(self.exponent)
    }
}

pub const DEFAULT_DETECT_BOUND: Bound = Bound::new(1, -7);
pub const DEFAULT_DOPPLER_BOUND: Bound = Bound::new(1, -6);

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for b in [self.detect_error_bound.value(), self.doppler_error_bound.value()] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidParameter(format!("error bound {b} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Cutoffs computed from known means rather than calibration data.
    pub fn from_model(model: &CountModel) -> Result<Self> {
        Ok(Thresholds {
            detect_cutoff: choose_detection_threshold(model.dark_mean(), DEFAULT_DETECT_BOUND.value())?,
            doppler_cutoff: choose_doppler_threshold(model.doppler_mean(), DEFAULT_DOPPLER_BOUND.value())?,
            detect_error_bound: DEFAULT_DETECT_BOUND,
            doppler_error_bound: DEFAULT_DOPPLER_BOUND,
        })
    }
}

/// ln(k!) with ~1e-15 relative accuracy.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k <= 30 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64 + 1.0;
    // Stirling series for ln Γ(n).
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n - 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k)).exp()
}

/// P(X ≥ c) for X ~ Poisson(mean).
pub fn poisson_upper_tail(c: u64, mean: f64) -> f64 {
    if c == 0 {
        return 1.0;
    }
    if mean == 0.0 {
        return 0.0;
    }
    if (c as f64) <= mean {
        return 1.0 - poisson_lower_tail(c, mean);
    }
    // Terms decrease monotonically above the mode.
    let mut term = poisson_pmf(c, mean);
    let mut sum = 0.0;
    let mut k = c;
    while term > 0.0 && term > sum * 1e-18 {
        sum += term;
        k += 1;
        term *= mean / k as f64;
    }
    sum
}

/// P(X < c) for X ~ Poisson(mean).
pub fn poisson_lower_tail(c: u64, mean: f64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    if mean == 0.0 {
        return 1.0;
    }
    if (c as f64) > mean + 1.0 {
        return 1.0 - poisson_upper_tail(c, mean);
    }
    // Terms decrease monotonically going down from below the mode.
    let mut k = c - 1;
    let mut term = poisson_pmf(k, mean);
    let mut sum = 0.0;
    loop {
        sum += term;
        if k == 0 || term <= sum * 1e-18 {
            break;
        }
        term *= k as f64 / mean;
        k -= 1;
    }
    sum.min(1.0)
}

fn check_bound(bound: f64) -> Result<()> {
    if bound > 0.0 && bound < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tail bound must lie in (0, 1), got {bound}")))
    }
}

/// Smallest `c` with P(X ≥ c) ≤ `bound` for X ~ Poisson(`dark_mean`).
pub fn choose_detection_threshold(dark_mean: f64, bound: f64) -> Result<u64> {
    check_bound(bound)?;
    if !(dark_mean >= 0.0 && dark_mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("dark mean must be >= 0, got {dark_mean}")));
    }
    let mut c = 0;
    while poisson_upper_tail(c, dark_mean) > bound {
        c += 1;
    }
    Ok(c)
}

/// Largest `c ≥ 1` with P(X < c) ≤ `bound` for X ~ Poisson(`cooling_mean`).
pub fn choose_doppler_threshold(cooling_mean: f64, bound: f64) -> Result<u64> {
    check_bound(bound)?;
    if !(cooling_mean > 0.0 && cooling_mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("cooling mean must be > 0, got {cooling_mean}")));
    }
    if poisson_lower_tail(1, cooling_mean) > bound {
        return Err(Error::Unmonitorable { mean: cooling_mean, bound });
    }
    let mut c = 1;
    while poisson_lower_tail(c + 1, cooling_mean) <= bound {
        c += 1;
    }
    Ok(c)
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

/// Detection-window counts for an ion that sits in `final` for the whole window.
pub fn draw_counts_with<R: Rng + ?Sized>(final_state: Manifold, model: &CountModel, window: f64, rng: &mut R) -> u64 {
    let rate = if final_state.is_ground() { model.bright_rate + model.dark_rate } else { model.dark_rate };
    sample_poisson(rate * window, rng)
}

pub fn draw_counts(final_state: Manifold, model: &CountModel, window: f64, seed: u64) -> Result<u64> {
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!("window must be > 0, got {window}")));
    }
    Ok(draw_counts_with(final_state, model, window, &mut rng::seeded(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Readout {
    /// Fluorescence seen: ion in ²S₁/₂.
    #[serde(rename = "S_manifold")]
    SManifold,
    /// No fluorescence: ion shelved in ²F°₇/₂.
    #[serde(rename = "F_manifold")]
    FManifold,
}

/// Boundary is inclusive-bright: `counts == detect_cutoff` reads as S-manifold.
#[inline]
pub fn classify(counts: u64, thresholds: &Thresholds) -> Readout {
    if counts >= thresholds.detect_cutoff {
        Readout::SManifold
    } else {
        Readout::FManifold
    }
}

/// Uniform arrival times (ns, sorted) for `count` photons inside `window` seconds.
pub fn time_tags<R: Rng + ?Sized>(count: u64, window: f64, rng: &mut R) -> Vec<u64> {
    let slots = ((window * 1e9) as u64 / TIME_TAG_RESOLUTION_NS).max(1);
    let mut tags: Vec<u64> = (0..count).map(|_| rng.random_range(0..slots) * TIME_TAG_RESOLUTION_NS).collect();
    tags.sort_unstable();
    tags
}

/// One integer nanosecond value per line.
pub fn write_time_tags<W: Write>(out: &mut W, tags: impl IntoIterator<Item = u64>) -> std::io::Result<()> {
    for t in tags {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub label: String,
    pub total: u64,
    pub frequencies: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn new(label: impl Into<String>) -> Self {
        Histogram { label: label.into(), total: 0, frequencies: BTreeMap::new() }
    }

    pub fn from_counts(label: impl Into<String>, counts: impl IntoIterator<Item = u64>) -> Self {
        let mut h = Histogram::new(label);
        for c in counts {
            h.add(c, 1);
        }
        h
    }

    pub fn add(&mut self, counts: u64, times: u64) {
        *self.frequencies.entry(counts).or_insert(0) += times;
        self.total += times;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&c, &f) in &other.frequencies {
            self.add(c, f);
        }
    }

    /// Shots at or above the cutoff.
    pub fn count_bright(&self, thresholds: &Thresholds) -> u64 {
        self.frequencies.range(thresholds.detect_cutoff..).map(|(_, f)| f).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let s: f64 = self.frequencies.iter().map(|(&c, &f)| c as f64 * f as f64).sum();
        s / self.total as f64
    }

    pub fn is_consistent(&self) -> bool {
        self.frequencies.values().sum::<u64>() == self.total
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HistogramRow {
    counts: u64,
    frequency: u64,
    label: String,
}

/// CSV with header `counts,frequency,label`, rows ordered by label then counts.
pub fn write_histograms_csv<W: Write>(out: W, hists: &[Histogram]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for h in hists {
        for (&counts, &frequency) in &h.frequencies {
            w.serialize(HistogramRow { counts, frequency, label: h.label.clone() })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_histograms_csv<R: std::io::Read>(input: R) -> Result<Vec<Histogram>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<Histogram> = Vec::new();
    for row in r.deserialize() {
        let row: HistogramRow = row?;
        match out.iter_mut().find(|h| h.label == row.label) {
            Some(h) => h.add(row.counts, row.frequency),
            None => {
                let mut h = Histogram::new(row.label);
                h.add(row.counts, row.frequency);
                out.push(h);
            }
        }
    }
    Ok(out)
}
