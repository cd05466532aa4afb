//! Full SPAM shots, blinded threshold calibration and campaign bookkeeping.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Apparatus, PhaseModels, ProtocolParams};
use crate::analysis::{to_decibels, wilson_interval, BinomialEstimate};
use crate::atomic::Manifold;
use crate::dynamics::{walk, walk_ground_dwell};
use crate::error::{Error, Result};
use crate::photon::{
    choose_detection_threshold, choose_doppler_threshold, sample_poisson, Bound, Histogram, Thresholds,
    DEFAULT_DETECT_BOUND, DEFAULT_DOPPLER_BOUND,
};
use crate::rng::{self, SimRng};

/// Restart attempts allowed for one recorded shot.
pub const MAX_RESTARTS: u32 = 1000;

/// Fluorescence of a hot ion relative to a cold one during the Doppler check.
const HOT_FLUORESCENCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    Zero,
    One,
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qubit::Zero => "zero",
            Qubit::One => "one",
        })
    }
}

/// One recorded shot. Flat so that it maps onto a CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub index: u64,
    pub prepared: Qubit,
    /// Counts of the accepted pre-check.
    pub pre_doppler_counts: u64,
    pub detect_counts: u64,
    pub post_doppler_counts: u64,
    pub storage_flagged: bool,
    pub restarted: bool,
    pub restarts: u32,
    pub classified: Qubit,
    pub final_manifold: Manifold,
}

impl ShotRecord {
    pub fn is_error(&self) -> bool {
        self.prepared != self.classified
    }

    /// Classification and flag agree with the counts under `th`.
    pub fn is_consistent(&self, th: &Thresholds) -> bool {
        let dark = self.detect_counts < th.detect_cutoff;
        (self.classified == Qubit::One) == dark
            && self.storage_flagged == (self.post_doppler_counts < th.doppler_cutoff)
            && self.restarted == (self.restarts > 0)
            && self.pre_doppler_counts >= th.doppler_cutoff
    }
}

/// Prepared state for each of the `2·n_per_state` shots.
///
/// Blocks of `block_size` alternate between the two states; within each pair
/// of blocks a coin drawn from the run seed picks which state goes first.
pub fn interleaving_order(n_per_state: u64, block_size: u64, seed: u64) -> Vec<Qubit> {
    let block_size = block_size.max(1);
    let mut coin = rng::aux_rng(seed, 0);
    let mut left = [n_per_state, n_per_state];
    let mut order = Vec::with_capacity(2 * n_per_state as usize);
    while left[0] + left[1] > 0 {
        let pair = if coin.random::<bool>() { [Qubit::Zero, Qubit::One] } else { [Qubit::One, Qubit::Zero] };
        for q in pair {
            let slot = &mut left[q as usize];
            let take = block_size.min(*slot);
            *slot -= take;
            order.extend(std::iter::repeat_n(q, take as usize));
        }
    }
    order
}

struct Phases<'a> {
    app: &'a Apparatus,
    params: &'a ProtocolParams,
    models: &'a PhaseModels,
}

impl Phases<'_> {
    fn cooling_counts(&self, state: Manifold, rng: &mut SimRng) -> (Manifold, u64) {
        let c = &self.app.counts;
        let w = c.doppler_window;
        let (end, dwell) = walk_ground_dwell(&self.models.detect, state, w, w, rng);
        (end, sample_poisson(c.cooling_rate * dwell + c.dark_rate * w, rng))
    }

    /// Accepted pre-check counts and number of restarts.
    fn pre_check(&self, th: Option<&Thresholds>, index: u64, rng: &mut SimRng) -> Result<(u64, u32)> {
        let c = &self.app.counts;
        let mut restarts = 0;
        loop {
            let hot = self.params.p_hot > 0.0 && rng.random::<f64>() < self.params.p_hot;
            let rate = if hot { HOT_FLUORESCENCE * c.cooling_rate } else { c.cooling_rate };
            let counts = sample_poisson((rate + c.dark_rate) * c.doppler_window, rng);
            match th {
                Some(th) if counts < th.doppler_cutoff => {
                    restarts += 1;
                    if restarts > MAX_RESTARTS {
                        return Err(Error::RestartLimit { shot: index, limit: MAX_RESTARTS });
                    }
                }
                _ => return Ok((counts, restarts)),
            }
        }
    }

    /// Everything after the pre-check: preparation, shelving, detection,
    /// deshelving and the post-check.
    fn body(&self, prepared: Qubit, rng: &mut SimRng) -> (u64, u64, Manifold) {
        let p = self.params;
        let c = &self.app.counts;

        let mut state =
            if p.eps_prep0 > 0.0 && rng.random::<f64>() < p.eps_prep0 { Manifold::SF1 } else { Manifold::SF0 };
        if prepared == Qubit::One && !(p.eps_pi > 0.0 && rng.random::<f64>() < p.eps_pi) {
            state = if state == Manifold::SF0 { Manifold::SF1 } else { Manifold::SF0 };
        }

        // Storage event time measured from the start of shelving.
        let span = p.shelve_time + p.detect_time + p.deshelve_time;
        let storage = if p.p_storage > 0.0 && rng.random::<f64>() < p.p_storage {
            let at = rng.random::<f64>() * span;
            let transient = rng.random::<f64>() < p.storage_recovery;
            Some((at, transient))
        } else {
            None
        };
        let lost_at = storage.filter(|s| !s.1).map(|s| s.0).unwrap_or(f64::INFINITY);
        let dark_from = storage.map(|s| s.0).unwrap_or(f64::INFINITY);

        // Shelving.
        if lost_at < p.shelve_time {
            walk(&self.models.shelve, state, lost_at, rng, |_| {});
            state = Manifold::Lost;
        } else {
            state = walk(&self.models.shelve, state, p.shelve_time, rng, |_| {});
        }

        // Detection: fluorescence only while in S and before any storage event.
        let bright_until = (dark_from - p.shelve_time).clamp(0.0, p.detect_time);
        let detect_duration = (lost_at - p.shelve_time).clamp(0.0, p.detect_time);
        let (s, dwell) = walk_ground_dwell(&self.models.detect, state, detect_duration, bright_until, rng);
        state = if lost_at < p.shelve_time + p.detect_time { Manifold::Lost } else { s };
        let detect_counts = sample_poisson(c.bright_rate * dwell + c.dark_rate * p.detect_time, rng);

        // Deshelving.
        let t0 = p.shelve_time + p.detect_time;
        if lost_at < span {
            if state != Manifold::Lost {
                walk(&self.models.deshelve, state, lost_at - t0, rng, |_| {});
            }
            state = Manifold::Lost;
        } else {
            state = walk(&self.models.deshelve, state, p.deshelve_time, rng, |_| {});
        }

        let (end, post) = self.cooling_counts(state, rng);
        (detect_counts, post, end)
    }
}

/// Simulates the shot with global index `index` from its own seed stream.
pub fn simulate_shot(
    app: &Apparatus,
    params: &ProtocolParams,
    thresholds: &Thresholds,
    prepared: Qubit,
    base_seed: u64,
    index: u64,
) -> Result<ShotRecord> {
    app.check_protocol(params)?;
    let models = app.phase_models(params.repump_scheme)?;
    shot(&Phases { app, params, models: &models }, Some(thresholds), prepared, base_seed, index)
}

fn shot(ph: &Phases, th: Option<&Thresholds>, prepared: Qubit, base_seed: u64, index: u64) -> Result<ShotRecord> {
    let mut rng = rng::shot_rng(base_seed, index);
    let (pre, restarts) = ph.pre_check(th, index, &mut rng)?;
    let (detect_counts, post, final_manifold) = ph.body(prepared, &mut rng);
    let (detect_cutoff, doppler_cutoff) = th.map(|t| (t.detect_cutoff, t.doppler_cutoff)).unwrap_or((1, 1));
    Ok(ShotRecord {
        index,
        prepared,
        pre_doppler_counts: pre,
        detect_counts,
        post_doppler_counts: post,
        storage_flagged: post < doppler_cutoff,
        restarted: restarts > 0,
        restarts,
        classified: if detect_counts < detect_cutoff { Qubit::One } else { Qubit::Zero },
        final_manifold,
    })
}

/// Raw calibration histograms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationData {
    pub seed: u64,
    pub n_per_state: u64,
    pub zero: Histogram,
    pub one: Histogram,
    pub doppler: Histogram,
}

impl CalibrationData {
    /// Shot seeds consumed by the calibration run.
    pub fn seed_range(&self) -> Range<u64> {
        self.seed..self.seed.saturating_add(2 * self.n_per_state)
    }
}

/// Runs interleaved calibration shots with no restart logic, since no
/// thresholds exist yet.
pub fn run_calibration(
    app: &Apparatus,
    params: &ProtocolParams,
    n_per_state: u64,
    seed: u64,
) -> Result<CalibrationData> {
    if n_per_state == 0 {
        return Err(Error::InvalidParameter("calibration needs n_per_state >= 1".into()));
    }
    app.check_protocol(params)?;
    let models = app.phase_models(params.repump_scheme)?;
    let ph = Phases { app, params, models: &models };
    let order = interleaving_order(n_per_state, params.block_size, seed);
    let records: Vec<ShotRecord> =
        order.par_iter().enumerate().map(|(i, &q)| shot(&ph, None, q, seed, i as u64)).collect::<Result<_>>()?;
    let mut zero = Histogram::new("zero");
    let mut one = Histogram::new("one");
    let mut doppler = Histogram::new("doppler");
    for r in &records {
        match r.prepared {
            Qubit::Zero => zero.add(r.detect_counts, 1),
            Qubit::One => one.add(r.detect_counts, 1),
        }
        doppler.add(r.pre_doppler_counts, 1);
    }
    Ok(CalibrationData { seed, n_per_state, zero, one, doppler })
}

fn median(h: &Histogram) -> f64 {
    let mut seen = 0;
    for (&c, &f) in &h.frequencies {
        seen += f;
        if 2 * seen >= h.total {
            return c as f64;
        }
    }
    0.0
}

fn mean_where(h: &Histogram, keep: impl Fn(u64) -> bool) -> f64 {
    let (mut s, mut n) = (0.0, 0u64);
    for (&c, &f) in &h.frequencies {
        if keep(c) {
            s += c as f64 * f as f64;
            n += f;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Thresholds fixed from calibration data, stamped with a digest of their
/// contents so later tampering is detectable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenThresholds {
    pub thresholds: Thresholds,
    /// Estimated means behind the cutoffs.
    pub dark_mean: f64,
    pub bright_mean: f64,
    pub doppler_mean: f64,
    pub calibration_seeds: Range<u64>,
    pub sha256: String,
}

impl FrozenThresholds {
    fn digest_of(
        thresholds: &Thresholds,
        dark_mean: f64,
        bright_mean: f64,
        doppler_mean: f64,
        seeds: &Range<u64>,
    ) -> String {
        // Fixed field order; floats through their bit patterns.
        let canonical = format!(
            "detect_cutoff={};doppler_cutoff={};detect_bound={}e{};doppler_bound={}e{};dark={:016x};bright={:016x};doppler={:016x};seeds={}..{}",
            thresholds.detect_cutoff,
            thresholds.doppler_cutoff,
            thresholds.detect_error_bound.mantissa,
            thresholds.detect_error_bound.exponent,
            thresholds.doppler_error_bound.mantissa,
            thresholds.doppler_error_bound.exponent,
            dark_mean.to_bits(),
            bright_mean.to_bits(),
            doppler_mean.to_bits(),
            seeds.start,
            seeds.end
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn verify(&self) -> Result<()> {
        let computed = Self::digest_of(
            &self.thresholds,
            self.dark_mean,
            self.bright_mean,
            self.doppler_mean,
            &self.calibration_seeds,
        );
        if computed != self.sha256 {
            return Err(Error::ThresholdDigest { stored: self.sha256.clone(), computed });
        }
        self.thresholds.validate()
    }
}

/// Derives cutoffs from calibration histograms only.
///
/// Means are estimated robustly: the bright level from the |0⟩ median, the
/// dark level from |1⟩ counts below half of it, and the Doppler level from
/// pre-check counts above half of their median (which drops hot-ion attempts).
pub fn freeze_thresholds(cal: &CalibrationData, detect_bound: Bound, doppler_bound: Bound) -> Result<FrozenThresholds> {
    let bright_mean = median(&cal.zero);
    let dark_mean = mean_where(&cal.one, |c| (c as f64) < 0.5 * bright_mean);
    let dop_median = median(&cal.doppler);
    let doppler_mean = mean_where(&cal.doppler, |c| (c as f64) >= 0.5 * dop_median);
    let thresholds = Thresholds {
        detect_cutoff: choose_detection_threshold(dark_mean, detect_bound.value())?,
        doppler_cutoff: choose_doppler_threshold(doppler_mean, doppler_bound.value())?,
        detect_error_bound: detect_bound,
        doppler_error_bound: doppler_bound,
    };
    thresholds.validate()?;
    let seeds = cal.seed_range();
    let sha256 = FrozenThresholds::digest_of(&thresholds, dark_mean, bright_mean, doppler_mean, &seeds);
    Ok(FrozenThresholds { thresholds, dark_mean, bright_mean, doppler_mean, calibration_seeds: seeds, sha256 })
}

impl FrozenThresholds {
    pub fn freeze(cal: &CalibrationData) -> Result<Self> {
        freeze_thresholds(cal, DEFAULT_DETECT_BOUND, DEFAULT_DOPPLER_BOUND)
    }
}

/// Runs `n_per_state` recorded shots per state under frozen thresholds.
///
/// Shot `i` draws from seed `seed + i`. The range of seeds must not overlap
/// the calibration range baked into `frozen`.
pub fn run_spam_campaign(
    app: &Apparatus,
    params: &ProtocolParams,
    frozen: &FrozenThresholds,
    n_per_state: u64,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    if n_per_state == 0 {
        return Err(Error::InvalidParameter("n_per_state must be >= 1".into()));
    }
    app.check_protocol(params)?;
    frozen.verify()?;
    let final_range = seed..seed.saturating_add(2 * n_per_state);
    let cal = &frozen.calibration_seeds;
    if final_range.start < cal.end && cal.start < final_range.end {
        return Err(Error::CalibrationReuse { calibration: cal.clone(), final_range });
    }
    let models = app.phase_models(params.repump_scheme)?;
    let ph = Phases { app, params, models: &models };
    let th = frozen.thresholds;
    interleaving_order(n_per_state, params.block_size, seed)
        .par_iter()
        .enumerate()
        .map(|(i, &q)| shot(&ph, Some(&th), q, seed, i as u64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub shots: u64,
    pub flagged: u64,
    pub restarts: u64,
    /// Misclassified shots that were not flagged.
    pub unflagged_errors: u64,
    /// Misclassified shots among the flagged ones (informational).
    pub flagged_errors: u64,
    pub inaccuracy: BinomialEstimate,
    pub infidelity: BinomialEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub zero: StateSummary,
    pub one: StateSummary,
    /// Pooled over both prepared states, flagged shots excluded.
    pub avg_inaccuracy: BinomialEstimate,
    pub avg_inaccuracy_db: f64,
    /// Pooled over both prepared states, flagged shots counted as failures.
    pub avg_infidelity: BinomialEstimate,
    pub avg_infidelity_db: f64,
}

fn state_summary(records: &[ShotRecord], q: Qubit, z: f64) -> Result<StateSummary> {
    let mut s = (0u64, 0u64, 0u64, 0u64, 0u64);
    for r in records.iter().filter(|r| r.prepared == q) {
        s.0 += 1;
        s.2 += r.restarts as u64;
        if r.storage_flagged {
            s.1 += 1;
            s.4 += r.is_error() as u64;
        } else {
            s.3 += r.is_error() as u64;
        }
    }
    let (shots, flagged, restarts, unflagged_errors, flagged_errors) = s;
    if shots == 0 {
        return Err(Error::InvalidParameter(format!("no shots prepared in {q}")));
    }
    Ok(StateSummary {
        shots,
        flagged,
        restarts,
        unflagged_errors,
        flagged_errors,
        inaccuracy: wilson_interval(unflagged_errors, (shots - flagged).max(1), z)?,
        infidelity: wilson_interval(unflagged_errors + flagged, shots, z)?,
    })
}

impl CampaignSummary {
    /// Wilson intervals at `z` sigma.
    pub fn from_records(records: &[ShotRecord], z: f64) -> Result<Self> {
        let zero = state_summary(records, Qubit::Zero, z)?;
        let one = state_summary(records, Qubit::One, z)?;
        let kept = zero.shots - zero.flagged + one.shots - one.flagged;
        let avg_inaccuracy = wilson_interval(zero.unflagged_errors + one.unflagged_errors, kept.max(1), z)?;
        let avg_infidelity = wilson_interval(
            zero.unflagged_errors + one.unflagged_errors + zero.flagged + one.flagged,
            zero.shots + one.shots,
            z,
        )?;
        Ok(CampaignSummary {
            avg_inaccuracy_db: to_decibels(avg_inaccuracy.p_hat),
            avg_infidelity_db: to_decibels(avg_infidelity.p_hat),
            zero,
            one,
            avg_inaccuracy,
            avg_infidelity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::CountModel;

    fn default_thresholds() -> Thresholds {
        Thresholds::from_model(&CountModel::default()).unwrap()
    }

    #[test]
    fn interleaving_is_blocked_balanced_and_seeded() {
        let o = interleaving_order(120, 50, 7);
        assert_eq!(o.len(), 240);
        assert_eq!(o.iter().filter(|q| **q == Qubit::Zero).count(), 120);
        // Runs are whole blocks except the final partial pair.
        let mut runs = vec![1];
        for w in o.windows(2) {
            if w[0] == w[1] {
                *runs.last_mut().unwrap() += 1;
            } else {
                runs.push(1);
            }
        }
        assert!(runs.iter().all(|&r| r % 50 == 0 || r == 20 || r == 70 || r == 40), "{runs:?}");
        assert_eq!(o, interleaving_order(120, 50, 7));
        let firsts: std::collections::HashSet<_> = (0..20).map(|s| interleaving_order(10, 5, s)[0]).collect();
        assert_eq!(firsts.len(), 2);
    }

    #[test]
    fn ideal_one_shots_read_dark() {
        let mut app = Apparatus::default();
        app.constants.a_m1 = 0.0;
        let params = ProtocolParams { shelve_time: 2.0, ..ProtocolParams::ideal() };
        let th = default_thresholds();
        for i in 0..200 {
            let r = simulate_shot(&app, &params, &th, Qubit::One, 11, i).unwrap();
            assert_eq!(r.classified, Qubit::One);
            assert!(r.final_manifold.is_ground());
            assert!(r.is_consistent(&th));
        }
    }

    #[test]
    fn certain_storage_loss_is_flagged() {
        let app = Apparatus::default();
        let params = ProtocolParams { p_storage: 0.999_999, storage_recovery: 0.0, ..ProtocolParams::ideal() };
        let th = default_thresholds();
        for i in 0..50 {
            let r = simulate_shot(&app, &params, &th, Qubit::Zero, 3, i).unwrap();
            assert!(r.storage_flagged);
            assert_eq!(r.final_manifold, Manifold::Lost);
        }
    }

    #[test]
    fn recovered_storage_darkens_zero_without_flag() {
        let app = Apparatus::default();
        let params = ProtocolParams {
            p_storage: 0.999_999,
            storage_recovery: 1.0,
            deshelve_time: 0.0,
            shelve_time: 0.2,
            ..ProtocolParams::ideal()
        };
        let th = default_thresholds();
        let recs: Vec<_> = (0..400).map(|i| simulate_shot(&app, &params, &th, Qubit::Zero, 5, i).unwrap()).collect();
        assert!(recs.iter().all(|r| !r.storage_flagged));
        let errs = recs.iter().filter(|r| r.is_error()).count() as f64 / 400.0;
        // Event before the end of detection, with margin for partial windows.
        assert!(errs > 0.9 && errs <= 1.0, "{errs}");
    }

    #[test]
    fn hot_ions_restart_without_consuming_shots() {
        let app = Apparatus::default();
        let params = ProtocolParams { p_hot: 0.5, ..ProtocolParams::ideal() };
        let th = default_thresholds();
        let recs: Vec<_> = (0..200).map(|i| simulate_shot(&app, &params, &th, Qubit::Zero, 9, i).unwrap()).collect();
        let restarts: u32 = recs.iter().map(|r| r.restarts).sum();
        assert!(restarts > 100);
        assert!(recs.iter().all(|r| r.pre_doppler_counts >= th.doppler_cutoff));
    }

    #[test]
    fn frozen_thresholds_detect_tampering_and_reuse() {
        let app = Apparatus::default();
        let params = ProtocolParams::default();
        let cal = run_calibration(&app, &params, 300, 1_000).unwrap();
        let frozen = FrozenThresholds::freeze(&cal).unwrap();
        assert_eq!(frozen.thresholds.detect_cutoff, 5);
        frozen.verify().unwrap();
        let mut bad = frozen.clone();
        bad.thresholds.detect_cutoff = 3;
        assert!(matches!(bad.verify(), Err(Error::ThresholdDigest { .. })));
        let overlap = run_spam_campaign(&app, &params, &frozen, 10, 1_500);
        assert!(matches!(overlap, Err(Error::CalibrationReuse { .. })));
        let recs = run_spam_campaign(&app, &params, &frozen, 10, 1_600).unwrap();
        assert_eq!(recs.len(), 20);
    }

    #[test]
    fn summary_bookkeeping() {
        let th = default_thresholds();
        let mk = |i: u64, prepared, detect, post| {
            let classified = if detect < th.detect_cutoff { Qubit::One } else { Qubit::Zero };
            ShotRecord {
                index: i,
                prepared,
                pre_doppler_counts: 100,
                detect_counts: detect,
                post_doppler_counts: post,
                storage_flagged: post < th.doppler_cutoff,
                restarted: false,
                restarts: 0,
                classified,
                final_manifold: Manifold::SF0,
            }
        };
        let recs = vec![
            mk(0, Qubit::Zero, 60, 100),
            mk(1, Qubit::Zero, 0, 100),
            mk(2, Qubit::Zero, 0, 0),
            mk(3, Qubit::One, 0, 100),
            mk(4, Qubit::One, 60, 100),
            mk(5, Qubit::One, 0, 100),
        ];
        let s = CampaignSummary::from_records(&recs, 1.0).unwrap();
        assert_eq!(s.zero.unflagged_errors, 1);
        assert_eq!(s.zero.flagged, 1);
        assert_eq!(s.zero.flagged_errors, 1);
        assert_eq!(s.avg_inaccuracy.k, 2);
        assert_eq!(s.avg_inaccuracy.n, 5);
        assert_eq!(s.avg_infidelity.k, 3);
        assert_eq!(s.avg_infidelity.n, 6);
    }
}
