//! Shelving error versus illumination time.

use rayon::prelude::*;

use super::Apparatus;
use crate::analysis::ScanPoint;
use crate::atomic::{build_rate_model, Manifold, RepumpScheme};
use crate::dynamics::{evolve_ode, walk, walk_ground_dwell, PopulationVector};
use crate::error::{Error, Result};
use crate::photon::{sample_poisson, Thresholds};
use crate::rng;

/// Dark interval after shelving (411 nm off, 935 nm on) that lets D-state
/// population settle before the ground population is read.
pub const RELAXATION_TIME: f64 = 0.2;

fn check_times(times: &[f64]) -> Result<()> {
    match times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        Some(t) => Err(Error::InvalidParameter(format!("scan time must be >= 0, got {t}"))),
        None => Ok(()),
    }
}

/// Probability that an ion starting in S_F1 is in S after shelving for `t`
/// and then relaxing for [`RELAXATION_TIME`], from the rate equations.
pub fn relaxed_shelving_error(app: &Apparatus, scheme: RepumpScheme, t: f64) -> Result<f64> {
    let shelve = build_rate_model(&app.lasers.shelving(scheme), &app.constants)?;
    let relax = build_rate_model(&app.lasers.relaxation(), &app.constants)?;
    let p = evolve_ode(&PopulationVector::pure(Manifold::SF1), &shelve, t)?;
    Ok(evolve_ode(&p, &relax, RELAXATION_TIME)?.ground())
}

/// Sampled counterpart of [`relaxed_shelving_error`]: the number of `n`
/// trajectories that end in S.
pub fn run_relaxed_trajectories(app: &Apparatus, scheme: RepumpScheme, t: f64, n: u64, seed: u64) -> Result<u64> {
    check_times(&[t])?;
    let shelve = build_rate_model(&app.lasers.shelving(scheme), &app.constants)?;
    let relax = build_rate_model(&app.lasers.relaxation(), &app.constants)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::shot_rng(seed, i);
            let s = walk(&shelve, Manifold::SF1, t, &mut r, |_| {});
            walk(&relax, s, RELAXATION_TIME, &mut r, |_| {}).is_ground() as u64
        })
        .sum())
}

/// Shelving scan: S_F1 preparation (taken as exact), shelving for each time,
/// then an ordinary detection window. A shot is an error when it reads
/// bright. Point `j`, shot `i` uses seed `seed + j·n_per_point + i`.
pub fn run_shelving_scan(
    app: &Apparatus,
    scheme: RepumpScheme,
    thresholds: &Thresholds,
    times: &[f64],
    n_per_point: u64,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    check_times(times)?;
    if n_per_point == 0 {
        return Err(Error::InvalidParameter("n_per_point must be >= 1".into()));
    }
    app.validate()?;
    let shelve = build_rate_model(&app.lasers.shelving(scheme), &app.constants)?;
    let detect = build_rate_model(&app.lasers.detection(), &app.constants)?;
    let c = app.counts;
    let window = c.detect_window;
    times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let base = seed.wrapping_add(j as u64 * n_per_point);
            let errors = (0..n_per_point)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::shot_rng(base, i);
                    let s = walk(&shelve, Manifold::SF1, t, &mut r, |_| {});
                    let (_, dwell) = walk_ground_dwell(&detect, s, window, window, &mut r);
                    let counts = sample_poisson(c.bright_rate * dwell + c.dark_rate * window, &mut r);
                    (counts >= thresholds.detect_cutoff) as u64
                })
                .sum();
            Ok(ScanPoint { time: t, errors, trials: n_per_point })
        })
        .collect()
}
