//! Cross-module invariants, checked over random inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use shelving::analysis::{assemble_budget, wilson_interval, Applies, BudgetRow};
use shelving::atomic::{build_rate_model, AtomicConstants, LaserConfig, Manifold, RepumpScheme};
use shelving::dynamics::{
    evolve_ode, sample_trajectory, shelving_error_analytic, shelving_error_asymptote, shelving_error_transient,
    PopulationVector,
};
use shelving::photon::{choose_detection_threshold, choose_doppler_threshold, Bound};
use shelving::protocol::{
    freeze_thresholds, run_calibration, run_spam_campaign, Apparatus, CampaignSummary, ProtocolParams,
};

fn laser_config() -> impl Strategy<Value = LaserConfig> {
    (any::<[bool; 5]>(), any::<bool>(), 1e2f64..1e5).prop_map(|(on, use_861, rate)| LaserConfig {
        on_411: on[0],
        on_935: on[1] && !use_861,
        on_861: on[1] && use_861,
        on_deshelve_760: on[2],
        on_976: on[3],
        on_cooling: on[4],
        pump_rate_411: rate,
        ..LaserConfig::dark()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ode_keeps_a_probability_vector(cfg in laser_config(), start in 0usize..7, t in 0.0f64..0.3) {
        let model = build_rate_model(&cfg, &AtomicConstants::default()).unwrap();
        let p = evolve_ode(&PopulationVector::pure(Manifold::ALL[start]), &model, t).unwrap();
        prop_assert!((p.total() - 1.0).abs() < 1e-9);
        prop_assert!(p.as_array().iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn trajectories_follow_allowed_transitions(cfg in laser_config(), start in 0usize..6, seed: u64) {
        let model = build_rate_model(&cfg, &AtomicConstants::default()).unwrap();
        let init = Manifold::ALL[start];
        let tr = sample_trajectory(init, &model, 0.01, seed).unwrap();
        prop_assert!(tr.is_consistent(init));
        for j in &tr.events {
            prop_assert!(model.rate(j.from, j.to) > 0.0);
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1u64..10_000_000, frac in 0.0f64..=1.0, z in 0.1f64..5.0) {
        let k = ((n as f64) * frac).round() as u64;
        let w = wilson_interval(k, n, z).unwrap();
        prop_assert!(0.0 <= w.ci_low && w.ci_low <= w.p_hat && w.p_hat <= w.ci_high && w.ci_high <= 1.0);
        let wider = wilson_interval(k, n, z * 1.5).unwrap();
        prop_assert!(wider.ci_low <= w.ci_low + 1e-15 && wider.ci_high >= w.ci_high - 1e-15);
    }

    #[test]
    fn thresholds_move_the_right_way(mean in 0.001f64..50.0, exp in 2i32..10) {
        let b = 10f64.powi(-exp);
        let d = choose_detection_threshold(mean, b).unwrap();
        prop_assert!(choose_detection_threshold(mean * 1.5, b).unwrap() >= d);
        prop_assert!(choose_detection_threshold(mean, b / 10.0).unwrap() >= d);
        if let Ok(c) = choose_doppler_threshold(mean * 20.0, b) {
            prop_assert!(choose_doppler_threshold(mean * 30.0, b).unwrap() >= c);
        }
    }

    #[test]
    fn budget_infidelity_never_below_inaccuracy(
        rows in prop::collection::vec((0u8..3, any::<bool>(), 0.0f64..1e-3), 1..8)
    ) {
        let rows: Vec<BudgetRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (a, flagged, v))| {
                let applies = [Applies::Both, Applies::Zero, Applies::One][a as usize];
                let mut r = BudgetRow::new(&format!("r{i}"), applies, v, 0.0, 0.0);
                if flagged {
                    r.kind = shelving::analysis::RowKind::FlaggedStorage;
                }
                r
            })
            .collect();
        let b = assemble_budget(rows).unwrap();
        prop_assert!(b.predicted_avg_infidelity >= b.predicted_avg_inaccuracy - 1e-18);
    }

    #[test]
    fn closed_form_is_its_two_terms(t in 0.0f64..1.0, zeta in 0.5f64..0.99, tau in 1e-3f64..2e-2) {
        let c = AtomicConstants { zeta, tau_d: tau, ..AtomicConstants::default() };
        let e = shelving_error_analytic(t, &c).unwrap();
        prop_assert!((e - shelving_error_asymptote(&c) - shelving_error_transient(t, &c)).abs() <= 1e-15 * e.max(1.0));
    }
}

#[test]
fn campaign_infidelity_bounds_inaccuracy() {
    let app = Apparatus::default();
    for params in [ProtocolParams::default(), ProtocolParams { p_storage: 0.0, p_hot: 0.0, ..Default::default() }] {
        let cal = run_calibration(&app, &params, 2_000, 1 << 40).unwrap();
        let frozen = freeze_thresholds(&cal, Bound::new(1, -7), Bound::new(1, -6)).unwrap();
        let recs = run_spam_campaign(&app, &params, &frozen, 5_000, 5).unwrap();
        let s = CampaignSummary::from_records(&recs, 1.0).unwrap();
        assert!(s.avg_infidelity.p_hat >= s.avg_inaccuracy.p_hat);
        if params.p_storage == 0.0 {
            assert_eq!(s.zero.flagged + s.one.flagged, 0);
            assert_eq!(s.avg_infidelity.p_hat, s.avg_inaccuracy.p_hat);
        }
        for r in &recs {
            assert!(r.is_consistent(&frozen.thresholds), "{r:?}");
        }
    }
}

/// With the 935 nm repump and a perfect π pulse, the M1 asymptote takes
/// over from the transient term between 150 and 160 ms and stays on top.
#[test]
fn m1_term_dominates_long_shelving() {
    let c = AtomicConstants::default();
    let a = shelving_error_asymptote(&c);
    let crossover = 2.0 * c.tau_d / c.zeta * ((1.0 - c.zeta / 2.0) / a).ln();
    assert!((0.150..0.160).contains(&crossover), "{crossover}");
    for ms in [160, 175, 200, 300, 1000] {
        let t = ms as f64 * 1e-3;
        assert!(a > shelving_error_transient(t, &c), "{ms} ms");
    }
    assert!(a < shelving_error_transient(0.15, &c));
}

#[test]
fn wilson_one_sigma_coverage_near_nominal() {
    let (p, n) = (1e-4, 100_000u64);
    let d = Binomial::new(n, p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reps = 10_000;
    let covered = (0..reps).filter(|_| wilson_interval(d.sample(&mut rng), n, 1.0).unwrap().contains(p)).count();
    let frac = covered as f64 / reps as f64;
    assert!((frac - 0.6827).abs() <= 0.05, "{frac}");
}

#[test]
fn scan_schemes_diverge_only_through_the_asymptote() {
    let app = Apparatus::default();
    for t in [0.1, 0.2, 0.3] {
        let e935 = shelving::protocol::relaxed_shelving_error(&app, RepumpScheme::Nm935, t).unwrap();
        let e861 = shelving::protocol::relaxed_shelving_error(&app, RepumpScheme::Nm861, t).unwrap();
        let gap = e935 - e861;
        assert!((gap / shelving_error_asymptote(&app.constants) - 1.0).abs() < 0.15, "{t}: {gap}");
    }
}
