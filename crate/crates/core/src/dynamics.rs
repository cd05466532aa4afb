//! Population dynamics on the manifold state space.
//!
//! Three routes to the same physics: the closed-form shelving-error curve,
//! deterministic integration of the rate equations, and Gillespie sampling of
//! single-ion trajectories. Tests cross-check all three against each other.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicConstants, Manifold, RateModel, MANIFOLD_COUNT};
use crate::error::{Error, Result};
use crate::rng;

/// Probability per manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationVector([f64; MANIFOLD_COUNT]);

impl PopulationVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(p: [f64; MANIFOLD_COUNT]) -> Result<Self> {
        if let Some(x) = p.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidPopulation(format!("negative or NaN entry {x}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidPopulation(format!("entries sum to {sum}")));
        }
        Ok(PopulationVector(p))
    }

    pub fn pure(m: Manifold) -> Self {
        let mut p = [0.0; MANIFOLD_COUNT];
        p[m.index()] = 1.0;
        PopulationVector(p)
    }

    pub fn get(&self, m: Manifold) -> f64 {
        self.0[m.index()]
    }

    pub fn as_array(&self) -> &[f64; MANIFOLD_COUNT] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// S_F0 + S_F1: the population that fluoresces under cooling light.
    pub fn ground(&self) -> f64 {
        self.get(Manifold::SF0) + self.get(Manifold::SF1)
    }
}

/// Long-time limit of the shelving error: τ_D·A_M1/(3ζ).
pub fn shelving_error_asymptote(c: &AtomicConstants) -> f64 {
    c.tau_d * c.a_m1 / (3.0 * c.zeta)
}

/// Finite-illumination term (1 − ζ/2)·exp(−tζ/(2τ_D)).
pub fn shelving_error_transient(t: f64, c: &AtomicConstants) -> f64 {
    (1.0 - c.zeta / 2.0) * (-t * c.zeta / (2.0 * c.tau_d)).exp()
}

/// Closed-form shelving error after illumination time `t` (s).
///
/// Valid for τ_D·A_M1 ≪ 1 and assumes all D-state population has decayed
/// before the fluorescence query.
pub fn shelving_error_analytic(t: f64, c: &AtomicConstants) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("shelving time must be >= 0, got {t}")));
    }
    c.validate()?;
    Ok(shelving_error_asymptote(c) + shelving_error_transient(t, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-14, max_steps: 5_000_000, min_step: 1e-15 }
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes c_i are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

type State = [f64; MANIFOLD_COUNT];

fn derivative(model: &RateModel, p: &State) -> State {
    let q = model.rates();
    let mut dp = [0.0; MANIFOLD_COUNT];
    for i in 0..MANIFOLD_COUNT {
        if p[i] == 0.0 {
            continue;
        }
        let out = p[i] * model.exit_rate(Manifold::ALL[i]);
        dp[i] -= out;
        for j in 0..MANIFOLD_COUNT {
            dp[j] += p[i] * q[i][j];
        }
    }
    dp
}

/// Integrates dp/dt = p·Q from `init` for `t` seconds.
pub fn evolve_ode(init: &PopulationVector, model: &RateModel, t: f64) -> Result<PopulationVector> {
    evolve_ode_with(init, model, t, &OdeOptions::default())
}

pub fn evolve_ode_with(
    init: &PopulationVector,
    model: &RateModel,
    t: f64,
    opts: &OdeOptions,
) -> Result<PopulationVector> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("evolution time must be >= 0, got {t}")));
    }
    let mut y = init.0;
    if t == 0.0 {
        return Ok(*init);
    }
    let fastest = model.rates().iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let mut h = if fastest > 0.0 { (0.1 / fastest).min(t) } else { t };
    let mut now = 0.0;
    let mut k = [[0.0; MANIFOLD_COUNT]; 7];
    k[0] = derivative(model, &y);
    let mut steps = 0usize;

    while now < t {
        if steps >= opts.max_steps {
            return Err(Error::Integration { time: now, reason: "step budget exhausted".into() });
        }
        steps += 1;
        let last = now + h >= t;
        if last {
            h = t - now;
        }
        for s in 1..7 {
            let mut ys = y;
            for (r, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    for j in 0..MANIFOLD_COUNT {
                        ys[j] += h * a * k[r][j];
                    }
                }
            }
            k[s] = derivative(model, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for j in 0..MANIFOLD_COUNT {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][j];
                d4 += B4[s] * k[s][j];
            }
            y5[j] += h * d5;
            let scale = opts.atol + opts.rtol * y[j].abs().max(y5[j].abs());
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integration { time: now, reason: "non-finite error estimate".into() });
        }
        if err <= 1.0 {
            now = if last { t } else { now + h };
            y = y5;
            // FSAL: last stage is the derivative at the new point.
            k[0] = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < opts.min_step && now < t {
            return Err(Error::Integration { time: now, reason: format!("step size {h:e} underflow") });
        }
    }

    for x in y.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(Error::Integration { time: t, reason: format!("population went negative ({x:e})") });
            }
            *x = 0.0;
        }
    }
    PopulationVector::new(y).map_err(|e| Error::Integration { time: t, reason: e.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub from: Manifold,
    pub to: Manifold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub events: Vec<Jump>,
    pub final_state: Manifold,
    pub duration: f64,
}

/// Runs the Gillespie direct method from `init` for `duration` seconds,
/// reporting each jump to `on_jump`. Returns the state at `duration`.
pub fn walk<R: Rng + ?Sized>(
    model: &RateModel,
    init: Manifold,
    duration: f64,
    rng: &mut R,
    mut on_jump: impl FnMut(Jump),
) -> Manifold {
    let rates = model.rates();
    let mut state = init;
    let mut now = 0.0;
    loop {
        let exit = model.exit_rate(state);
        if exit <= 0.0 {
            return state;
        }
        // Inverse CDF of the exponential on an open-interval draw, so waits are > 0.
        let u: f64 = rng.sample(Open01);
        now += -u.ln() / exit;
        if now > duration {
            return state;
        }
        let row = &rates[state.index()];
        let target = rng.random::<f64>() * exit;
        let mut acc = 0.0;
        let mut next = None;
        for (j, r) in row.iter().enumerate() {
            if *r > 0.0 {
                acc += r;
                next = Some(j);
                if target < acc {
                    break;
                }
            }
        }
        let to = Manifold::ALL[next.expect("positive exit rate implies an edge")];
        on_jump(Jump { time: now, from: state, to });
        state = to;
    }
}

/// Walks for `duration` and returns the final state together with the time
/// spent in the ground manifolds during `[0, min(duration, bright_until))`.
pub fn walk_ground_dwell<R: Rng + ?Sized>(
    model: &RateModel,
    init: Manifold,
    duration: f64,
    bright_until: f64,
    rng: &mut R,
) -> (Manifold, f64) {
    let horizon = duration.min(bright_until).max(0.0);
    let mut dwell = 0.0;
    let mut last_time = 0.0;
    let mut last_state = init;
    let end = walk(model, init, duration, rng, |j| {
        if last_state.is_ground() && last_time < horizon {
            dwell += j.time.min(horizon) - last_time;
        }
        last_time = j.time;
        last_state = j.to;
    });
    if last_state.is_ground() && last_time < horizon {
        dwell += horizon - last_time;
    }
    (end, dwell)
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(init: Manifold, model: &RateModel, t: f64, rng: &mut R) -> Trajectory {
    let mut events = Vec::new();
    let final_state = walk(model, init, t, rng, |j| events.push(j));
    Trajectory { events, final_state, duration: t }
}

/// Samples one trajectory; identical seeds give identical trajectories.
pub fn sample_trajectory(init: Manifold, model: &RateModel, t: f64, seed: u64) -> Result<Trajectory> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("trajectory duration must be >= 0, got {t}")));
    }
    Ok(sample_trajectory_with(init, model, t, &mut rng::seeded(seed)))
}

impl Trajectory {
    /// Times strictly increasing within the duration and each jump starting
    /// where the previous one ended.
    pub fn is_consistent(&self, init: Manifold) -> bool {
        let mut state = init;
        let mut prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if e.from != state || e.time > self.duration || (i > 0 && e.time <= prev) || e.time <= 0.0 {
                return false;
            }
            prev = e.time;
            state = e.to;
        }
        state == self.final_state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_rate_model, LaserConfig, RepumpScheme};
    use Manifold::*;

    fn defaults() -> AtomicConstants {
        AtomicConstants::default()
    }

    #[test]
    fn analytic_asymptote_and_transient() {
        let c = defaults();
        let asym = shelving_error_analytic(10.0, &c).unwrap();
        assert!((asym / 8.2e-5 - 1.0).abs() < 0.01, "{asym}");
        let tr = shelving_error_transient(0.2, &c);
        assert!((tr / 6e-6 - 1.0).abs() < 0.1, "{tr}");
        let zero = c.with_a_m1(0.0);
        assert!(shelving_error_analytic(10.0, &zero).unwrap() < 1e-200);
        assert!(shelving_error_analytic(-1.0, &c).is_err());
    }

    #[test]
    fn analytic_is_strictly_decreasing() {
        let c = defaults();
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let v = shelving_error_analytic(i as f64 * 1e-3, &c).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ode_zero_time_is_identity() {
        let m = build_rate_model(&LaserConfig::default(), &defaults()).unwrap();
        let p = PopulationVector::pure(SF1);
        assert_eq!(evolve_ode(&p, &m, 0.0).unwrap(), p);
    }

    #[test]
    fn ode_two_state_decay_matches_closed_form() {
        let c = defaults();
        let m = build_rate_model(&LaserConfig::dark(), &c).unwrap();
        let p = evolve_ode(&PopulationVector::pure(D52), &m, c.tau_d).unwrap();
        let e = (-1.0f64).exp();
        assert!((p.get(D52) - e).abs() < 1e-6);
        assert!((p.get(F72) - c.zeta * (1.0 - e)).abs() < 1e-6);
        assert!((p.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ode_matches_analytic_at_300ms() {
        let c = defaults();
        let m = build_rate_model(&LaserConfig::default(), &c).unwrap();
        let p = evolve_ode(&PopulationVector::pure(SF1), &m, 0.3).unwrap();
        let eq1 = shelving_error_analytic(0.3, &c).unwrap();
        assert!((p.ground() / eq1 - 1.0).abs() < 0.1, "{} vs {eq1}", p.ground());
    }

    #[test]
    fn repump_861_asymptote_vanishes() {
        let c = defaults();
        let m = build_rate_model(&LaserConfig::dark().shelving(RepumpScheme::Nm861), &c).unwrap();
        let p = evolve_ode(&PopulationVector::pure(SF1), &m, 2.0).unwrap();
        assert!(p.ground() < 1e-12, "{}", p.ground());
        assert_eq!(p.get(SF0), 0.0);
    }

    #[test]
    fn ode_budget_exhaustion_is_reported() {
        let m = build_rate_model(&LaserConfig::default(), &defaults()).unwrap();
        let opts = OdeOptions { max_steps: 3, ..Default::default() };
        let r = evolve_ode_with(&PopulationVector::pure(SF1), &m, 1.0, &opts);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }

    #[test]
    fn absorbing_shelf_has_no_events() {
        let m = build_rate_model(&LaserConfig::default(), &defaults()).unwrap();
        for seed in 0..10 {
            let tr = sample_trajectory(F72, &m, 5.0, seed).unwrap();
            assert!(tr.events.is_empty());
            assert_eq!(tr.final_state, F72);
        }
    }

    #[test]
    fn trajectories_are_deterministic_and_consistent() {
        let m = build_rate_model(&LaserConfig::default(), &defaults()).unwrap();
        for seed in 0..20 {
            let a = sample_trajectory(SF1, &m, 0.05, seed).unwrap();
            let b = sample_trajectory(SF1, &m, 0.05, seed).unwrap();
            assert_eq!(a, b);
            assert!(a.is_consistent(SF1));
        }
    }

    #[test]
    fn ground_dwell_counts_only_ground_time() {
        let m = build_rate_model(&LaserConfig::dark().detection(), &defaults()).unwrap();
        let mut r = rng::seeded(1);
        let (end, dwell) = walk_ground_dwell(&m, SF0, 0.017, f64::INFINITY, &mut r);
        assert_eq!(end, SF0);
        assert!((dwell - 0.017).abs() < 1e-15);
        let (_, dwell) = walk_ground_dwell(&m, SF0, 0.017, 0.005, &mut r);
        assert!((dwell - 0.005).abs() < 1e-15);
        let (_, dwell) = walk_ground_dwell(&m, F72, 0.017, f64::INFINITY, &mut r);
        assert_eq!(dwell, 0.0);
    }
}
