//! Electronic state space of the shelving scheme and its transition-rate table.
//!
//! Populations are tracked per manifold, not per Zeeman sublevel. The whole
//! ²S₁/₂(F=1) level is one reservoir because a single 411 nm tone addresses all
//! three sublevels. ²D₃/₂ is split by hyperfine level so that a repump which
//! only empties F=2 can be represented.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFOLD_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    /// ²S₁/₂ F=0, holds |0⟩.
    #[serde(rename = "S_F0")]
    SF0,
    /// ²S₁/₂ F=1, holds |1⟩ and the two magnetic sublevels.
    #[serde(rename = "S_F1")]
    SF1,
    #[serde(rename = "D52")]
    D52,
    #[serde(rename = "D32_F1")]
    D32F1,
    #[serde(rename = "D32_F2")]
    D32F2,
    /// ²F°₇/₂, the effectively stable shelf.
    #[serde(rename = "F72")]
    F72,
    /// Ion-storage failure: dark to every laser, seen only by Doppler checks.
    #[serde(rename = "LOST")]
    Lost,
}

impl Manifold {
    pub const ALL: [Manifold; MANIFOLD_COUNT] =
        [Manifold::SF0, Manifold::SF1, Manifold::D52, Manifold::D32F1, Manifold::D32F2, Manifold::F72, Manifold::Lost];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub const fn from_index(i: usize) -> Option<Manifold> {
        if i < MANIFOLD_COUNT {
            Some(Self::ALL[i])
        } else {
            None
        }
    }

    /// Fluoresces under cooling light.
    #[inline]
    pub const fn is_ground(self) -> bool {
        matches!(self, Manifold::SF0 | Manifold::SF1)
    }

    pub const fn tag(self) -> &'static str {
        match self {
            Manifold::SF0 => "S_F0",
            Manifold::SF1 => "S_F1",
            Manifold::D52 => "D52",
            Manifold::D32F1 => "D32_F1",
            Manifold::D32F2 => "D32_F2",
            Manifold::F72 => "F72",
            Manifold::Lost => "LOST",
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Manifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Manifold::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown manifold '{s}'")))
    }
}

/// Physical constants entering the rate model. Angular rates are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicConstants {
    /// Fraction of ²D₅/₂ decays that land in ²F°₇/₂.
    pub zeta: f64,
    /// ²D₅/₂ lifetime (s).
    pub tau_d: f64,
    /// M1 decay rate ²D₅/₂ → ²D₃/₂ (rad/s).
    pub a_m1: f64,
    /// 411 nm linewidth (rad/s). Informational.
    pub gamma_411: f64,
    /// Qubit frequency (rad/s). Informational.
    pub omega_q: f64,
    /// 1/e time for deshelved population to reach the ground state (s).
    pub tau_deshelve: f64,
}

impl AtomicConstants {
    pub const DEFAULT_ZETA: f64 = 0.824;
    pub const DEFAULT_TAU_D: f64 = 7.2e-3;
    /// Theory value, 2π × 4.5 mHz.
    pub const DEFAULT_A_M1: f64 = 2.0 * PI * 4.5e-3;

    /// Upper bound on `a_m1 * tau_d` for the small-leak approximation.
    pub const MAX_LEAK: f64 = 1e-2;

    pub fn with_a_m1(mut self, a_m1: f64) -> Self {
        self.a_m1 = a_m1;
        self
    }

    /// Convenience: set the M1 rate from A/2π in mHz.
    pub fn with_a_m1_mhz(self, mhz: f64) -> Self {
        self.with_a_m1(2.0 * PI * mhz * 1e-3)
    }

    pub fn a_m1_mhz(&self) -> f64 {
        self.a_m1 / (2.0 * PI) * 1e3
    }

    /// Probability per ²D₅/₂ decay of taking the M1 channel.
    pub fn m1_branching(&self) -> f64 {
        self.a_m1 * self.tau_d
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConstants(msg));
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0, 1), got {}", self.zeta));
        }
        if !(self.tau_d > 0.0 && self.tau_d.is_finite()) {
            return bad(format!("tau_d must be positive, got {}", self.tau_d));
        }
        if !(self.a_m1 >= 0.0 && self.a_m1.is_finite()) {
            return bad(format!("a_m1 must be non-negative, got {}", self.a_m1));
        }
        if self.m1_branching() >= Self::MAX_LEAK {
            return bad(format!(
                "a_m1 * tau_d = {:e} violates the small-leak bound {:e}",
                self.m1_branching(),
                Self::MAX_LEAK
            ));
        }
        if self.zeta + self.m1_branching() > 1.0 {
            return bad("zeta + a_m1 * tau_d exceeds 1".into());
        }
        if !(self.tau_deshelve > 0.0 && self.tau_deshelve.is_finite()) {
            return bad(format!("tau_deshelve must be positive, got {}", self.tau_deshelve));
        }
        if self.gamma_411 < 0.0 || self.omega_q < 0.0 {
            return bad("linewidth and qubit frequency must be non-negative".into());
        }
        Ok(())
    }
}

impl Default for AtomicConstants {
    fn default() -> Self {
        AtomicConstants {
            zeta: Self::DEFAULT_ZETA,
            tau_d: Self::DEFAULT_TAU_D,
            a_m1: Self::DEFAULT_A_M1,
            gamma_411: 2.0 * PI * 22.0,
            omega_q: 2.0 * PI * 12.64e9,
            tau_deshelve: 350e-6,
        }
    }
}

/// One-sigma uncertainties on the constants that are propagated into fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantUncertainties {
    pub zeta: f64,
    pub tau_d: f64,
}

impl Default for ConstantUncertainties {
    fn default() -> Self {
        ConstantUncertainties { zeta: 0.004, tau_d: 0.3e-3 }
    }
}

/// Laser switches and effective rates (1/s) for one protocol phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserConfig {
    pub on_411: bool,
    pub on_935: bool,
    pub on_861: bool,
    /// Both 760 nm tones.
    pub on_deshelve_760: bool,
    pub on_976: bool,
    pub on_cooling: bool,
    /// Saturated 411 nm drive: S_F1 → D52 absorption and D52 → S_F1
    /// stimulated emission, each at this rate.
    pub pump_rate_411: f64,
    pub repump_rate_935: f64,
    pub repump_rate_861: f64,
    pub repump_rate_976: f64,
    pub deshelve_rate_760: f64,
}

impl LaserConfig {
    pub const DEFAULT_PUMP_411: f64 = 1e4;
    pub const DEFAULT_REPUMP: f64 = 1e4;

    /// Everything off, default rates.
    pub fn dark() -> Self {
        LaserConfig {
            on_411: false,
            on_935: false,
            on_861: false,
            on_deshelve_760: false,
            on_976: false,
            on_cooling: false,
            pump_rate_411: Self::DEFAULT_PUMP_411,
            repump_rate_935: Self::DEFAULT_REPUMP,
            repump_rate_861: Self::DEFAULT_REPUMP,
            repump_rate_976: Self::DEFAULT_REPUMP,
            deshelve_rate_760: deshelve_rate_for_return_time(350e-6, Self::DEFAULT_REPUMP),
        }
    }

    /// Same rates, all switches off.
    pub fn all_off(&self) -> Self {
        LaserConfig {
            on_411: false,
            on_935: false,
            on_861: false,
            on_deshelve_760: false,
            on_976: false,
            on_cooling: false,
            ..*self
        }
    }

    pub fn shelving(&self, scheme: RepumpScheme) -> Self {
        LaserConfig {
            on_411: true,
            on_935: scheme == RepumpScheme::Nm935,
            on_861: scheme == RepumpScheme::Nm861,
            ..self.all_off()
        }
    }

    pub fn detection(&self) -> Self {
        LaserConfig { on_cooling: true, on_935: true, ..self.all_off() }
    }

    pub fn deshelving(&self) -> Self {
        LaserConfig { on_deshelve_760: true, on_976: true, on_935: true, on_cooling: true, ..self.all_off() }
    }

    /// 411 nm off, 935 nm on: lets residual D-state population decay.
    pub fn relaxation(&self) -> Self {
        LaserConfig { on_935: true, ..self.all_off() }
    }

    pub fn repump_scheme(&self) -> Result<Option<RepumpScheme>> {
        match (self.on_935, self.on_861) {
            (true, true) => Err(Error::InvalidLaserConfig("935 nm and 861 nm repumps may not both be on".into())),
            (true, false) => Ok(Some(RepumpScheme::Nm935)),
            (false, true) => Ok(Some(RepumpScheme::Nm861)),
            (false, false) => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("pump_rate_411", self.pump_rate_411),
            ("repump_rate_935", self.repump_rate_935),
            ("repump_rate_861", self.repump_rate_861),
            ("repump_rate_976", self.repump_rate_976),
            ("deshelve_rate_760", self.deshelve_rate_760),
        ];
        for (name, r) in rates {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidLaserConfig(format!("{name} must be >= 0, got {r}")));
            }
        }
        self.repump_scheme().map(|_| ())
    }
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self::dark().shelving(RepumpScheme::Nm935)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepumpScheme {
    /// ²D₃/₂ → ³[3/2]°₁/₂, feeds both ground hyperfine levels.
    Nm935,
    /// ²D₃/₂(F=2) → ¹[3/2]°₃/₂(F=2), feeds only S_F1.
    Nm861,
}

impl fmt::Display for RepumpScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepumpScheme::Nm935 => "nm935",
            RepumpScheme::Nm861 => "nm861",
        })
    }
}

impl std::str::FromStr for RepumpScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nm935" | "935" => Ok(RepumpScheme::Nm935),
            "nm861" | "861" => Ok(RepumpScheme::Nm861),
            _ => Err(Error::InvalidParameter(format!("unknown repump scheme '{s}', expected nm935 or nm861"))),
        }
    }
}

/// 760 nm rate giving a 1/e ground-state return time `tau` through the
/// two-step chain F72 → D32_F1 → S at repump rate `repump`.
pub fn deshelve_rate_for_return_time(tau: f64, repump: f64) -> f64 {
    // Survival of the sequential two-exponential chain at time t.
    let survival = |d: f64, t: f64| -> f64 {
        if (d - repump).abs() < 1e-9 * repump {
            (1.0 + d * t) * (-d * t).exp()
        } else {
            (d * (-repump * t).exp() - repump * (-d * t).exp()) / (d - repump)
        }
    };
    let target = (-1.0f64).exp();
    // Survival decreases with d; bracket and bisect.
    let (mut lo, mut hi) = (1e-6 / tau, 1e6 / tau);
    if survival(hi, tau) > target {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if survival(mid, tau) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Continuous-time Markov generator for one laser configuration.
///
/// `rates[i][j]` is the i → j rate in 1/s; diagonal entries are zero and the
/// exit rate of a state is its row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    rates: [[f64; MANIFOLD_COUNT]; MANIFOLD_COUNT],
    exit: [f64; MANIFOLD_COUNT],
    config: LaserConfig,
    constants: AtomicConstants,
}

impl RateModel {
    pub fn rate(&self, from: Manifold, to: Manifold) -> f64 {
        self.rates[from.index()][to.index()]
    }

    pub fn rates(&self) -> &[[f64; MANIFOLD_COUNT]; MANIFOLD_COUNT] {
        &self.rates
    }

    pub fn exit_rate(&self, from: Manifold) -> f64 {
        self.exit[from.index()]
    }

    pub fn config(&self) -> &LaserConfig {
        &self.config
    }

    pub fn constants(&self) -> &AtomicConstants {
        &self.constants
    }

    /// Spontaneous branching fractions out of D52: (F72, D32_F2, S_F1).
    pub fn d52_branching(&self) -> (f64, f64, f64) {
        let c = &self.constants;
        let m1 = c.m1_branching();
        (c.zeta, m1, 1.0 - c.zeta - m1)
    }

    /// States reachable from `from` along edges with positive rate.
    pub fn reachable(&self, from: Manifold) -> [bool; MANIFOLD_COUNT] {
        let mut seen = [false; MANIFOLD_COUNT];
        let mut stack = vec![from.index()];
        seen[from.index()] = true;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && self.rates[i][j] > 0.0 {
                    *s = true;
                    stack.push(j);
                }
            }
        }
        seen
    }
}

pub fn build_rate_model(config: &LaserConfig, constants: &AtomicConstants) -> Result<RateModel> {
    config.validate()?;
    constants.validate()?;

    use Manifold::*;
    let mut q = [[0.0f64; MANIFOLD_COUNT]; MANIFOLD_COUNT];
    let mut add = |from: Manifold, to: Manifold, r: f64| q[from.index()][to.index()] += r;

    // Spontaneous D52 decay, total 1/tau_d.
    let (to_f, to_d32, to_s) = {
        let m1 = constants.m1_branching();
        (constants.zeta, m1, 1.0 - constants.zeta - m1)
    };
    add(D52, F72, to_f / constants.tau_d);
    if constants.a_m1 > 0.0 {
        add(D52, D32F2, to_d32 / constants.tau_d);
    }
    add(D52, SF1, to_s / constants.tau_d);

    if config.on_411 && config.pump_rate_411 > 0.0 {
        add(SF1, D52, config.pump_rate_411);
        add(D52, SF1, config.pump_rate_411);
    }
    if config.on_935 && config.repump_rate_935 > 0.0 {
        let r = config.repump_rate_935;
        for d32 in [D32F1, D32F2] {
            add(d32, SF0, r / 3.0);
            add(d32, SF1, 2.0 * r / 3.0);
        }
    }
    if config.on_861 && config.repump_rate_861 > 0.0 {
        add(D32F2, SF1, config.repump_rate_861);
    }
    if config.on_deshelve_760 && config.deshelve_rate_760 > 0.0 {
        add(F72, D32F1, config.deshelve_rate_760);
    }
    if config.on_976 && config.repump_rate_976 > 0.0 {
        add(D52, SF1, config.repump_rate_976);
    }

    let mut exit = [0.0; MANIFOLD_COUNT];
    for (i, row) in q.iter().enumerate() {
        exit[i] = row.iter().sum();
    }
    Ok(RateModel { rates: q, exit, config: *config, constants: *constants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Manifold::*;

    fn model(cfg: LaserConfig) -> RateModel {
        build_rate_model(&cfg, &AtomicConstants::default()).unwrap()
    }

    #[test]
    fn all_off_leaves_only_spontaneous_decay() {
        let m = model(LaserConfig::dark());
        let c = AtomicConstants::default();
        assert!((m.exit_rate(D52) - 1.0 / c.tau_d).abs() < 1e-9);
        for s in [SF0, SF1, D32F1, D32F2, F72, Lost] {
            assert_eq!(m.exit_rate(s), 0.0, "{s}");
        }
    }

    #[test]
    fn m1_branching_values() {
        let m = model(LaserConfig::default());
        let (_, m1, _) = m.d52_branching();
        assert!((m1 - 2.0357e-4).abs() < 1e-7, "{m1}");
        let c = AtomicConstants::default().with_a_m1_mhz(4.1);
        assert!((c.m1_branching() - 1.85e-4).abs() < 1e-6);
        assert!((c.m1_branching() * 1e4 - 1.8).abs() < 0.06);
    }

    #[test]
    fn spontaneous_d52_rates_sum_to_inverse_lifetime() {
        let c = AtomicConstants::default();
        let m = build_rate_model(&LaserConfig::dark(), &c).unwrap();
        let total: f64 = m.rates()[D52.index()].iter().sum();
        assert!((total * c.tau_d - 1.0).abs() < 1e-12);
        assert!((m.rate(D52, F72) * c.tau_d - c.zeta).abs() < 1e-12);
    }

    #[test]
    fn zero_m1_removes_edge() {
        let c = AtomicConstants::default().with_a_m1(0.0);
        let m = build_rate_model(&LaserConfig::default(), &c).unwrap();
        assert_eq!(m.rate(D52, D32F2), 0.0);
    }

    #[test]
    fn f72_metastable_without_760() {
        let cfg = LaserConfig::default();
        assert_eq!(model(cfg).exit_rate(F72), 0.0);
        assert!(model(cfg.deshelving()).exit_rate(F72) > 0.0);
        assert_eq!(model(cfg.deshelving()).exit_rate(Lost), 0.0);
    }

    #[test]
    fn repump_861_cannot_feed_zero() {
        let m = model(LaserConfig::dark().shelving(RepumpScheme::Nm861));
        assert!(!m.reachable(SF1)[SF0.index()]);
        let m = model(LaserConfig::dark().shelving(RepumpScheme::Nm935));
        assert!(m.reachable(SF1)[SF0.index()]);
    }

    #[test]
    fn repump_935_split_is_one_third_to_f0() {
        let m = model(LaserConfig::default());
        let r = m.config().repump_rate_935;
        assert!((m.rate(D32F2, SF0) - r / 3.0).abs() < 1e-9);
        assert!((m.rate(D32F2, SF1) - 2.0 * r / 3.0).abs() < 1e-9);
        assert!((m.rate(D32F1, SF0) - r / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_both_repumps() {
        let cfg = LaserConfig { on_861: true, ..LaserConfig::default() };
        assert!(matches!(build_rate_model(&cfg, &AtomicConstants::default()), Err(Error::InvalidLaserConfig(_))));
    }

    #[test]
    fn rejects_bad_constants() {
        let cfg = LaserConfig::default();
        for c in [
            AtomicConstants { zeta: 1.0, ..Default::default() },
            AtomicConstants { tau_d: 0.0, ..Default::default() },
            AtomicConstants { a_m1: -1.0, ..Default::default() },
            AtomicConstants { a_m1: 2.0, ..Default::default() },
        ] {
            assert!(matches!(build_rate_model(&cfg, &c), Err(Error::InvalidConstants(_))));
        }
        let neg = LaserConfig { pump_rate_411: -1.0, ..cfg };
        assert!(build_rate_model(&neg, &AtomicConstants::default()).is_err());
    }

    #[test]
    fn deshelve_rate_solves_return_time() {
        let d = deshelve_rate_for_return_time(350e-6, 1e4);
        assert!((d - 4285.07).abs() < 0.1, "{d}");
    }

    #[test]
    fn manifold_tags_round_trip() {
        for m in Manifold::ALL {
            assert_eq!(m.tag().parse::<Manifold>().unwrap(), m);
            assert_eq!(Manifold::from_index(m.index()), Some(m));
        }
        assert!(Manifold::from_index(7).is_none());
    }
}
