//! Run configuration, read from TOML.
//!
//! Every table is optional and every key defaults to the built-in value.
//! Unknown keys are errors. See `docs/config.md` for the grammar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::BudgetRow;
use crate::atomic::{AtomicConstants, ConstantUncertainties, LaserConfig, RepumpScheme};
use crate::error::{Error, Result};
use crate::photon::{Bound, CountModel, DEFAULT_DETECT_BOUND, DEFAULT_DOPPLER_BOUND};
use crate::protocol::{Apparatus, ProtocolParams, RbParams, SpamErrors, TwoIonParams};

/// Overrides for the atomic constants. A_M1 is given in mHz (A_M1 / 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub zeta: f64,
    pub tau_d: f64,
    pub a_m1_mhz: f64,
    pub gamma_411: f64,
    pub omega_q: f64,
    pub tau_deshelve: f64,
    pub sigma_zeta: f64,
    pub sigma_tau_d: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = AtomicConstants::default();
        let u = ConstantUncertainties::default();
        ConstantsConfig {
            zeta: c.zeta,
            tau_d: c.tau_d,
            a_m1_mhz: c.a_m1_mhz(),
            gamma_411: c.gamma_411,
            omega_q: c.omega_q,
            tau_deshelve: c.tau_deshelve,
            sigma_zeta: u.zeta,
            sigma_tau_d: u.tau_d,
        }
    }
}

impl ConstantsConfig {
    pub fn constants(&self) -> AtomicConstants {
        AtomicConstants {
            zeta: self.zeta,
            tau_d: self.tau_d,
            a_m1: 0.0,
            gamma_411: self.gamma_411,
            omega_q: self.omega_q,
            tau_deshelve: self.tau_deshelve,
        }
        .with_a_m1_mhz(self.a_m1_mhz)
    }

    pub fn uncertainties(&self) -> ConstantUncertainties {
        ConstantUncertainties { zeta: self.sigma_zeta, tau_d: self.sigma_tau_d }
    }
}

/// Blinded threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub n_per_state: u64,
    /// Defaults to `seed + 2^32`, clear of the final data set.
    pub seed: Option<u64>,
    pub detect_bound: Bound,
    pub doppler_bound: Bound,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            n_per_state: 10_000,
            seed: None,
            detect_bound: DEFAULT_DETECT_BOUND,
            doppler_bound: DEFAULT_DOPPLER_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Shelving times (s).
    pub times: Vec<f64>,
    pub schemes: Vec<RepumpScheme>,
    pub n_per_point: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            times: vec![0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.25, 0.3],
            schemes: vec![RepumpScheme::Nm935, RepumpScheme::Nm861],
            n_per_point: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Sigma level of the profile-likelihood interval (Δ ln L = z²/2).
    pub z: f64,
    /// Scan rows taken into the fit.
    pub scheme: RepumpScheme,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { z: 1.0, scheme: RepumpScheme::Nm935 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbConfig {
    pub lengths: Vec<u64>,
    pub n_seqs: u64,
    pub shots_per_seq: u64,
    pub eps_per_gate: f64,
    pub spam: SpamErrors,
    /// Fixed asymptote B of the decay fit; omit to fit it.
    pub asymptote: Option<f64>,
}

impl Default for RbConfig {
    fn default() -> Self {
        let p = RbParams::default();
        RbConfig {
            lengths: p.lengths,
            n_seqs: p.n_seqs,
            shots_per_seq: p.shots_per_seq,
            eps_per_gate: p.eps_per_gate,
            spam: p.spam,
            asymptote: Some(0.5),
        }
    }
}

impl RbConfig {
    pub fn params(&self) -> RbParams {
        RbParams {
            lengths: self.lengths.clone(),
            n_seqs: self.n_seqs,
            shots_per_seq: self.shots_per_seq,
            eps_per_gate: self.eps_per_gate,
            spam: self.spam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    /// Rows to assemble; empty means the built-in table.
    pub rows: Vec<BudgetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_per_state: u64,
    /// Output directory. Not echoed into artifacts so replays into another
    /// directory stay byte-identical.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Sigma level for reported Wilson intervals.
    pub z: f64,
    pub constants: ConstantsConfig,
    pub lasers: LaserConfig,
    pub protocol: ProtocolParams,
    pub counts: CountModel,
    pub calibration: CalibrationConfig,
    pub scan: ScanConfig,
    pub fit: FitConfig,
    pub rb: RbConfig,
    pub two_ion: TwoIonParams,
    pub budget: BudgetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            n_per_state: 1000,
            out: None,
            z: 1.0,
            constants: ConstantsConfig::default(),
            lasers: LaserConfig::dark().shelving(RepumpScheme::Nm935),
            protocol: ProtocolParams::default(),
            counts: CountModel::default(),
            calibration: CalibrationConfig::default(),
            scan: ScanConfig::default(),
            fit: FitConfig::default(),
            rb: RbConfig::default(),
            two_ion: TwoIonParams::default(),
            budget: BudgetConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml_str(&text, path)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apparatus(&self) -> Apparatus {
        Apparatus { constants: self.constants.constants(), lasers: self.lasers, counts: self.counts }
    }

    pub fn calibration_seed(&self) -> u64 {
        self.calibration.seed.unwrap_or(self.seed.wrapping_add(1 << 32))
    }

    /// Checks every nested invariant.
    pub fn validate(&self) -> Result<()> {
        let app = self.apparatus();
        app.validate()?;
        if let Some(s) = app.lasers.repump_scheme()? {
            if s != self.protocol.repump_scheme {
                return Err(Error::Config(format!(
                    "lasers switch on the {s} repump but protocol.repump_scheme is {}",
                    self.protocol.repump_scheme
                )));
            }
        }
        self.protocol.validate()?;
        if !(self.z > 0.0) || !(self.fit.z > 0.0) {
            return Err(Error::Config("z must be > 0".into()));
        }
        if self.n_per_state == 0 || self.calibration.n_per_state == 0 {
            return Err(Error::Config("n_per_state must be >= 1".into()));
        }
        if self.scan.n_per_point == 0 || self.scan.schemes.is_empty() {
            return Err(Error::Config("scan needs n_per_point >= 1 and at least one scheme".into()));
        }
        for b in [self.calibration.detect_bound.value(), self.calibration.doppler_bound.value()] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("threshold bound {b} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = RunConfig::from_toml_str("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sed = 3", "[protocol]\neps_pie = 0.1", "[lasers]\non_953 = true", "[constants]\na_m1 = 1.0"] {
            let err = RunConfig::from_toml_str(text, Path::new("x.toml")).unwrap_err();
            assert!(err.is_config(), "{text}");
        }
    }

    #[test]
    fn both_repumps_fail_validation() {
        let cfg = RunConfig::from_toml_str("[lasers]\non_935 = true\non_861 = true", Path::new("x.toml")).unwrap();
        assert!(cfg.validate().unwrap_err().is_config());
    }

    #[test]
    fn a_m1_in_millihertz() {
        let cfg = RunConfig::from_toml_str("[constants]\na_m1_mhz = 4.1", Path::new("x.toml")).unwrap();
        let a = cfg.apparatus().constants.a_m1;
        assert!((a - 2.0 * std::f64::consts::PI * 4.1e-3).abs() < 1e-15);
    }
}
