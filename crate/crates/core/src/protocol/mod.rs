//! Experiment sequences built from dynamics and detection phases.

mod rabi;
mod rb;
mod scan;
mod spam;
mod two_ion;

use serde::{Deserialize, Serialize};

use crate::atomic::{build_rate_model, AtomicConstants, LaserConfig, RateModel, RepumpScheme};
use crate::error::{Error, Result};
use crate::photon::CountModel;

pub use rabi::{sample_rabi, simulate_rabi, simulate_ramsey, SpamErrors};
pub use rb::{clifford_group, run_randomized_benchmarking, Clifford, RbParams, RbResult};
pub use scan::{relaxed_shelving_error, run_relaxed_trajectories, run_shelving_scan, RELAXATION_TIME};
pub use spam::{
    freeze_thresholds, interleaving_order, run_calibration, run_spam_campaign, simulate_shot, CalibrationData,
    CampaignSummary, FrozenThresholds, Qubit, ShotRecord, StateSummary, MAX_RESTARTS,
};
pub use two_ion::{optimal_two_level_threshold, run_two_ion_discrimination, TwoIonParams, TwoIonResult};

/// Timing, error probabilities and sequencing of a SPAM shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// |0⟩ preparation error; a failure leaves the ion in S_F1.
    pub eps_prep0: f64,
    /// Transfer π-pulse error; a failure leaves the population where it was.
    pub eps_pi: f64,
    pub shelve_time: f64,
    pub detect_time: f64,
    pub deshelve_time: f64,
    /// Per-shot probability of an ion-storage event.
    pub p_storage: f64,
    /// Fraction of storage events the ion recovers from by the start of
    /// deshelving. It is dark until then and passes the post-check.
    pub storage_recovery: f64,
    /// Probability that the ion is hot at the start of an attempt, which
    /// the pre-check catches and restarts.
    pub p_hot: f64,
    pub block_size: u64,
    pub repump_scheme: RepumpScheme,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            eps_prep0: 1e-6,
            eps_pi: 7.4e-5,
            shelve_time: 0.2,
            detect_time: 17e-3,
            deshelve_time: 35e-3,
            p_storage: 2.9e-4,
            storage_recovery: 0.04,
            p_hot: 1e-3,
            block_size: 50,
            repump_scheme: RepumpScheme::Nm935,
        }
    }
}

impl ProtocolParams {
    /// Every error channel off.
    pub fn ideal() -> Self {
        ProtocolParams { eps_prep0: 0.0, eps_pi: 0.0, p_storage: 0.0, p_hot: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("eps_prep0", self.eps_prep0),
            ("eps_pi", self.eps_pi),
            ("p_storage", self.p_storage),
            ("p_hot", self.p_hot),
        ];
        for (name, p) in probs {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if !(0.0..=1.0).contains(&self.storage_recovery) {
            return Err(Error::InvalidParameter("storage_recovery must lie in [0, 1]".into()));
        }
        let times = [("shelve_time", self.shelve_time), ("deshelve_time", self.deshelve_time)];
        for (name, t) in times {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {t}")));
            }
        }
        if !(self.detect_time > 0.0 && self.detect_time.is_finite()) {
            return Err(Error::InvalidParameter("detect_time must be > 0".into()));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidParameter("block_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Static description of the ion and the optics around it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Apparatus {
    pub constants: AtomicConstants,
    /// Rates for every laser; the on/off switches are set per phase.
    pub lasers: LaserConfig,
    pub counts: CountModel,
}

/// Rate models for each phase of a shot.
#[derive(Debug, Clone)]
pub(crate) struct PhaseModels {
    pub shelve: RateModel,
    pub detect: RateModel,
    pub deshelve: RateModel,
}

impl Apparatus {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.lasers.validate()?;
        self.counts.validate()
    }

    pub(crate) fn phase_models(&self, scheme: RepumpScheme) -> Result<PhaseModels> {
        self.validate()?;
        Ok(PhaseModels {
            shelve: build_rate_model(&self.lasers.shelving(scheme), &self.constants)?,
            detect: build_rate_model(&self.lasers.detection(), &self.constants)?,
            deshelve: build_rate_model(&self.lasers.deshelving(), &self.constants)?,
        })
    }

    /// Checks that the protocol and the count model agree on the window length.
    pub(crate) fn check_protocol(&self, params: &ProtocolParams) -> Result<()> {
        params.validate()?;
        self.validate()?;
        let w = self.counts.detect_window;
        if (params.detect_time - w).abs() > 1e-12 * w.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "protocol detect_time {} s differs from count-model detect_window {} s",
                params.detect_time, w
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProtocolParams::default().validate().unwrap();
        ProtocolParams::ideal().validate().unwrap();
        Apparatus::default().check_protocol(&ProtocolParams::default()).unwrap();
    }

    #[test]
    fn rejects_bad_params() {
        let bad = [
            ProtocolParams { eps_pi: 1.0, ..Default::default() },
            ProtocolParams { p_storage: -0.1, ..Default::default() },
            ProtocolParams { block_size: 0, ..Default::default() },
            ProtocolParams { detect_time: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        let window = ProtocolParams { detect_time: 0.02, ..Default::default() };
        assert!(Apparatus::default().check_protocol(&window).is_err());
    }

    #[test]
    fn both_repumps_rejected_up_front() {
        let mut app = Apparatus::default();
        app.lasers.on_935 = true;
        app.lasers.on_861 = true;
        assert!(matches!(app.validate(), Err(Error::InvalidLaserConfig(_))));
    }
}
