use std::path::PathBuf;

use crate::atomic::Manifold;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid atomic constants: {0}")]
    InvalidConstants(String),

    #[error("invalid laser configuration: {0}")]
    InvalidLaserConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population vector invalid: {0}")]
    InvalidPopulation(String),

    #[error("integration failed at t = {time:.6e} s: {reason}")]
    Integration { time: f64, reason: String },

    #[error("cooling mean {mean} too small to monitor at tail bound {bound:e}")]
    Unmonitorable { mean: f64, bound: f64 },

    #[error("A_M1 not identifiable: no scan point in the asymptotic regime")]
    NonIdentifiable,

    #[error("calibration shots {calibration:?} overlap the final data set {final_range:?}")]
    CalibrationReuse { calibration: std::ops::Range<u64>, final_range: std::ops::Range<u64> },

    #[error("thresholds digest mismatch: artifact says {stored}, contents hash to {computed}")]
    ThresholdDigest { stored: String, computed: String },

    #[error("shot {shot} restarted more than {limit} times")]
    RestartLimit { shot: u64, limit: u32 },

    #[error("unexpected manifold {0} at this protocol step")]
    UnexpectedManifold(Manifold),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the user's inputs rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConstants(_)
                | Error::InvalidLaserConfig(_)
                | Error::InvalidParameter(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::CalibrationReuse { .. }
                | Error::ThresholdDigest { .. }
        )
    }
}
