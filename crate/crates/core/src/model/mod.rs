//! Domain types and the closed-form physical and performance formulas.
//!
//! Everything here is a pure function of its inputs. Powers are carried in
//! watts, SNR handed to the logistic curve is in dB, and every conversion
//! between the two happens explicitly in [`link`].

pub mod allocation;
pub mod config;
pub mod latency;
pub mod link;
pub mod special;
pub mod ssim;

pub use allocation::{Allocation, AllocationRow, Decision, LatencyBreakdown};
pub use config::{CatalogEntry, DeviceProfile, SystemConfig, CORE_HZ};
pub use latency::{decode_latency, end_to_end_latency, local_latency, transmit_latency};
pub use link::{
    active_ratio, cutoff_ceiling, min_threshold, received_power, received_snr_db,
    DEFAULT_THRESHOLD_TOL,
};
pub use special::exp_integral_e1;
pub use ssim::{fit_logistic, required_snr_db, ssim_model, LogisticParams};

use thiserror::Error;

/// Errors raised by the model layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{op}: argument {value} is outside the domain ({requirement})")]
    Domain {
        op: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("SSIM target {eta} is unreachable: the curve only spans ({a1}, {a2})")]
    Unsatisfiable { eta: f64, a1: f64, a2: f64 },
    #[error("invalid configuration at `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("logistic fit failed: {0}")]
    Fit(String),
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
