//! Latency-minimizing resource allocation for multi-device uplink joint
//! source-channel coding (JSCC) systems.
//!
//! Each device encodes a batch of images locally, ships the compressed symbols
//! over a Rayleigh-faded OFDM uplink with truncated channel inversion, and the
//! edge server decodes them. The planners choose, per device, a compression
//! ratio, a channel-truncation threshold, a TDMA time share and an edge CPU
//! share so that the slowest device finishes as early as possible while every
//! device meets its SSIM requirement.
//!
//! * [`model`]: domain types, the exponential integral, link and latency formulas,
//!   logistic SSIM curves.
//! * [`kkt`]: closed-form solution of the fixed-compression subproblem at a
//!   given system delay.
//! * [`planner`]: bisection on the system delay with exhaustive or heuristic
//!   compression choice, plus the equal-share baselines and a report verifier.
//! * [`oracle`]: slow, independent numerical checkers used by the tests.
//! * [`channel_sim`]: Monte Carlo simulation of the truncated-inversion uplink.
//! * [`experiments`]: scenario generation, config files, figure sweeps and the
//!   acceptance runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_sim;
pub mod experiments;
pub mod kkt;
pub mod model;
pub mod oracle;
pub mod planner;

pub use model::{
    Allocation, AllocationRow, Decision, DeviceProfile, LatencyBreakdown, LogisticParams,
    ModelError, SystemConfig,
};
