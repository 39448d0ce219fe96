//! Slow, independent checkers used by the tests and the acceptance runner.
//!
//! None of these call the closed form in [`crate::kkt`]; they share only the
//! model formulas and the threshold inversion.

mod brute_force;
mod convexity;
mod p4;
mod quadrature;

pub use brute_force::{brute_force_p3, oracle_min_delay, BruteForce, MAX_BRUTE_TUPLES};
pub use convexity::{
    check_constraint_convexity, check_convexity, fd_hessian, interior_samples, normalized_minors, ConvexityVerdict,
    LatencyConstraint, MINOR_TOL,
};
pub use p4::{kkt_residuals, loads_from_model, oracle_solve_p4, KktResiduals};
pub use quadrature::{integrate, quadrature_e1, Quadrature};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::P4Error;
use crate::model::DEFAULT_THRESHOLD_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Points of the coarse delay grid in [`oracle_min_delay`].
    pub grid_resolution: usize,
    /// Starting points of the numerical subproblem solver.
    pub starts: usize,
    /// Relative spread of the edge-rate derivatives at which descent stops.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Relative step of the finite-difference Hessian.
    pub fd_step: f64,
    /// Random points per convexity check.
    pub convexity_samples: usize,
    pub threshold_tol: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            grid_resolution: 64,
            starts: 8,
            tolerance: 1e-9,
            max_iters: 100_000,
            fd_step: 1e-5,
            convexity_samples: 100,
            threshold_tol: DEFAULT_THRESHOLD_TOL,
            seed: 0x5eed,
        }
    }
}

impl OracleOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid_resolution < 8 {
            return Err(format!("grid_resolution must be at least 8, got {}", self.grid_resolution));
        }
        if self.starts == 0 || self.max_iters == 0 || self.convexity_samples == 0 {
            return Err("starts, max_iters and convexity_samples must be positive".into());
        }
        for (name, v) in [("tolerance", self.tolerance), ("fd_step", self.fd_step), ("threshold_tol", self.threshold_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    P4(#[from] P4Error),
    #[error("{tuples} compression-ratio tuples exceed the brute-force limit")]
    SearchSpaceTooLarge { tuples: u64 },
    #[error("no feasible delay found")]
    NoFeasibleDelay,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_invariants() {
        assert!(OracleOptions::default().validate().is_ok());
        assert!(OracleOptions { grid_resolution: 7, ..Default::default() }.validate().is_err());
        assert!(OracleOptions { starts: 0, ..Default::default() }.validate().is_err());
        assert!(OracleOptions { tolerance: 0.0, ..Default::default() }.validate().is_err());
    }
}
