//! Min-max latency planners.
//!
//! The system delay `T` is found by bisection: feasibility is monotone in `T`,
//! and a delay is feasible when some choice of compression ratios makes the
//! closed-form total TDMA share fit in one frame. [`solve_optimal`] tries every
//! ratio tuple at each probe, [`solve_heuristic`] ranks ratios per device.
//! The three equal-share baselines skip the bisection entirely.

mod baselines;
mod bisection;
mod verify;

pub use baselines::{solve_equ, solve_fix_g, solve_fix_o, FIX_G_THRESHOLD};
pub use bisection::{probe_optimal, solve_heuristic, solve_optimal};
pub use verify::{verify_report, ConstraintCheck, Verdict};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::{device_threshold, DeviceLoad};
use crate::model::{Allocation, DeviceProfile, ModelError, SystemConfig, DEFAULT_THRESHOLD_TOL};

/// Upper limit on `N^K` for the exhaustive planner.
pub const MAX_TUPLES: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "OPT")]
    Opt,
    #[serde(rename = "HEU")]
    Heu,
    #[serde(rename = "EQU")]
    Equ,
    #[serde(rename = "FIX_O")]
    FixO,
    #[serde(rename = "FIX_G")]
    FixG,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Opt, Strategy::Heu, Strategy::Equ, Strategy::FixO, Strategy::FixG];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Opt => "OPT",
            Strategy::Heu => "HEU",
            Strategy::Equ => "EQU",
            Strategy::FixO => "FIX_O",
            Strategy::FixG => "FIX_G",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s) || st.name().replace('_', "").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}` (expected OPT, HEU, EQU, FIX_O or FIX_G)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative width at which the bisection on `T` stops.
    pub epsilon: f64,
    /// Relative tolerance of the threshold bisection.
    pub epsilon2: f64,
    pub max_outer_iters: usize,
    /// Enumerate ratio tuples on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1e-3,
            epsilon2: DEFAULT_THRESHOLD_TOL,
            max_outer_iters: 200,
            parallel: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |what: &str, v: f64| PlanError::InvalidOptions(format!("{what} must lie in (0, 1), got {v}"));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(bad("epsilon", self.epsilon));
        }
        if !(self.epsilon2 > 0.0 && self.epsilon2 < 1.0) {
            return Err(bad("epsilon2", self.epsilon2));
        }
        if self.max_outer_iters == 0 {
            return Err(PlanError::InvalidOptions("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub system_delay_s: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkCounters {
    pub p4_solves: u64,
    pub cr_tuples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanStatus {
    Solved,
    /// The strategy's fixed choices cannot satisfy every device.
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub strategy: Strategy,
    pub status: PlanStatus,
    /// Largest end-to-end latency achieved by `allocation`; NaN when infeasible.
    pub system_delay_s: f64,
    pub allocation: Allocation,
    /// Bisection probes in the order they were made.
    pub trace: Vec<TraceEntry>,
    pub counters: WorkCounters,
}

impl PlanReport {
    pub fn is_solved(&self) -> bool {
        self.status == PlanStatus::Solved
    }

    /// Every feasible probe lies above every infeasible one.
    pub fn trace_is_monotone(&self) -> bool {
        let lowest_feasible = self
            .trace
            .iter()
            .filter(|e| e.feasible)
            .map(|e| e.system_delay_s)
            .fold(f64::INFINITY, f64::min);
        self.trace
            .iter()
            .filter(|e| !e.feasible)
            .all(|e| e.system_delay_s < lowest_feasible)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("no devices to plan for")]
    NoDevices,
    #[error("device {device} cannot reach its SSIM requirement with any compression ratio")]
    Unsatisfiable { device: usize },
    #[error("no feasible allocation at the upper bound {upper_s} s")]
    InfeasibleAtUpperBound { upper_s: f64 },
    #[error("bisection did not converge within {iterations} iterations")]
    IterationCap { iterations: usize, trace: Vec<TraceEntry> },
    #[error("{tuples} compression-ratio tuples exceed the exhaustive-search limit")]
    SearchSpaceTooLarge { tuples: u64 },
}

/// Minimum thresholds and loads for every (device, catalog ratio) pair.
#[derive(Debug, Clone)]
pub struct LoadTable {
    /// `loads[k][n]` is `None` when ratio `n` cannot satisfy device `k`.
    pub loads: Vec<Vec<Option<DeviceLoad>>>,
}

impl LoadTable {
    pub fn build(cfg: &SystemConfig, devices: &[DeviceProfile], epsilon2: f64) -> Result<Self, PlanError> {
        let loads = devices
            .iter()
            .map(|dev| {
                cfg.ratios()
                    .map(|cr| {
                        Ok(device_threshold(cfg, dev, cr, epsilon2)?.map(|d| DeviceLoad::new(cfg, dev, cr, d)))
                    })
                    .collect::<Result<Vec<_>, ModelError>>()
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(LoadTable { loads })
    }

    pub fn num_devices(&self) -> usize {
        self.loads.len()
    }

    /// Catalog index minimizing `o·e^{d(o)}`; ties go to the earlier entry.
    pub fn best_index(&self, device: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (n, load) in self.loads[device].iter().enumerate() {
            if let Some(load) = load {
                let score = load.cr * load.threshold.exp();
                if best.is_none_or(|(_, s)| score < s) {
                    best = Some((n, score));
                }
            }
        }
        best.map(|(n, _)| n)
    }

    pub fn best_indices(&self) -> Result<Vec<usize>, PlanError> {
        (0..self.num_devices())
            .map(|k| self.best_index(k).ok_or(PlanError::Unsatisfiable { device: k }))
            .collect()
    }

    pub fn load(&self, device: usize, index: usize) -> Option<&DeviceLoad> {
        self.loads[device][index].as_ref()
    }
}

fn prepare(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
) -> Result<LoadTable, PlanError> {
    opts.validate()?;
    cfg.validate()?;
    if devices.is_empty() {
        return Err(PlanError::NoDevices);
    }
    for (k, dev) in devices.iter().enumerate() {
        if let Err(e) = dev.validate(cfg, k) {
            return Err(match e {
                ModelError::InvalidConfig { ref field, .. } if field.ends_with("ssim_req") && dev.ssim_req > 0.0 && dev.ssim_req < 1.0 => {
                    PlanError::Unsatisfiable { device: k }
                }
                e => e.into(),
            });
        }
    }
    let table = LoadTable::build(cfg, devices, opts.epsilon2)?;
    table.best_indices()?;
    Ok(table)
}

/// Bisection bracket `(T_min, T_max)` for the optimal system delay.
///
/// `T_max` is the delay of an equal split of frame and edge CPU with each
/// device on its best ratio, which is always achievable. `T_min` is the
/// largest delay any single device would see with every resource to itself.
pub fn init_bounds(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
) -> Result<(f64, f64), PlanError> {
    let table = prepare(cfg, devices, opts)?;
    Ok(bounds_from_table(cfg, &table))
}

fn bounds_from_table(cfg: &SystemConfig, table: &LoadTable) -> (f64, f64) {
    let k = table.num_devices() as f64;
    let best = table.best_indices().expect("validated by prepare");
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for (dev, &n) in best.iter().enumerate() {
        let load = table.load(dev, n).expect("best index is satisfiable");
        let alone = load.local_s + load.transmit_load + load.decode_load / cfg.edge_cpu_hz;
        let shared = load.local_s + load.transmit_load * k + load.decode_load * k / cfg.edge_cpu_hz;
        lower = lower.max(alone);
        upper = upper.max(shared);
    }
    (lower, upper)
}

/// Runs the named strategy.
pub fn solve(
    strategy: Strategy,
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
) -> Result<PlanReport, PlanError> {
    match strategy {
        Strategy::Opt => solve_optimal(cfg, devices, opts),
        Strategy::Heu => solve_heuristic(cfg, devices, opts),
        Strategy::Equ => solve_equ(cfg, devices, opts),
        Strategy::FixO => solve_fix_o(cfg, devices, opts),
        Strategy::FixG => solve_fix_g(cfg, devices, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn device(images: u32, local_ghz: f64, distance_m: f64, eta: f64) -> DeviceProfile {
        DeviceProfile {
            image_count: images,
            local_cpu_hz: local_ghz * 1e9,
            tx_power_w: 0.1,
            distance_m,
            ssim_req: eta,
        }
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert_eq!("fixo".parse::<Strategy>().unwrap(), Strategy::FixO);
        assert!("best".parse::<Strategy>().is_err());
    }

    #[test]
    fn single_device_bounds_coincide() {
        let cfg = SystemConfig::default();
        let (lo, hi) = init_bounds(&cfg, &[device(4, 1.3, 40.0, 0.88)], &SolverOptions::default()).unwrap();
        assert_eq!(lo, hi);
    }

    #[test]
    fn bounds_are_ordered() {
        let cfg = SystemConfig::default();
        let devs = vec![device(4, 1.3, 40.0, 0.88), device(9, 1.9, 90.0, 0.81), device(1, 1.0, 15.0, 0.92)];
        let (lo, hi) = init_bounds(&cfg, &devs, &SolverOptions::default()).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn rejects_unsatisfiable_device() {
        let cfg = SystemConfig::default();
        let devs = vec![device(4, 1.3, 40.0, 0.88), device(2, 1.0, 50.0, 0.97)];
        let err = init_bounds(&cfg, &devs, &SolverOptions::default()).unwrap_err();
        assert_eq!(err, PlanError::Unsatisfiable { device: 1 });
        assert_eq!(init_bounds(&cfg, &[], &SolverOptions::default()).unwrap_err(), PlanError::NoDevices);
    }

    #[test]
    fn option_validation() {
        let cfg = SystemConfig::default();
        let devs = [device(4, 1.3, 40.0, 0.88)];
        for opts in [
            SolverOptions { epsilon: 0.0, ..Default::default() },
            SolverOptions { epsilon2: 1.0, ..Default::default() },
            SolverOptions { max_outer_iters: 0, ..Default::default() },
        ] {
            assert!(matches!(solve_optimal(&cfg, &devs, &opts), Err(PlanError::InvalidOptions(_))));
        }
    }

    #[test]
    fn ties_pick_first_catalog_entry() {
        let mut cfg = SystemConfig::default();
        let curve = cfg.catalog[0].logistic;
        for e in cfg.catalog.iter_mut() {
            e.logistic = curve;
        }
        let dev = device(3, 1.0, 30.0, 0.85);
        let table = LoadTable::build(&cfg, &[dev], 1e-10).unwrap();
        // one curve for all: same d, so the smallest ratio wins
        assert_eq!(table.best_index(0), Some(cfg.catalog.len() - 1));

        let mut loads = table.loads.clone();
        for l in loads[0].iter_mut().flatten() {
            l.cr = 0.1;
            l.threshold = 0.2;
        }
        let tied = LoadTable { loads };
        assert_eq!(tied.best_index(0), Some(0));
    }
}
