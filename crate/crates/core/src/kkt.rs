//! Closed-form solution of the fixed-compression subproblem.
//!
//! With every device's compression ratio fixed and a candidate system delay
//! `T`, minimizing the total TDMA share subject to every device finishing by
//! `T` and the edge CPU budget is convex. Its KKT conditions give:
//!
//! * `g_k = d_k`, the smallest threshold meeting the SSIM requirement;
//! * with slack `s_k = T - t^l_k`, transmit load `X_k = L_k D0 o_k e^{d_k} T_s / M`
//!   and decode load `Y_k = L_k C^d`:
//!   `√μ = Σ_k √(X_k Y_k)/s_k / (F^c - Σ_k Y_k/s_k)`,
//!   `f^c_k = (√(X_k Y_k)/√μ + Y_k) / s_k`,
//!   `τ_k = (X_k + √μ·√(X_k Y_k)) / s_k`.
//!
//! Every device then finishes exactly at `T` and the edge budget is used up.

use thiserror::Error;

use crate::model::{
    cutoff_ceiling, end_to_end_latency, local_latency, min_threshold, Allocation, AllocationRow,
    Decision, DeviceProfile, ModelError, SystemConfig,
};

/// Slack allowed on `Σ τ <= 1` when declaring a delay feasible.
pub const FRAME_TOL: f64 = 1e-12;
/// Relative tolerance of the tightness and budget identities.
pub const TIGHTNESS_TOL: f64 = 1e-9;

/// Why the subproblem has no solution at the probed delay.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Infeasibility {
    #[error("device {device} cannot reach its SSIM requirement at compression ratio {cr}")]
    Unsatisfiable { device: usize, cr: f64 },
    #[error("device {device} needs {local_s} s to encode, leaving no time before the deadline")]
    NoTimeAfterEncoding { device: usize, local_s: f64 },
    #[error("decoding alone needs {required_hz:.6e} cycles/s but only {available_hz:.6e} are available")]
    EdgeCpuExhausted { required_hz: f64, available_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum P4Error {
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl P4Error {
    /// True when the instance could become feasible at a larger delay.
    pub fn depends_on_delay(&self) -> bool {
        matches!(
            self,
            P4Error::Infeasible(
                Infeasibility::NoTimeAfterEncoding { .. } | Infeasibility::EdgeCpuExhausted { .. }
            )
        )
    }
}

/// Fixed-compression subproblem at a candidate system delay.
#[derive(Debug, Clone)]
pub struct P4Instance<'a> {
    pub cfg: &'a SystemConfig,
    pub devices: &'a [DeviceProfile],
    /// One catalog compression ratio per device.
    pub crs: Vec<f64>,
    pub system_delay: f64,
    pub threshold_tol: f64,
}

impl<'a> P4Instance<'a> {
    pub fn new(
        cfg: &'a SystemConfig,
        devices: &'a [DeviceProfile],
        crs: Vec<f64>,
        system_delay: f64,
    ) -> Result<Self, P4Error> {
        if devices.is_empty() {
            return Err(P4Error::Invalid("at least one device is required".into()));
        }
        if crs.len() != devices.len() {
            return Err(P4Error::Invalid(format!(
                "{} compression ratios for {} devices",
                crs.len(),
                devices.len()
            )));
        }
        if !(system_delay > 0.0 && system_delay.is_finite()) {
            return Err(P4Error::Invalid(format!("system delay must be positive, got {system_delay}")));
        }
        if let Some(cr) = crs.iter().find(|&&cr| cfg.catalog_index(cr).is_none()) {
            return Err(P4Error::Invalid(format!("compression ratio {cr} is not in the catalog")));
        }
        Ok(P4Instance {
            cfg,
            devices,
            crs,
            system_delay,
            threshold_tol: crate::model::DEFAULT_THRESHOLD_TOL,
        })
    }

    pub fn with_threshold_tol(mut self, tol: f64) -> Self {
        self.threshold_tol = tol;
        self
    }

    /// Minimum thresholds `d_k` for the chosen ratios.
    pub fn thresholds(&self) -> Result<Vec<f64>, P4Error> {
        self.devices
            .iter()
            .zip(&self.crs)
            .enumerate()
            .map(|(k, (dev, &cr))| {
                device_threshold(self.cfg, dev, cr, self.threshold_tol)?
                    .ok_or(P4Error::Infeasible(Infeasibility::Unsatisfiable { device: k, cr }))
            })
            .collect()
    }

    /// Per-device loads with `g_k = thresholds[k]`.
    pub fn loads(&self, thresholds: &[f64]) -> Vec<DeviceLoad> {
        self.devices
            .iter()
            .zip(&self.crs)
            .zip(thresholds)
            .map(|((dev, &cr), &g)| DeviceLoad::new(self.cfg, dev, cr, g))
            .collect()
    }
}

/// Solution of the fixed-compression subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct P4Solution {
    pub system_delay: f64,
    /// Decisions and the latencies they achieve; `threshold` is `d_k`.
    pub allocation: Allocation,
    /// `Σ τ_k`; the delay is achievable within one frame iff this is at most 1.
    pub sum_time_share: f64,
    /// Multiplier of the edge CPU budget.
    pub mu: f64,
}

impl P4Solution {
    pub fn fits_frame(&self) -> bool {
        self.sum_time_share <= 1.0 + FRAME_TOL
    }
}

/// Minimum threshold of `dev` at compression ratio `cr`, or `None` when the
/// curve of `cr` cannot reach the device's SSIM requirement.
pub fn device_threshold(
    cfg: &SystemConfig,
    dev: &DeviceProfile,
    cr: f64,
    tol: f64,
) -> Result<Option<f64>, ModelError> {
    let params = cfg
        .logistic_for(cr)
        .ok_or_else(|| ModelError::invalid("cr", format!("{cr} is not in the catalog")))?;
    match cutoff_ceiling(cfg, dev, params) {
        Ok(c) => min_threshold(c, tol).map(Some),
        Err(ModelError::Unsatisfiable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Score used to rank compression ratios per device: `o·e^{d(o)}`, or
/// `+∞` when `o` cannot meet the requirement.
///
/// The optimal time share grows with this product alone, so the smallest
/// score is the best ratio for the device whatever the delay.
pub fn cr_choice_score(cfg: &SystemConfig, dev: &DeviceProfile, cr: f64, tol: f64) -> Result<f64, ModelError> {
    Ok(match device_threshold(cfg, dev, cr, tol)? {
        Some(d) => cr * d.exp(),
        None => f64::INFINITY,
    })
}

/// Delay-independent load terms of one device at a fixed `(o, g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceLoad {
    pub cr: f64,
    pub threshold: f64,
    /// Encoding time `t^l`.
    pub local_s: f64,
    /// `L·D0·o·e^g·T_s/M`: transmit time at a full frame share.
    pub transmit_load: f64,
    /// `L·C^d`: decoding cycles.
    pub decode_load: f64,
}

impl DeviceLoad {
    pub fn new(cfg: &SystemConfig, dev: &DeviceProfile, cr: f64, threshold: f64) -> Self {
        DeviceLoad {
            cr,
            threshold,
            local_s: local_latency(cfg, dev),
            transmit_load: dev.images() * cfg.source_symbols() * cr * threshold.exp() * cfg.symbol_duration_s
                / cfg.m(),
            decode_load: dev.images() * cfg.decode_cycles(),
        }
    }
}

/// Raw KKT point: time shares, edge rates and the multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub time_shares: Vec<f64>,
    pub edge_cpu_hz: Vec<f64>,
    pub mu: f64,
    pub sum_time_share: f64,
}

/// Evaluates the closed form for precomputed loads.
pub fn closed_form(loads: &[DeviceLoad], edge_cpu_hz: f64, system_delay: f64) -> Result<KktPoint, Infeasibility> {
    let mut slack = Vec::with_capacity(loads.len());
    for (k, load) in loads.iter().enumerate() {
        let s = system_delay - load.local_s;
        if !(s > 0.0) {
            return Err(Infeasibility::NoTimeAfterEncoding {
                device: k,
                local_s: load.local_s,
            });
        }
        slack.push(s);
    }
    let mut cross = 0.0;
    let mut decode_floor = 0.0;
    for (load, s) in loads.iter().zip(&slack) {
        cross += (load.transmit_load * load.decode_load).sqrt() / s;
        decode_floor += load.decode_load / s;
    }
    let spare = edge_cpu_hz - decode_floor;
    if !(spare > 0.0) {
        return Err(Infeasibility::EdgeCpuExhausted {
            required_hz: decode_floor,
            available_hz: edge_cpu_hz,
        });
    }
    let sqrt_mu = cross / spare;
    let mut time_shares = Vec::with_capacity(loads.len());
    let mut edge = Vec::with_capacity(loads.len());
    for (load, s) in loads.iter().zip(&slack) {
        let xy = (load.transmit_load * load.decode_load).sqrt();
        time_shares.push((load.transmit_load + sqrt_mu * xy) / s);
        edge.push((xy / sqrt_mu + load.decode_load) / s);
    }
    let sum_time_share = time_shares.iter().sum();
    Ok(KktPoint {
        time_shares,
        edge_cpu_hz: edge,
        mu: sqrt_mu * sqrt_mu,
        sum_time_share,
    })
}

/// `Σ τ_k` of the closed form without building the allocation.
pub(crate) fn closed_form_sum(loads: &[&DeviceLoad], edge_cpu_hz: f64, system_delay: f64) -> Option<f64> {
    let mut cross = 0.0;
    let mut decode_floor = 0.0;
    for load in loads {
        let s = system_delay - load.local_s;
        if !(s > 0.0) {
            return None;
        }
        cross += (load.transmit_load * load.decode_load).sqrt() / s;
        decode_floor += load.decode_load / s;
    }
    let spare = edge_cpu_hz - decode_floor;
    if !(spare > 0.0) {
        return None;
    }
    let sqrt_mu = cross / spare;
    Some(
        loads
            .iter()
            .map(|l| (l.transmit_load + sqrt_mu * (l.transmit_load * l.decode_load).sqrt()) / (system_delay - l.local_s))
            .sum(),
    )
}

/// Assembles a [`P4Solution`] from loads and a point, recomputing latencies
/// with the model formulas.
pub fn build_solution(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    loads: &[DeviceLoad],
    point: &KktPoint,
    system_delay: f64,
) -> Result<P4Solution, ModelError> {
    let rows = devices
        .iter()
        .zip(loads)
        .zip(point.time_shares.iter().zip(&point.edge_cpu_hz))
        .map(|((dev, load), (&tau, &fc))| {
            let decision = Decision {
                cr: load.cr,
                threshold: load.threshold,
                time_share: tau,
                edge_cpu_hz: fc,
            };
            Ok(AllocationRow {
                decision,
                latency: end_to_end_latency(cfg, dev, &decision)?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(P4Solution {
        system_delay,
        allocation: Allocation { rows },
        sum_time_share: point.sum_time_share,
        mu: point.mu,
    })
}

/// Solves the fixed-compression subproblem in closed form.
pub fn solve_p4(instance: &P4Instance<'_>) -> Result<P4Solution, P4Error> {
    let thresholds = instance.thresholds()?;
    let loads = instance.loads(&thresholds);
    solve_loads(instance.cfg, instance.devices, &loads, instance.system_delay)
}

/// [`solve_p4`] for loads whose thresholds are already known.
pub fn solve_loads(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    loads: &[DeviceLoad],
    system_delay: f64,
) -> Result<P4Solution, P4Error> {
    let point = closed_form(loads, cfg.edge_cpu_hz, system_delay).map_err(P4Error::Infeasible)?;
    Ok(build_solution(cfg, devices, loads, &point, system_delay)?)
}
