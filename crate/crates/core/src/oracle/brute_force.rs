//! Exhaustive search over compression-ratio tuples with the numerical
//! subproblem solver, and a delay search built on it.

use super::{oracle_solve_p4, OracleError, OracleOptions};
use crate::kkt::{P4Error, P4Instance, FRAME_TOL};
use crate::model::{DeviceProfile, SystemConfig};

/// Largest `N^K` the brute force accepts.
pub const MAX_BRUTE_TUPLES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// Catalog indices and `Σ τ` of the best tuple, if any tuple is solvable.
    pub best: Option<(Vec<usize>, f64)>,
    /// Every tuple in enumeration order with its `Σ τ`, `None` when unsolvable.
    pub table: Vec<(Vec<usize>, Option<f64>)>,
}

impl BruteForce {
    pub fn feasible(&self) -> bool {
        self.best.as_ref().is_some_and(|(_, s)| *s <= 1.0 + FRAME_TOL)
    }
}

fn tuples(n: usize, k: usize) -> Result<Vec<Vec<usize>>, OracleError> {
    let total = (n as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
    if total > MAX_BRUTE_TUPLES {
        return Err(OracleError::SearchSpaceTooLarge { tuples: total });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur = vec![0usize; k];
    for _ in 0..total {
        out.push(cur.clone());
        for slot in cur.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(out)
}

/// Solves the subproblem for every ratio tuple at delay `system_delay`.
///
/// Ties keep the earlier tuple in lexicographic order.
pub fn brute_force_p3(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    system_delay: f64,
    opts: &OracleOptions,
) -> Result<BruteForce, OracleError> {
    let mut table = Vec::new();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for tuple in tuples(cfg.catalog.len(), devices.len())? {
        let crs = tuple.iter().map(|&i| cfg.catalog[i].ratio).collect();
        let instance = P4Instance::new(cfg, devices, crs, system_delay)?.with_threshold_tol(opts.threshold_tol);
        let value = match oracle_solve_p4(&instance, opts) {
            Ok(sol) => Some(sol.sum_time_share),
            Err(P4Error::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        if let Some(v) = value {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((tuple.clone(), v));
            }
        }
        table.push((tuple, value));
    }
    Ok(BruteForce { best, table })
}

/// Smallest feasible delay found by a uniform grid followed by bisection
/// inside the first feasible cell, to relative width `rel_tol`.
pub fn oracle_min_delay(
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    rel_tol: f64,
    opts: &OracleOptions,
) -> Result<(f64, BruteForce), OracleError> {
    let feasible = |t: f64| brute_force_p3(cfg, devices, t, opts);
    // any feasible delay is above the slowest encoder, and doubling finds one
    let floor = devices
        .iter()
        .map(|d| crate::model::local_latency(cfg, d))
        .fold(0.0, f64::max);
    let mut hi = 2.0 * floor.max(1e-3);
    let mut witness = feasible(hi)?;
    let mut doublings = 0;
    while !witness.feasible() {
        doublings += 1;
        if doublings > 64 {
            return Err(OracleError::NoFeasibleDelay);
        }
        hi *= 2.0;
        witness = feasible(hi)?;
    }
    let mut lo = floor;
    let n = opts.grid_resolution;
    for i in 1..n {
        let t = floor + (hi - floor) * i as f64 / n as f64;
        let probe = feasible(t)?;
        if probe.feasible() {
            hi = t;
            witness = probe;
            break;
        }
        lo = t;
    }
    while (hi - lo) / hi > rel_tol {
        let mid = 0.5 * (lo + hi);
        let probe = feasible(mid)?;
        if probe.feasible() {
            hi = mid;
            witness = probe;
        } else {
            lo = mid;
        }
    }
    Ok((hi, witness))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device(images: u32, local_ghz: f64, distance_m: f64, eta: f64) -> DeviceProfile {
        DeviceProfile { image_count: images, local_cpu_hz: local_ghz * 1e9, tx_power_w: 0.1, distance_m, ssim_req: eta }
    }

    #[test]
    fn enumeration_order() {
        let t = tuples(3, 2).unwrap();
        assert_eq!(t.len(), 9);
        assert_eq!(t[0], vec![0, 0]);
        assert_eq!(t[1], vec![0, 1]);
        assert_eq!(t[8], vec![2, 2]);
        assert!(matches!(tuples(4, 9), Err(OracleError::SearchSpaceTooLarge { tuples: 262_144 })));
    }

    #[test]
    fn single_device_enumerates_catalog() {
        let cfg = SystemConfig::default();
        let bf = brute_force_p3(&cfg, &[device(3, 1.2, 50.0, 0.85)], 0.5, &OracleOptions::default()).unwrap();
        assert_eq!(bf.table.len(), 4);
        let (best, v) = bf.best.unwrap();
        let min = bf.table.iter().filter_map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        assert_eq!(v, min);
        assert_eq!(bf.table[best[0]].1, Some(v));
    }

    #[test]
    fn symmetric_devices_pick_symmetric_tuple() {
        let cfg = SystemConfig::default();
        let devs = vec![device(4, 1.5, 60.0, 0.86); 2];
        let bf = brute_force_p3(&cfg, &devs, 0.8, &OracleOptions::default()).unwrap();
        let (best, _) = bf.best.unwrap();
        assert_eq!(best[0], best[1]);
    }
}
