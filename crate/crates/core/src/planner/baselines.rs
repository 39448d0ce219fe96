use super::{prepare, LoadTable, PlanError, PlanReport, PlanStatus, SolverOptions, Strategy, WorkCounters};
use crate::model::{end_to_end_latency, Allocation, AllocationRow, Decision, DeviceProfile, SystemConfig};

/// Threshold used by the fixed-threshold baseline unless the SSIM
/// requirement needs more.
pub const FIX_G_THRESHOLD: f64 = 0.5;

/// Equal frame and edge CPU shares with a per-device `(cr, threshold)`.
fn equal_split(
    strategy: Strategy,
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    choices: &[(f64, f64)],
    counters: WorkCounters,
) -> Result<PlanReport, PlanError> {
    let k = devices.len() as f64;
    let rows = devices
        .iter()
        .zip(choices)
        .map(|(dev, &(cr, threshold))| {
            let decision = Decision {
                cr,
                threshold,
                time_share: 1.0 / k,
                edge_cpu_hz: cfg.edge_cpu_hz / k,
            };
            Ok(AllocationRow {
                decision,
                latency: end_to_end_latency(cfg, dev, &decision)?,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    let allocation = Allocation { rows };
    Ok(PlanReport {
        strategy,
        status: PlanStatus::Solved,
        system_delay_s: allocation.max_latency(),
        allocation,
        trace: Vec::new(),
        counters,
    })
}

fn infeasible(strategy: Strategy, device: usize, cr: f64) -> PlanReport {
    PlanReport {
        strategy,
        status: PlanStatus::Infeasible {
            reason: format!("device {device} cannot reach its SSIM requirement at compression ratio {cr}"),
        },
        system_delay_s: f64::NAN,
        allocation: Allocation::default(),
        trace: Vec::new(),
        counters: WorkCounters::default(),
    }
}

fn ranking_work(table: &LoadTable) -> WorkCounters {
    WorkCounters {
        p4_solves: 0,
        cr_tuples: table.loads.iter().map(|l| l.len() as u64).sum(),
    }
}

/// Equal shares; each device runs its best ratio at the minimum threshold.
pub fn solve_equ(cfg: &SystemConfig, devices: &[DeviceProfile], opts: &SolverOptions) -> Result<PlanReport, PlanError> {
    let table = prepare(cfg, devices, opts)?;
    let choices: Vec<(f64, f64)> = table
        .best_indices()?
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let load = table.load(k, i).expect("best index is satisfiable");
            (load.cr, load.threshold)
        })
        .collect();
    equal_split(Strategy::Equ, cfg, devices, &choices, ranking_work(&table))
}

fn fixed_ratio(
    strategy: Strategy,
    cfg: &SystemConfig,
    devices: &[DeviceProfile],
    opts: &SolverOptions,
    threshold: impl Fn(f64) -> f64,
) -> Result<PlanReport, PlanError> {
    let table = prepare(cfg, devices, opts)?;
    let cr = cfg.max_ratio();
    let index = cfg.catalog_index(cr).expect("max ratio is in the catalog");
    let mut choices = Vec::with_capacity(devices.len());
    for k in 0..devices.len() {
        match table.load(k, index) {
            Some(load) => choices.push((cr, threshold(load.threshold))),
            None => return Ok(infeasible(strategy, k, cr)),
        }
    }
    let work = WorkCounters { p4_solves: 0, cr_tuples: devices.len() as u64 };
    equal_split(strategy, cfg, devices, &choices, work)
}

/// Equal shares at the largest catalog ratio and the minimum threshold.
pub fn solve_fix_o(cfg: &SystemConfig, devices: &[DeviceProfile], opts: &SolverOptions) -> Result<PlanReport, PlanError> {
    fixed_ratio(Strategy::FixO, cfg, devices, opts, |d| d)
}

/// Equal shares at the largest catalog ratio and threshold
/// `max(FIX_G_THRESHOLD, d)`.
pub fn solve_fix_g(cfg: &SystemConfig, devices: &[DeviceProfile], opts: &SolverOptions) -> Result<PlanReport, PlanError> {
    fixed_ratio(Strategy::FixG, cfg, devices, opts, |d| d.max(FIX_G_THRESHOLD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::transmit_latency;
    use crate::planner::tests::device;
    use crate::planner::init_bounds;

    #[test]
    fn equal_shares() {
        let cfg = SystemConfig::default();
        let devs = vec![device(3, 1.2, 30.0, 0.84), device(7, 1.7, 80.0, 0.9)];
        let r = solve_equ(&cfg, &devs, &SolverOptions::default()).unwrap();
        for row in &r.allocation.rows {
            assert_eq!(row.decision.time_share, 0.5);
            assert_eq!(row.decision.edge_cpu_hz, cfg.edge_cpu_hz / 2.0);
        }
        assert!(r.trace.is_empty());
    }

    #[test]
    fn identical_devices_hit_upper_bound() {
        let cfg = SystemConfig::default();
        let devs = vec![device(5, 1.5, 55.0, 0.87); 3];
        let opts = SolverOptions::default();
        let (_, hi) = init_bounds(&cfg, &devs, &opts).unwrap();
        let equ = solve_equ(&cfg, &devs, &opts).unwrap();
        assert!(((equ.system_delay_s - hi) / hi).abs() < 1e-12);
    }

    #[test]
    fn fixed_threshold_floor() {
        let cfg = SystemConfig::default();
        // close and undemanding: minimum threshold far below the floor
        let devs = vec![device(2, 1.0, 12.0, 0.8), device(2, 1.0, 15.0, 0.8)];
        let opts = SolverOptions::default();
        let fo = solve_fix_o(&cfg, &devs, &opts).unwrap();
        let fg = solve_fix_g(&cfg, &devs, &opts).unwrap();
        for (a, b) in fo.allocation.rows.iter().zip(&fg.allocation.rows) {
            assert_eq!(a.decision.cr, cfg.max_ratio());
            assert!(a.decision.threshold < FIX_G_THRESHOLD);
            assert_eq!(b.decision.threshold, FIX_G_THRESHOLD);
            let want = transmit_latency(&cfg, &devs[0], cfg.max_ratio(), 0.5, 0.5).unwrap();
            assert!(((b.latency.transmit_s - want) / want).abs() < 1e-14);
        }
        assert!(fg.system_delay_s >= fo.system_delay_s);
    }

    #[test]
    fn fixed_threshold_respects_requirement() {
        let cfg = SystemConfig::default();
        // far and demanding: minimum threshold above the floor is kept
        let devs = vec![device(2, 1.0, 100.0, 0.93)];
        let fo = solve_fix_o(&cfg, &devs, &SolverOptions::default()).unwrap();
        let fg = solve_fix_g(&cfg, &devs, &SolverOptions::default()).unwrap();
        let d = fo.allocation.rows[0].decision.threshold;
        assert!(d > FIX_G_THRESHOLD);
        assert_eq!(fg.allocation.rows[0].decision.threshold, d);
    }

    #[test]
    fn unsatisfiable_at_largest_ratio_is_a_status() {
        let mut cfg = SystemConfig::default();
        // the largest ratio gets a curve that tops out below the requirement
        cfg.catalog[0].logistic.a2 = 0.85;
        let devs = vec![device(2, 1.0, 40.0, 0.86)];
        let opts = SolverOptions::default();
        let fo = solve_fix_o(&cfg, &devs, &opts).unwrap();
        assert!(matches!(fo.status, PlanStatus::Infeasible { .. }));
        assert!(fo.system_delay_s.is_nan());
        assert!(!solve_fix_g(&cfg, &devs, &opts).unwrap().is_solved());
        assert!(solve_equ(&cfg, &devs, &opts).unwrap().is_solved());
    }
}
