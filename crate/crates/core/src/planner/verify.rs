use serde::{Deserialize, Serialize};

use super::PlanReport;
use crate::model::{end_to_end_latency, received_snr_db, ssim_model, DeviceProfile, SystemConfig};

/// Absolute slack on the SSIM requirement and relative slack on the budgets.
const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    /// Failing devices or the offending totals; empty on success.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<ConstraintCheck>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> + '_ {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn per_device(name: &str, failures: Vec<String>) -> ConstraintCheck {
    ConstraintCheck {
        name: name.into(),
        passed: failures.is_empty(),
        detail: failures.join("; "),
    }
}

fn budget(name: &str, total: f64, limit: f64) -> ConstraintCheck {
    let passed = total <= limit * (1.0 + VERIFY_TOL);
    ConstraintCheck {
        name: name.into(),
        passed,
        detail: if passed { String::new() } else { format!("total {total:e} exceeds {limit:e}") },
    }
}

/// Rechecks every constraint of a report from the model formulas alone.
///
/// Checks, in order: `device_count`, `ssim`, `time_share_budget`,
/// `edge_cpu_budget`, `threshold_nonnegative`, `cr_in_catalog`,
/// `shares_positive`, `latency_consistent`.
pub fn verify_report(cfg: &SystemConfig, devices: &[DeviceProfile], report: &PlanReport) -> Verdict {
    let rows = &report.allocation.rows;
    let mut checks = vec![ConstraintCheck {
        name: "device_count".into(),
        passed: rows.len() == devices.len() && !rows.is_empty(),
        detail: if rows.len() == devices.len() {
            String::new()
        } else {
            format!("{} rows for {} devices", rows.len(), devices.len())
        },
    }];

    let mut ssim = Vec::new();
    let mut threshold = Vec::new();
    let mut catalog = Vec::new();
    let mut shares = Vec::new();
    let mut latency = Vec::new();
    for (k, (row, dev)) in rows.iter().zip(devices).enumerate() {
        let d = &row.decision;
        match cfg.logistic_for(d.cr) {
            None => catalog.push(format!("device {k}: ratio {} not in catalog", d.cr)),
            Some(params) => match received_snr_db(cfg, dev, d.threshold) {
                Ok(snr) => {
                    let achieved = ssim_model(params, snr);
                    if achieved < dev.ssim_req - VERIFY_TOL {
                        ssim.push(format!("device {k}: SSIM {achieved:.9} < {}", dev.ssim_req));
                    }
                }
                Err(e) => ssim.push(format!("device {k}: {e}")),
            },
        }
        if !(d.threshold >= 0.0) {
            threshold.push(format!("device {k}: threshold {}", d.threshold));
        }
        if !(d.time_share > 0.0 && d.edge_cpu_hz > 0.0) {
            shares.push(format!("device {k}: time share {}, edge cpu {}", d.time_share, d.edge_cpu_hz));
        }
        match end_to_end_latency(cfg, dev, d) {
            Ok(b) => {
                if !((b.total_s - row.latency.total_s).abs() <= VERIFY_TOL * b.total_s) {
                    latency.push(format!("device {k}: reported {} s, recomputed {} s", row.latency.total_s, b.total_s));
                }
            }
            Err(e) => latency.push(format!("device {k}: {e}")),
        }
    }
    let max = report.allocation.max_latency();
    if !((report.system_delay_s - max).abs() <= VERIFY_TOL * max) {
        latency.push(format!("system delay {} s but slowest device {} s", report.system_delay_s, max));
    }

    checks.push(per_device("ssim", ssim));
    checks.push(budget("time_share_budget", report.allocation.total_time_share(), 1.0));
    checks.push(budget("edge_cpu_budget", report.allocation.total_edge_cpu(), cfg.edge_cpu_hz));
    checks.push(per_device("threshold_nonnegative", threshold));
    checks.push(per_device("cr_in_catalog", catalog));
    checks.push(per_device("shares_positive", shares));
    checks.push(per_device("latency_consistent", latency));
    Verdict { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::device;
    use crate::planner::{solve, SolverOptions, Strategy};

    fn setup() -> (SystemConfig, Vec<DeviceProfile>, PlanReport) {
        let cfg = SystemConfig::default();
        let devs = vec![device(4, 1.3, 40.0, 0.88), device(9, 1.9, 90.0, 0.81), device(1, 1.0, 15.0, 0.92)];
        let report = solve(Strategy::Opt, &cfg, &devs, &SolverOptions::default()).unwrap();
        (cfg, devs, report)
    }

    #[test]
    fn every_strategy_passes() {
        let (cfg, devs, _) = setup();
        for s in Strategy::ALL {
            let r = solve(s, &cfg, &devs, &SolverOptions::default()).unwrap();
            let v = verify_report(&cfg, &devs, &r);
            assert!(v.passed(), "{s}: {:?}", v.failures().collect::<Vec<_>>());
            assert_eq!(v.checks.len(), 8);
        }
    }

    #[test]
    fn inflated_time_shares_break_the_frame() {
        let (cfg, devs, mut report) = setup();
        for row in &mut report.allocation.rows {
            row.decision.time_share *= 1.1;
        }
        let v = verify_report(&cfg, &devs, &report);
        assert!(!v.check("time_share_budget").unwrap().passed);
        // latencies were not recomputed either
        assert!(!v.check("latency_consistent").unwrap().passed);
        assert!(v.check("ssim").unwrap().passed);
    }

    #[test]
    fn lowered_threshold_breaks_ssim() {
        let (cfg, devs, mut report) = setup();
        report.allocation.rows[1].decision.threshold *= 0.5;
        let v = verify_report(&cfg, &devs, &report);
        let ssim = v.check("ssim").unwrap();
        assert!(!ssim.passed);
        assert!(ssim.detail.starts_with("device 1"));
    }

    #[test]
    fn structural_tampering() {
        let (cfg, devs, report) = setup();
        let mut r = report.clone();
        r.allocation.rows[0].decision.cr = 0.3;
        assert!(!verify_report(&cfg, &devs, &r).check("cr_in_catalog").unwrap().passed);
        let mut r = report.clone();
        r.allocation.rows[2].decision.edge_cpu_hz *= 2.0;
        assert!(!verify_report(&cfg, &devs, &r).check("edge_cpu_budget").unwrap().passed);
        let mut r = report.clone();
        r.allocation.rows[0].decision.threshold = -0.1;
        assert!(!verify_report(&cfg, &devs, &r).check("threshold_nonnegative").unwrap().passed);
        let mut r = report;
        r.allocation.rows.pop();
        assert!(!verify_report(&cfg, &devs, &r).check("device_count").unwrap().passed);
    }
}
