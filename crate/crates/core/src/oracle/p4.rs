//! Numerical solver of the fixed-compression subproblem that does not use the
//! closed form, and KKT residuals for checking a candidate solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OracleOptions;
use crate::kkt::{build_solution, DeviceLoad, Infeasibility, KktPoint, P4Error, P4Instance, P4Solution};
use crate::model::{decode_latency, local_latency, transmit_latency, DeviceProfile, SystemConfig};

/// One device's time share as a function of its edge rate once its latency
/// is pinned to the deadline: `τ(f) = X f / (s f - Y)` for `f > Y/s`.
#[derive(Debug, Clone, Copy)]
struct Pinned {
    x: f64,
    y: f64,
    s: f64,
}

impl Pinned {
    fn floor(&self) -> f64 {
        self.y / self.s
    }

    fn tau(&self, f: f64) -> f64 {
        self.x * f / (self.s * f - self.y)
    }

    fn dtau(&self, f: f64) -> f64 {
        let den = self.s * f - self.y;
        -self.x * self.y / (den * den)
    }
}

/// Minimizes `Σ τ_k(f_k)` over `Σ f_k = F` by exact line search along the
/// pair of coordinates with the largest derivative gap.
fn descend(pins: &[Pinned], mut f: Vec<f64>, opts: &OracleOptions) -> Vec<f64> {
    if pins.len() < 2 {
        return f;
    }
    for _ in 0..opts.max_iters {
        let grads: Vec<f64> = pins.iter().zip(&f).map(|(p, &fk)| p.dtau(fk)).collect();
        let (mut i, mut j) = (0, 0);
        for k in 1..grads.len() {
            if grads[k] < grads[i] {
                i = k;
            }
            if grads[k] > grads[j] {
                j = k;
            }
        }
        if grads[j] - grads[i] <= opts.tolerance * grads[i].abs() {
            break;
        }
        // move δ of edge rate from j to i; the slope rises from negative to +∞
        let slope = |d: f64| pins[i].dtau(f[i] + d) - pins[j].dtau(f[j] - d);
        let (mut lo, mut hi) = (0.0, f[j] - pins[j].floor());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == 0.0 {
            break;
        }
        f[i] += lo;
        f[j] -= lo;
    }
    f
}

fn pins_for(cfg: &SystemConfig, devices: &[DeviceProfile], crs: &[f64], thresholds: &[f64], t: f64) -> Result<Vec<Pinned>, P4Error> {
    let mut pins = Vec::with_capacity(devices.len());
    for (k, ((dev, &cr), &g)) in devices.iter().zip(crs).zip(thresholds).enumerate() {
        let local_s = local_latency(cfg, dev);
        let s = t - local_s;
        if !(s > 0.0) {
            return Err(P4Error::Infeasible(Infeasibility::NoTimeAfterEncoding { device: k, local_s }));
        }
        pins.push(Pinned {
            x: transmit_latency(cfg, dev, cr, g, 1.0)?,
            y: decode_latency(cfg, dev, 1.0)?,
            s,
        });
    }
    let required: f64 = pins.iter().map(Pinned::floor).sum();
    if !(required < cfg.edge_cpu_hz) {
        return Err(P4Error::Infeasible(Infeasibility::EdgeCpuExhausted {
            required_hz: required,
            available_hz: cfg.edge_cpu_hz,
        }));
    }
    Ok(pins)
}

/// Solves the fixed-compression subproblem numerically.
///
/// Each latency constraint is pinned to the deadline, which leaves a convex
/// separable problem in the edge rates on a simplex. Several seeded starting
/// points are descended and the best is kept.
pub fn oracle_solve_p4(instance: &P4Instance<'_>, opts: &OracleOptions) -> Result<P4Solution, P4Error> {
    opts.validate().map_err(P4Error::Invalid)?;
    let cfg = instance.cfg;
    let thresholds = instance.thresholds()?;
    let pins = pins_for(cfg, instance.devices, &instance.crs, &thresholds, instance.system_delay)?;
    let floors: Vec<f64> = pins.iter().map(Pinned::floor).collect();
    let spare = cfg.edge_cpu_hz - floors.iter().sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..opts.starts {
        let weights: Vec<f64> = if start == 0 {
            vec![1.0; pins.len()]
        } else {
            (0..pins.len()).map(|_| rng.random_range(0.05..1.0)).collect()
        };
        let total: f64 = weights.iter().sum();
        let f0 = if pins.len() == 1 {
            vec![cfg.edge_cpu_hz]
        } else {
            floors.iter().zip(&weights).map(|(fl, w)| fl + spare * w / total).collect()
        };
        let f = descend(&pins, f0, opts);
        let value: f64 = pins.iter().zip(&f).map(|(p, &fk)| p.tau(fk)).sum();
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, f));
        }
    }
    let (sum_time_share, edge) = best.expect("at least one start");
    let time_shares: Vec<f64> = pins.iter().zip(&edge).map(|(p, &fk)| p.tau(fk)).collect();
    let mu = -pins.iter().zip(&edge).map(|(p, &fk)| p.dtau(fk)).sum::<f64>() / pins.len() as f64;
    let loads = instance.loads(&thresholds);
    let point = KktPoint { time_shares, edge_cpu_hz: edge, mu, sum_time_share };
    Ok(build_solution(cfg, instance.devices, &loads, &point, instance.system_delay)?)
}

/// Residuals of the KKT system at a candidate solution.
///
/// With `λ_k = τ_k²/X_k` taken from stationarity in `τ_k`, the remaining
/// conditions are stationarity in `f_k` (`λ_k Y_k / f_k² = μ`), tightness of
/// every latency constraint, and exhaustion of the edge budget.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    /// `|λ_k Y_k / f_k² - μ| / |μ|` per device.
    pub stationarity: Vec<f64>,
    /// `|t_k - T| / T` per device.
    pub tightness: Vec<f64>,
    /// `|Σ f_k - F| / F`.
    pub budget: f64,
    /// Smallest of `μ` and the `λ_k`; negative values break dual feasibility.
    pub min_multiplier: f64,
}

impl KktResiduals {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_tightness(&self) -> f64 {
        self.tightness.iter().copied().fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(cfg: &SystemConfig, devices: &[DeviceProfile], solution: &P4Solution) -> Result<KktResiduals, P4Error> {
    let t = solution.system_delay;
    let mu = solution.mu;
    let mut stationarity = Vec::with_capacity(devices.len());
    let mut tightness = Vec::with_capacity(devices.len());
    let mut min_multiplier = mu;
    for (dev, row) in devices.iter().zip(&solution.allocation.rows) {
        let d = row.decision;
        let x = transmit_latency(cfg, dev, d.cr, d.threshold, 1.0)?;
        let y = decode_latency(cfg, dev, 1.0)?;
        let lambda = d.time_share * d.time_share / x;
        min_multiplier = min_multiplier.min(lambda);
        stationarity.push((lambda * y / (d.edge_cpu_hz * d.edge_cpu_hz) - mu).abs() / mu.abs());
        let total = local_latency(cfg, dev)
            + transmit_latency(cfg, dev, d.cr, d.threshold, d.time_share)?
            + decode_latency(cfg, dev, d.edge_cpu_hz)?;
        tightness.push((total - t).abs() / t);
    }
    let budget = (solution.allocation.total_edge_cpu() - cfg.edge_cpu_hz).abs() / cfg.edge_cpu_hz;
    Ok(KktResiduals { stationarity, tightness, budget, min_multiplier })
}

/// Loads of an instance recomputed from the model latencies, for callers
/// that want to cross-check [`DeviceLoad`].
pub fn loads_from_model(instance: &P4Instance<'_>) -> Result<Vec<DeviceLoad>, P4Error> {
    let thresholds = instance.thresholds()?;
    instance
        .devices
        .iter()
        .zip(&instance.crs)
        .zip(&thresholds)
        .map(|((dev, &cr), &g)| {
            Ok(DeviceLoad {
                cr,
                threshold: g,
                local_s: local_latency(instance.cfg, dev),
                transmit_load: transmit_latency(instance.cfg, dev, cr, g, 1.0)?,
                decode_load: decode_latency(instance.cfg, dev, 1.0)?,
            })
        })
        .collect()
}
