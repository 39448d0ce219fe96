//! Truncated channel inversion over Rayleigh fading.
//!
//! A sub-carrier is used only when its gain `|h|^2` clears the threshold `g`,
//! and the transmitter inverts the channel so every delivered symbol arrives
//! with the same power `ρ`. With `|h|^2 ~ Exp(1)` the long-term power budget
//! `P/M` per sub-carrier pins `ρ` through `E1(g)`.

use super::{exp_integral_e1, required_snr_db, DeviceProfile, LogisticParams, ModelError, SystemConfig};

/// Default relative tolerance of the threshold bisection.
pub const DEFAULT_THRESHOLD_TOL: f64 = 1e-10;

/// Fraction of sub-carriers left active, `e^{-g}`.
pub fn active_ratio(g: f64) -> Result<f64, ModelError> {
    if !(g >= 0.0) {
        return Err(ModelError::Domain {
            op: "active_ratio",
            value: g,
            requirement: "g >= 0",
        });
    }
    Ok((-g).exp())
}

fn path_gain_inv(cfg: &SystemConfig, dev: &DeviceProfile) -> f64 {
    dev.distance_m.powf(cfg.path_loss_exponent)
}

/// Largest received symbol power (watts) compatible with the power budget,
/// `P / (M r^α E1(g))`.
pub fn received_power(cfg: &SystemConfig, dev: &DeviceProfile, g: f64) -> Result<f64, ModelError> {
    if !(g > 0.0) {
        return Err(ModelError::Domain {
            op: "received_power",
            value: g,
            requirement: "g > 0",
        });
    }
    let e1 = exp_integral_e1(g)?;
    Ok(dev.tx_power_w / (cfg.m() * path_gain_inv(cfg, dev) * e1))
}

/// Received SNR in dB at threshold `g` with the tight received power.
pub fn received_snr_db(cfg: &SystemConfig, dev: &DeviceProfile, g: f64) -> Result<f64, ModelError> {
    let rho = received_power(cfg, dev, g)?;
    Ok(10.0 * (rho / cfg.noise_power_w).log10())
}

/// Ceiling on `E1(g)` under which the received SNR meets the device's SSIM
/// requirement for the curve `params`.
///
/// `c = P / (M r^α σ²) / 10^{γ_req/10}` where `γ_req` inverts the curve.
pub fn cutoff_ceiling(
    cfg: &SystemConfig,
    dev: &DeviceProfile,
    params: &LogisticParams,
) -> Result<f64, ModelError> {
    let snr_db = required_snr_db(params, dev.ssim_req)?;
    let snr_budget = dev.tx_power_w / (cfg.m() * path_gain_inv(cfg, dev) * cfg.noise_power_w);
    Ok(snr_budget / 10f64.powf(snr_db / 10.0))
}

/// Smallest threshold `d` with `E1(d) <= c`.
///
/// Bisection on `ln d`, so `rel_tol` bounds the relative error of `d`. The
/// returned point is the upper end of the final bracket and always satisfies
/// `E1(d) <= c`. When the true root lies below `f64::MIN_POSITIVE` (roughly
/// `c > 708`), `f64::MIN_POSITIVE` is returned: it satisfies the constraint and
/// `e^d` is exactly 1 in double precision, as it would be for the true root.
pub fn min_threshold(c: f64, rel_tol: f64) -> Result<f64, ModelError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(ModelError::Domain {
            op: "min_threshold",
            value: c,
            requirement: "0 < c < inf",
        });
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(ModelError::Domain {
            op: "min_threshold",
            value: rel_tol,
            requirement: "0 < rel_tol < 1",
        });
    }
    let floor = f64::MIN_POSITIVE;
    if exp_integral_e1(floor)? <= c {
        return Ok(floor);
    }
    let mut lo = floor.ln();
    let mut hi = 0.0f64;
    while exp_integral_e1(hi.exp())? > c {
        lo = hi;
        hi += 1.0;
        if hi > 7.0 {
            // E1(e^7) underflows to zero; any positive c is cleared before this.
            return Err(ModelError::Domain {
                op: "min_threshold",
                value: c,
                requirement: "c above the smallest representable E1 value",
            });
        }
    }
    while hi - lo > rel_tol {
        let mid = 0.5 * (lo + hi);
        if exp_integral_e1(mid.exp())? <= c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev(distance_m: f64) -> DeviceProfile {
        DeviceProfile {
            image_count: 1,
            local_cpu_hz: 1e9,
            tx_power_w: 0.1,
            distance_m,
            ssim_req: 0.85,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn active_ratio_values() {
        assert_eq!(active_ratio(0.0).unwrap(), 1.0);
        assert!((active_ratio(std::f64::consts::LN_2).unwrap() - 0.5).abs() < 1e-15);
        assert!((active_ratio(0.5).unwrap() - 0.606_530_66).abs() < 1e-9);
        assert!(active_ratio(-0.1).is_err());
    }

    #[test]
    fn received_power_values() {
        let cfg = SystemConfig::default();
        // 0.1 / (256 · E1(1))
        let rho = received_power(&cfg, &dev(1.0), 1.0).unwrap();
        assert!(rel(rho, 1.780_554_264_72e-3) < 1e-10, "{rho}");
        let far = received_power(&cfg, &dev(2.0), 1.0).unwrap();
        assert!(rel(rho / far, 8.0) < 1e-14);
        // 0.1 / (256 · 50^3 · E1(0.5))
        let rho = received_power(&cfg, &dev(50.0), 0.5).unwrap();
        assert!(rel(rho, 5.582_614_166_09e-9) < 1e-10, "{rho}");
        assert!(received_power(&cfg, &dev(1.0), 0.0).is_err());
    }

    #[test]
    fn received_power_increases_with_threshold() {
        let cfg = SystemConfig::default();
        let d = dev(30.0);
        let mut prev = 0.0;
        for i in 1..200 {
            let rho = received_power(&cfg, &d, i as f64 * 0.05).unwrap();
            assert!(rho > prev);
            prev = rho;
        }
    }

    #[test]
    fn ceiling_scaling() {
        let cfg = SystemConfig::default();
        let d = dev(50.0);
        // the curve's midpoint sits at 0 dB when c2 = 0
        let at_zero = LogisticParams::new(0.8, 0.9, 0.2, 0.0).unwrap();
        let c0 = cutoff_ceiling(&cfg, &d, &at_zero).unwrap();
        let budget = 0.1 / (256.0 * 125_000.0 * 1e-11);
        assert!(rel(c0, budget) < 1e-14);
        assert!(rel(budget, 312.5) < 1e-14);

        // shifting the midpoint to +10 dB divides the ceiling by ten
        let at_ten = LogisticParams::new(0.8, 0.9, 0.2, -2.0).unwrap();
        let c10 = cutoff_ceiling(&cfg, &d, &at_ten).unwrap();
        assert!(rel(c0 / c10, 10.0) < 1e-12);

        // +20 dB: 312.5 / 100
        let at_twenty = LogisticParams::new(0.8, 0.9, 0.2, -4.0).unwrap();
        let c20 = cutoff_ceiling(&cfg, &d, &at_twenty).unwrap();
        assert!(rel(c20, 3.125) < 1e-12);

        let unreachable = LogisticParams::new(0.1, 0.5, 0.2, 0.0).unwrap();
        assert!(matches!(
            cutoff_ceiling(&cfg, &d, &unreachable),
            Err(ModelError::Unsatisfiable { .. })
        ));
    }

    #[test]
    fn threshold_roundtrips() {
        let c = exp_integral_e1(0.5).unwrap();
        let d = min_threshold(c, DEFAULT_THRESHOLD_TOL).unwrap();
        assert!((d - 0.5).abs() <= 2.0 * DEFAULT_THRESHOLD_TOL * 0.5);

        let d = min_threshold(0.219_383_93, DEFAULT_THRESHOLD_TOL).unwrap();
        assert!((d - 1.0).abs() < 1e-7);

        // root around e^{-500.6}: still representable
        let d = min_threshold(500.0, DEFAULT_THRESHOLD_TOL).unwrap();
        assert!(d > 0.0 && d < 1e-200);
        assert!(rel(exp_integral_e1(d).unwrap(), 500.0) < 1e-8);
    }

    #[test]
    fn threshold_below_double_range_clamps_to_feasible_floor() {
        let d = min_threshold(1e6, DEFAULT_THRESHOLD_TOL).unwrap();
        assert_eq!(d, f64::MIN_POSITIVE);
        assert!(exp_integral_e1(d).unwrap() <= 1e6);
        assert_eq!(d.exp(), 1.0);
    }

    #[test]
    fn threshold_domain() {
        assert!(min_threshold(0.0, DEFAULT_THRESHOLD_TOL).is_err());
        assert!(min_threshold(-1.0, DEFAULT_THRESHOLD_TOL).is_err());
        assert!(min_threshold(1.0, 0.0).is_err());
    }

    #[test]
    fn threshold_is_on_feasible_side() {
        for i in 0..200 {
            let c = 10f64.powf(-20.0 + 0.11 * i as f64);
            let d = min_threshold(c, DEFAULT_THRESHOLD_TOL).unwrap();
            assert!(exp_integral_e1(d).unwrap() <= c, "c = {c}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn threshold_inverse(d in 1e-6f64..50.0) {
                let c = exp_integral_e1(d).unwrap();
                let back = min_threshold(c, DEFAULT_THRESHOLD_TOL).unwrap();
                prop_assert!((back - d).abs() <= 2.0 * DEFAULT_THRESHOLD_TOL * d);
            }
        }
    }
}
