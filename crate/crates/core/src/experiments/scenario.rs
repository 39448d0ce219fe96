use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{DeviceProfile, ModelError, SystemConfig};

/// Closed range `[min, max]` for one device attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]", bound(serialize = "T: Copy + Serialize", deserialize = "T: Copy + Deserialize<'de>"))]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: Copy> From<[T; 2]> for Range<T> {
    fn from([min, max]: [T; 2]) -> Self {
        Range { min, max }
    }
}

impl<T: Copy> From<Range<T>> for [T; 2] {
    fn from(r: Range<T>) -> Self {
        [r.min, r.max]
    }
}

/// Random deployment: system constants plus i.i.d. device draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub num_devices: usize,
    pub seed: u64,
    pub system: SystemConfig,
    pub image_count: Range<u32>,
    pub ssim_req: Range<f64>,
    pub local_cpu_hz: Range<f64>,
    pub distance_m: Range<f64>,
    pub tx_power_w: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            num_devices: 5,
            seed: 0,
            system: SystemConfig::default(),
            image_count: Range { min: 1, max: 10 },
            ssim_req: Range { min: 0.8, max: 0.93 },
            local_cpu_hz: Range { min: 1e9, max: 2e9 },
            distance_m: Range { min: 10.0, max: 100.0 },
            tx_power_w: 0.1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.system.validate().map_err(|e| prefixed("system", e))?;
        if self.num_devices == 0 {
            return Err(ModelError::invalid("scenario.num_devices", "must be at least 1"));
        }
        if !(self.image_count.min >= 1 && self.image_count.min <= self.image_count.max) {
            return Err(ModelError::invalid("scenario.image_count", "need 1 <= min <= max"));
        }
        for (name, r) in [
            ("scenario.ssim_req", self.ssim_req),
            ("scenario.local_cpu_hz", self.local_cpu_hz),
            ("scenario.distance_m", self.distance_m),
        ] {
            if !(r.min > 0.0 && r.min <= r.max && r.max.is_finite()) {
                return Err(ModelError::invalid(name, format!("need 0 < min <= max, got [{}, {}]", r.min, r.max)));
            }
        }
        if self.ssim_req.max >= 1.0 {
            return Err(ModelError::invalid("scenario.ssim_req", "max must be below 1"));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            return Err(ModelError::invalid("scenario.tx_power_w", "must be positive"));
        }
        Ok(())
    }

    pub fn with_devices(&self, num_devices: usize) -> Self {
        ScenarioSpec { num_devices, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec { seed, ..self.clone() }
    }
}

pub(crate) fn prefixed(prefix: &str, e: ModelError) -> ModelError {
    match e {
        ModelError::InvalidConfig { field, reason } => ModelError::InvalidConfig { field: format!("{prefix}.{field}"), reason },
        other => other,
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.min == r.max {
        r.min
    } else {
        rng.random_range(r.min..r.max)
    }
}

/// Draws the devices of a scenario.
///
/// Devices are drawn one after another from a single stream, so the
/// scenario with `K` devices is a prefix of the one with `K + 1`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(SystemConfig, Vec<DeviceProfile>), ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let devices = (0..spec.num_devices)
        .map(|_| DeviceProfile {
            image_count: rng.random_range(spec.image_count.min..=spec.image_count.max),
            ssim_req: uniform(&mut rng, spec.ssim_req),
            local_cpu_hz: uniform(&mut rng, spec.local_cpu_hz),
            distance_m: uniform(&mut rng, spec.distance_m),
            tx_power_w: spec.tx_power_w,
        })
        .collect::<Vec<_>>();
    for (k, dev) in devices.iter().enumerate() {
        dev.validate(&spec.system, k)?;
    }
    Ok((spec.system.clone(), devices))
}

/// Seed of trial `trial` under `base`, independent of the sweep point.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ trial.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_bounds() {
        let spec = ScenarioSpec { num_devices: 50, seed: 11, ..Default::default() };
        let (_, a) = generate_scenario(&spec).unwrap();
        let (_, b) = generate_scenario(&spec).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for d in &a {
            assert!((1..=10).contains(&d.image_count));
            assert!((0.8..0.93).contains(&d.ssim_req));
            assert!((1e9..2e9).contains(&d.local_cpu_hz));
            assert!((10.0..100.0).contains(&d.distance_m));
            assert_eq!(d.tx_power_w, 0.1);
        }
        let (_, c) = generate_scenario(&spec.with_seed(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn smaller_scenarios_are_prefixes() {
        let spec = ScenarioSpec { num_devices: 8, seed: 3, ..Default::default() };
        let (_, all) = generate_scenario(&spec).unwrap();
        for k in 1..8 {
            let (_, part) = generate_scenario(&spec.with_devices(k)).unwrap();
            assert_eq!(part[..], all[..k]);
        }
    }

    #[test]
    fn reference_constants() {
        let (cfg, _) = generate_scenario(&ScenarioSpec::default()).unwrap();
        let ratios: Vec<f64> = cfg.ratios().collect();
        assert_eq!(ratios, vec![1.0 / 6.0, 1.0 / 8.0, 1.0 / 12.0, 1.0 / 24.0]);
        // -80 dBm
        assert_eq!(cfg.noise_power_w, 1e-11);
        assert_eq!(cfg.num_subcarriers, 256);
        assert_eq!(cfg.path_loss_exponent, 3.0);
        assert_eq!(cfg.symbol_duration_s, 1.0 / 15_000.0);
    }

    #[test]
    fn invalid_specs() {
        let bad = ScenarioSpec { num_devices: 0, ..Default::default() };
        assert!(generate_scenario(&bad).is_err());
        let bad = ScenarioSpec { distance_m: Range { min: 50.0, max: 10.0 }, ..Default::default() };
        match generate_scenario(&bad).unwrap_err() {
            ModelError::InvalidConfig { field, .. } => assert_eq!(field, "scenario.distance_m"),
            e => panic!("{e:?}"),
        }
        let mut bad = ScenarioSpec::default();
        bad.system.num_subcarriers = 0;
        match generate_scenario(&bad).unwrap_err() {
            ModelError::InvalidConfig { field, .. } => assert_eq!(field, "system.num_subcarriers"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }
}
