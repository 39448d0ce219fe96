//! JSON configuration documents.
//!
//! ```json
//! {
//!   "system": { "noise_power_dbm": -80, "edge_cpu_percent": "200%" },
//!   "scenario": { "num_devices": 5, "seed": 7, "distance_m": [10, 100] },
//!   "devices": [ { "image_count": 3, "local_cpu_hz": 1.5e9, "tx_power_w": 0.1,
//!                  "distance_m": 40, "ssim_req": 0.85 } ]
//! }
//! ```
//!
//! Every section and field is optional and falls back to the reference
//! deployment. Units are part of the field names. Noise is given by exactly
//! one of `noise_power_w` and `noise_power_dbm`, the edge budget by at most
//! one of `edge_cpu_hz` and `edge_cpu_percent` (percent of a 4.9 GHz core,
//! as a number or a string like `"200%"`). When `devices` is present it
//! replaces the random draw.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::scenario::{generate_scenario, prefixed, Range, ScenarioSpec};
use crate::model::{CatalogEntry, DeviceProfile, ModelError, SystemConfig, CORE_HZ};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Percent {
    Number(f64),
    Text(String),
}

impl Percent {
    fn value(&self) -> Result<f64, ModelError> {
        let bad = |s: &str| ModelError::invalid("system.edge_cpu_percent", format!("expected a percentage like \"200%\", got {s:?}"));
        match self {
            Percent::Number(v) => Ok(*v),
            Percent::Text(s) => s.trim().trim_end_matches('%').trim().parse().map_err(|_| bad(s)),
        }
    }
}

/// Converts a `"250%"`-style budget to cycles per second.
pub fn parse_edge_cpu_percent(text: &str) -> Result<f64, ModelError> {
    Ok(Percent::Text(text.into()).value()? / 100.0 * CORE_HZ)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    num_subcarriers: Option<u32>,
    symbol_duration_s: Option<f64>,
    noise_power_w: Option<f64>,
    noise_power_dbm: Option<f64>,
    path_loss_exponent: Option<f64>,
    edge_cpu_hz: Option<f64>,
    edge_cpu_percent: Option<Percent>,
    image_height: Option<u32>,
    image_width: Option<u32>,
    encode_cycles_per_pixel: Option<f64>,
    decode_cycles_per_pixel: Option<f64>,
    catalog: Option<Vec<CatalogEntry>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    num_devices: Option<usize>,
    seed: Option<u64>,
    image_count: Option<Range<u32>>,
    ssim_req: Option<Range<f64>>,
    local_cpu_hz: Option<Range<f64>>,
    distance_m: Option<Range<f64>>,
    tx_power_w: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    system: Option<SystemSection>,
    scenario: Option<ScenarioSection>,
    devices: Option<Vec<DeviceProfile>>,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedConfig {
    pub scenario: ScenarioSpec,
    /// Explicit devices, overriding the random draw.
    pub devices: Option<Vec<DeviceProfile>>,
}

impl LoadedConfig {
    pub fn system(&self) -> &SystemConfig {
        &self.scenario.system
    }

    /// Explicit devices when given, otherwise a draw from the scenario.
    pub fn devices(&self) -> Result<Vec<DeviceProfile>, ModelError> {
        match &self.devices {
            Some(d) => Ok(d.clone()),
            None => Ok(generate_scenario(&self.scenario)?.1),
        }
    }
}

fn build_system(s: SystemSection) -> Result<SystemConfig, ModelError> {
    let mut cfg = SystemConfig::default();
    macro_rules! take {
        ($($field:ident),*) => { $( if let Some(v) = s.$field { cfg.$field = v; } )* };
    }
    take!(
        num_subcarriers,
        symbol_duration_s,
        path_loss_exponent,
        image_height,
        image_width,
        encode_cycles_per_pixel,
        decode_cycles_per_pixel,
        catalog
    );
    cfg.noise_power_w = match (s.noise_power_w, s.noise_power_dbm) {
        (Some(_), Some(_)) => {
            return Err(ModelError::invalid("system.noise_power_w", "give only one of noise_power_w and noise_power_dbm"))
        }
        (Some(w), None) => w,
        (None, Some(dbm)) => 10f64.powf((dbm - 30.0) / 10.0),
        (None, None) => cfg.noise_power_w,
    };
    cfg.edge_cpu_hz = match (s.edge_cpu_hz, s.edge_cpu_percent) {
        (Some(_), Some(_)) => {
            return Err(ModelError::invalid("system.edge_cpu_hz", "give only one of edge_cpu_hz and edge_cpu_percent"))
        }
        (Some(hz), None) => hz,
        (None, Some(p)) => p.value()? / 100.0 * CORE_HZ,
        (None, None) => cfg.edge_cpu_hz,
    };
    cfg.validate().map_err(|e| prefixed("system", e))?;
    Ok(cfg)
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: match e.path().to_string() {
            p if p == "." => "<root>".into(),
            p => p,
        },
        message: e.inner().to_string(),
    })?;

    let system = build_system(doc.system.unwrap_or_default())?;
    let sc = doc.scenario.unwrap_or_default();
    let defaults = ScenarioSpec::default();
    let scenario = ScenarioSpec {
        num_devices: sc.num_devices.unwrap_or(doc.devices.as_ref().map_or(defaults.num_devices, Vec::len)),
        seed: sc.seed.unwrap_or(defaults.seed),
        system,
        image_count: sc.image_count.unwrap_or(defaults.image_count),
        ssim_req: sc.ssim_req.unwrap_or(defaults.ssim_req),
        local_cpu_hz: sc.local_cpu_hz.unwrap_or(defaults.local_cpu_hz),
        distance_m: sc.distance_m.unwrap_or(defaults.distance_m),
        tx_power_w: sc.tx_power_w.unwrap_or(defaults.tx_power_w),
    };
    scenario.validate()?;
    if let Some(devices) = &doc.devices {
        if devices.is_empty() {
            return Err(ModelError::invalid("devices", "must list at least one device").into());
        }
        for (k, d) in devices.iter().enumerate() {
            d.validate(&scenario.system, k)?;
        }
    }
    Ok(LoadedConfig { scenario, devices: doc.devices })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Parse { path, .. } => path,
            ConfigError::Invalid(ModelError::InvalidConfig { field, .. }) => field,
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn empty_document_is_the_reference_deployment() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, LoadedConfig::default());
        assert_eq!(c.devices().unwrap().len(), 5);
    }

    #[test]
    fn units_and_overrides() {
        let c = parse_config(
            r#"{"system": {"noise_power_dbm": -90, "edge_cpu_percent": "300%", "num_subcarriers": 128},
                "scenario": {"num_devices": 3, "seed": 9, "distance_m": [20, 30]}}"#,
        )
        .unwrap();
        assert!((c.system().noise_power_w / 1e-12 - 1.0).abs() < 1e-12);
        assert!((c.system().edge_cpu_hz - 3.0 * CORE_HZ).abs() < 1.0);
        assert_eq!(c.system().num_subcarriers, 128);
        let devs = c.devices().unwrap();
        assert_eq!(devs.len(), 3);
        assert!(devs.iter().all(|d| (20.0..30.0).contains(&d.distance_m)));

        let c = parse_config(r#"{"system": {"edge_cpu_percent": 150, "noise_power_dbm": -80}}"#).unwrap();
        assert!((c.system().edge_cpu_hz - 1.5 * CORE_HZ).abs() < 1.0);
        assert!((c.system().noise_power_w / 1e-11 - 1.0).abs() < 1e-12);
        assert_eq!(parse_edge_cpu_percent("200%").unwrap(), 2.0 * CORE_HZ);
    }

    #[test]
    fn explicit_devices() {
        let c = parse_config(
            r#"{"devices": [{"image_count": 3, "local_cpu_hz": 1.5e9, "tx_power_w": 0.1, "distance_m": 40, "ssim_req": 0.85}]}"#,
        )
        .unwrap();
        assert_eq!(c.scenario.num_devices, 1);
        assert_eq!(c.devices().unwrap()[0].image_count, 3);
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = parse_config(r#"{"system": {"noise_power_w": 1e-11, "noise_power_dbm": -80}}"#).unwrap_err();
        assert_eq!(field_of(e), "system.noise_power_w");
        let e = parse_config(r#"{"system": {"edge_cpu_hz": 1e9, "edge_cpu_percent": "100%"}}"#).unwrap_err();
        assert_eq!(field_of(e), "system.edge_cpu_hz");
        let e = parse_config(r#"{"system": {"edge_cpu_percent": "lots"}}"#).unwrap_err();
        assert_eq!(field_of(e), "system.edge_cpu_percent");
        let e = parse_config(r#"{"system": {"catalog": [{"ratio": 0.5, "logistic": {"a1": 0.3, "a2": 0.9, "c1": "x", "c2": 0}}]}}"#)
            .unwrap_err();
        assert_eq!(field_of(e), "system.catalog[0].logistic.c1");
        let e = parse_config(r#"{"system": {"bandwidth": 1}}"#).unwrap_err();
        assert_eq!(field_of(e), "system.bandwidth");
        let e = parse_config(
            r#"{"system": {"catalog": [{"ratio": 0.25, "logistic": {"a1": 0.3, "a2": 0.9, "c1": 0.2, "c2": 0}},
                                       {"ratio": 0.5, "logistic": {"a1": 0.3, "a2": 0.9, "c1": 0.2, "c2": 0}}]}}"#,
        )
        .unwrap_err();
        assert_eq!(field_of(e), "system.catalog[1].ratio");
        let e = parse_config(
            r#"{"devices": [{"image_count": 3, "local_cpu_hz": 1.5e9, "tx_power_w": 0.1, "distance_m": -4, "ssim_req": 0.85}]}"#,
        )
        .unwrap_err();
        assert_eq!(field_of(e), "devices[0].distance_m");
        let e = parse_config(r#"{"scenario": {"ssim_req": [0.9, 0.8]}}"#).unwrap_err();
        assert_eq!(field_of(e), "scenario.ssim_req");
        assert!(matches!(parse_config("[1,"), Err(ConfigError::Parse { .. })));
    }
}
