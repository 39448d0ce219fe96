use serde::{Deserialize, Serialize};

use super::{LogisticParams, ModelError};

/// Clock rate of one edge-server core; `"200%"` style budgets are multiples of it.
pub const CORE_HZ: f64 = 4.9e9;

/// One selectable compression ratio together with its SSIM-vs-SNR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub ratio: f64,
    pub logistic: LogisticParams,
}

/// System-wide constants shared by every device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_subcarriers: u32,
    pub symbol_duration_s: f64,
    pub noise_power_w: f64,
    pub path_loss_exponent: f64,
    /// Total edge decoding budget in cycles per second.
    pub edge_cpu_hz: f64,
    pub image_height: u32,
    pub image_width: u32,
    pub encode_cycles_per_pixel: f64,
    pub decode_cycles_per_pixel: f64,
    /// Strictly decreasing compression ratios, each with its logistic curve.
    pub catalog: Vec<CatalogEntry>,
}

/// Per-device parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub image_count: u32,
    pub local_cpu_hz: f64,
    pub tx_power_w: f64,
    pub distance_m: f64,
    pub ssim_req: f64,
}

impl SystemConfig {
    /// Symbols per source image, `3·H·W`.
    pub fn source_symbols(&self) -> f64 {
        3.0 * f64::from(self.image_height) * f64::from(self.image_width)
    }

    pub fn pixels(&self) -> f64 {
        f64::from(self.image_height) * f64::from(self.image_width)
    }

    /// Encoder cycles per image.
    pub fn encode_cycles(&self) -> f64 {
        self.encode_cycles_per_pixel * self.pixels()
    }

    /// Decoder cycles per image.
    pub fn decode_cycles(&self) -> f64 {
        self.decode_cycles_per_pixel * self.pixels()
    }

    pub fn m(&self) -> f64 {
        f64::from(self.num_subcarriers)
    }

    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.catalog.iter().map(|e| e.ratio)
    }

    pub fn max_ratio(&self) -> f64 {
        self.catalog[0].ratio
    }

    /// Index of `ratio` in the catalog (exact match).
    pub fn catalog_index(&self, ratio: f64) -> Option<usize> {
        self.catalog.iter().position(|e| e.ratio == ratio)
    }

    pub fn logistic_for(&self, ratio: f64) -> Option<&LogisticParams> {
        self.catalog_index(ratio).map(|i| &self.catalog[i].logistic)
    }

    pub fn with_edge_cpu_hz(mut self, hz: f64) -> Self {
        self.edge_cpu_hz = hz;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn positive(field: &str, v: f64) -> Result<(), ModelError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::invalid(field, format!("must be positive and finite, got {v}")))
            }
        }
        if self.num_subcarriers == 0 {
            return Err(ModelError::invalid("num_subcarriers", "must be at least 1"));
        }
        positive("symbol_duration_s", self.symbol_duration_s)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("path_loss_exponent", self.path_loss_exponent)?;
        positive("edge_cpu_hz", self.edge_cpu_hz)?;
        if self.image_height == 0 || self.image_width == 0 {
            return Err(ModelError::invalid("image_height/image_width", "must be at least 1"));
        }
        positive("encode_cycles_per_pixel", self.encode_cycles_per_pixel)?;
        positive("decode_cycles_per_pixel", self.decode_cycles_per_pixel)?;
        if self.catalog.is_empty() {
            return Err(ModelError::invalid("catalog", "must list at least one compression ratio"));
        }
        for (i, entry) in self.catalog.iter().enumerate() {
            let field = format!("catalog[{i}]");
            if !(entry.ratio > 0.0 && entry.ratio <= 1.0) {
                return Err(ModelError::invalid(
                    format!("{field}.ratio"),
                    format!("must lie in (0, 1], got {}", entry.ratio),
                ));
            }
            if i > 0 && !(entry.ratio < self.catalog[i - 1].ratio) {
                return Err(ModelError::invalid(
                    format!("{field}.ratio"),
                    "ratios must be strictly decreasing without duplicates",
                ));
            }
            entry
                .logistic
                .validate()
                .map_err(|e| ModelError::invalid(format!("{field}.logistic"), e.to_string()))?;
        }
        Ok(())
    }
}

impl Default for SystemConfig {
    /// The reference deployment: 256 sub-channels of 15 kHz, -80 dBm noise,
    /// 128x128 images, two 4.9 GHz cores at the edge.
    fn default() -> Self {
        SystemConfig {
            num_subcarriers: 256,
            symbol_duration_s: 1.0 / 15_000.0,
            noise_power_w: 1e-11,
            path_loss_exponent: 3.0,
            edge_cpu_hz: 2.0 * CORE_HZ,
            image_height: 128,
            image_width: 128,
            encode_cycles_per_pixel: 2170.0,
            decode_cycles_per_pixel: 2510.0,
            catalog: LogisticParams::default_catalog(),
        }
    }
}

impl DeviceProfile {
    /// Checks the device's own field ranges and that at least one catalog
    /// entry can reach its SSIM requirement.
    pub fn validate(&self, cfg: &SystemConfig, index: usize) -> Result<(), ModelError> {
        let field = |name: &str| format!("devices[{index}].{name}");
        if self.image_count == 0 {
            return Err(ModelError::invalid(field("image_count"), "must be at least 1"));
        }
        for (name, v) in [
            ("local_cpu_hz", self.local_cpu_hz),
            ("tx_power_w", self.tx_power_w),
            ("distance_m", self.distance_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::invalid(field(name), format!("must be positive, got {v}")));
            }
        }
        if !(self.ssim_req > 0.0 && self.ssim_req < 1.0) {
            return Err(ModelError::invalid(
                field("ssim_req"),
                format!("must lie in (0, 1), got {}", self.ssim_req),
            ));
        }
        if !cfg.catalog.iter().any(|e| e.logistic.reaches(self.ssim_req)) {
            return Err(ModelError::invalid(
                field("ssim_req"),
                format!("{} is not reachable by any compression ratio", self.ssim_req),
            ));
        }
        Ok(())
    }

    pub fn images(&self) -> f64 {
        f64::from(self.image_count)
    }
}
