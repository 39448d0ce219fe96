//! Encode, transmit and decode latencies of one device's batch of images.

use super::{Decision, DeviceProfile, LatencyBreakdown, ModelError, SystemConfig};

/// Local encoding time `L·C^s·H·W / f^l`.
pub fn local_latency(cfg: &SystemConfig, dev: &DeviceProfile) -> f64 {
    dev.images() * cfg.encode_cycles() / dev.local_cpu_hz
}

/// Uplink time for the whole batch, `L·D0·o·e^g·T_s / (M·τ)`.
///
/// `M·e^{-g}` sub-carriers are active per symbol period on average and the
/// device holds the channel for a fraction `τ` of the time.
pub fn transmit_latency(
    cfg: &SystemConfig,
    dev: &DeviceProfile,
    cr: f64,
    g: f64,
    time_share: f64,
) -> Result<f64, ModelError> {
    if !(time_share > 0.0) {
        return Err(ModelError::Domain {
            op: "transmit_latency",
            value: time_share,
            requirement: "time share > 0",
        });
    }
    if !(g >= 0.0) {
        return Err(ModelError::Domain {
            op: "transmit_latency",
            value: g,
            requirement: "g >= 0",
        });
    }
    let symbols = dev.images() * cfg.source_symbols() * cr;
    Ok(symbols * g.exp() * cfg.symbol_duration_s / (cfg.m() * time_share))
}

/// Edge decoding time `L·C^{s'}·H·W / f^c`.
pub fn decode_latency(cfg: &SystemConfig, dev: &DeviceProfile, edge_cpu_hz: f64) -> Result<f64, ModelError> {
    if !(edge_cpu_hz > 0.0) {
        return Err(ModelError::Domain {
            op: "decode_latency",
            value: edge_cpu_hz,
            requirement: "edge cpu > 0",
        });
    }
    Ok(dev.images() * cfg.decode_cycles() / edge_cpu_hz)
}

pub fn end_to_end_latency(
    cfg: &SystemConfig,
    dev: &DeviceProfile,
    decision: &Decision,
) -> Result<LatencyBreakdown, ModelError> {
    Ok(LatencyBreakdown::new(
        local_latency(cfg, dev),
        transmit_latency(cfg, dev, decision.cr, decision.threshold, decision.time_share)?,
        decode_latency(cfg, dev, decision.edge_cpu_hz)?,
    ))
}
