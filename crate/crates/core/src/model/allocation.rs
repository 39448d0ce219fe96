use serde::{Deserialize, Serialize};

/// One device's decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Compression ratio, taken from the catalog.
    pub cr: f64,
    /// Channel-truncation threshold on `|h|^2`.
    pub threshold: f64,
    /// TDMA share of each frame.
    pub time_share: f64,
    /// Edge decoding rate in cycles per second.
    pub edge_cpu_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub local_s: f64,
    pub transmit_s: f64,
    pub decode_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn new(local_s: f64, transmit_s: f64, decode_s: f64) -> Self {
        LatencyBreakdown {
            local_s,
            transmit_s,
            decode_s,
            total_s: local_s + transmit_s + decode_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    #[serde(flatten)]
    pub decision: Decision,
    pub latency: LatencyBreakdown,
}

/// A complete decision for every device plus the latencies it achieves.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub rows: Vec<AllocationRow>,
}

impl Allocation {
    pub fn total_time_share(&self) -> f64 {
        self.rows.iter().map(|r| r.decision.time_share).sum()
    }

    pub fn total_edge_cpu(&self) -> f64 {
        self.rows.iter().map(|r| r.decision.edge_cpu_hz).sum()
    }

    /// System delay: the slowest device's end-to-end latency.
    pub fn max_latency(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.latency.total_s)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> + '_ {
        self.rows.iter().map(|r| &r.decision)
    }
}
