//! In-flight content delivery: cached files pulled from satellite caches over
//! ISLs, non-cached files fetched from ground stations, and the sweep over
//! the per-satellite ISL budget.

pub mod bandwidth;
pub mod cached;
pub mod network;
pub mod noncached;
pub mod slot;
pub mod waterfill;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::orbital::SatId;

pub use bandwidth::{equal_shares, optimal_shares, FeederDemand};
pub use cached::{solve_cached, AssociationMode, CachedProblem, PeerOption, SearchLimits, ServingOption};
pub use network::IfcNetwork;
pub use noncached::{solve_levels, BandwidthMode, GroundContext, GroundPlan, GroundRequest};
pub use slot::{plan_slot, run_slot, sweep_max_isls, SlotRequests, SweepResult, SweepRow};
pub use waterfill::{hops_delay, optimal_ratio_delay, stream_delay, DelayModel, Hop, RatioSplit};

/// One aircraft's file request in a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FileRequest {
    pub request_id: u32,
    /// Index into the scenario's aircraft list.
    pub aircraft: usize,
    pub aircraft_id: String,
    pub file_class: usize,
    pub num_packets: u32,
    pub packet_bits: u32,
    pub cached: bool,
    /// Satellites caching the file's class; empty for non-cached files.
    pub cache_holders: Vec<SatId>,
    /// Ground stations able to serve the file.
    pub source_gs_set: Vec<String>,
}

impl FileRequest {
    pub fn bits(&self) -> f64 {
        f64::from(self.num_packets) * f64::from(self.packet_bits)
    }
}

/// The schemes compared in the ISL sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Joint association, peer selection and bandwidth allocation.
    Optimized,
    /// Greedy association for cached files.
    Greedy,
    /// Equal feeder bandwidth for non-cached files.
    Equal,
    /// Optimized without the ISL cap.
    Full,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Optimized, Scheme::Greedy, Scheme::Equal, Scheme::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Optimized => "optimized",
            Scheme::Greedy => "greedy",
            Scheme::Equal => "equal",
            Scheme::Full => "full",
        }
    }

    pub fn association(self) -> AssociationMode {
        match self {
            Scheme::Greedy => AssociationMode::Greedy,
            Scheme::Full => AssociationMode::FullyConnected,
            Scheme::Optimized | Scheme::Equal => AssociationMode::Optimized,
        }
    }

    pub fn bandwidth(self) -> BandwidthMode {
        match self {
            Scheme::Equal => BandwidthMode::Equal,
            _ => BandwidthMode::Optimal,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "optimized" => Ok(Scheme::Optimized),
            "greedy" => Ok(Scheme::Greedy),
            "equal" => Ok(Scheme::Equal),
            "full" | "fully_connected" => Ok(Scheme::Full),
            other => Err(format!("unknown mode `{other}` (expected optimized, greedy, equal or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfcSettings {
    /// Fraction of satellites caching each file class.
    pub cache_fraction: f64,
    pub hit_probability: f64,
    /// Probability that an aircraft requests a file in a slot.
    pub request_probability: f64,
    pub packet_bits: u32,
    /// Inclusive packet-count range per file class.
    pub class_ranges: Vec<[u32; 2]>,
    pub delay_model: DelayModel,
    pub exhaustive_limit: usize,
    pub local_search_iterations: usize,
    /// Slot start times swept by `ifc-sweep`.
    pub epochs_s: Vec<f64>,
}

impl Default for IfcSettings {
    fn default() -> Self {
        Self {
            cache_fraction: 0.1,
            hit_probability: 0.5,
            request_probability: 1.0,
            packet_bits: 1080,
            class_ranges: vec![[50, 100], [500, 1000], [1000, 3000], [10, 1000]],
            delay_model: DelayModel::StoreAndForward,
            exhaustive_limit: 12,
            local_search_iterations: 200,
            epochs_s: vec![0.0, 600.0, 1200.0],
        }
    }
}

impl IfcSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::field(format!("ifc.{name}"), format!("must lie in [0, 1], got {v}")))
            }
        };
        unit("cache_fraction", self.cache_fraction)?;
        unit("hit_probability", self.hit_probability)?;
        unit("request_probability", self.request_probability)?;
        if self.packet_bits == 0 {
            return Err(ConfigError::field("ifc.packet_bits", "must be positive"));
        }
        if self.class_ranges.is_empty() {
            return Err(ConfigError::field("ifc.class_ranges", "needs at least one class"));
        }
        for (i, [lo, hi]) in self.class_ranges.iter().enumerate() {
            if lo > hi || *lo == 0 {
                return Err(ConfigError::field(
                    format!("ifc.class_ranges[{i}]"),
                    format!("needs 0 < low <= high, got [{lo}, {hi}]"),
                ));
            }
        }
        if self.epochs_s.is_empty() {
            return Err(ConfigError::field("ifc.epochs_s", "needs at least one epoch"));
        }
        if let Some(e) = self.epochs_s.iter().find(|e| !e.is_finite()) {
            return Err(ConfigError::field("ifc.epochs_s", format!("must be finite, got {e}")));
        }
        Ok(())
    }

    pub fn limits(&self) -> SearchLimits {
        SearchLimits { exhaustive_limit: self.exhaustive_limit, local_search_iterations: self.local_search_iterations }
    }
}

/// Where a file (or part of it) comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// The serving satellite's own cache.
    LocalCache,
    /// A cache-holding peer over an activated ISL.
    Peer(SatId),
    /// A ground station over a feeder link.
    Ground { gs: String, entry: SatId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileDelivery {
    pub request_id: u32,
    pub aircraft_id: String,
    pub cached: bool,
    pub serving_satellite: SatId,
    /// Download ratio per source; sums to one.
    pub sources: Vec<(Source, f64)>,
    /// ISLs carrying this file.
    pub activated_isls: Vec<(SatId, SatId)>,
    /// Feeder share per ground station, for files fetched from the ground.
    pub feeder_shares: Vec<(String, f64)>,
    pub delay_s: f64,
    /// The ISL cap excluded some peer or relay at a candidate serving
    /// satellite.
    pub constraint_binding: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryPlan {
    pub epoch_s: f64,
    pub max_isls: Option<usize>,
    pub scheme: Scheme,
    pub deliveries: Vec<FileDelivery>,
    pub undelivered: Vec<u32>,
    /// Mean delay over delivered files; zero when nothing was delivered.
    pub average_delay_s: f64,
}

impl DeliveryPlan {
    pub fn constraint_binding(&self) -> bool {
        self.deliveries.iter().any(|d| d.constraint_binding)
    }
}
