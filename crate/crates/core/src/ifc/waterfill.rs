//! Stream delays and the equal-finish split of one file over parallel
//! sources.

use serde::{Deserialize, Serialize};

use crate::routing::Path;

/// How transmission time accumulates along a multi-hop stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    /// Bits are pipelined; the transmission time is paid once at the
    /// slowest hop.
    CutThrough,
    /// Every relay receives the whole file before forwarding it.
    StoreAndForward,
}

/// One hop of a stream: propagation delay and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub delay_s: f64,
    pub rate_bps: f64,
}

/// Cut-through delay of `bits` along `path`.
pub fn stream_delay(path: &Path, bits: f64) -> f64 {
    if bits == 0.0 {
        return path.total_propagation_delay_s;
    }
    if path.bottleneck_capacity_bps <= 0.0 {
        return f64::INFINITY;
    }
    path.total_propagation_delay_s + bits / path.bottleneck_capacity_bps
}

/// Delay of `bits` over a hop sequence under `model`.
pub fn hops_delay(hops: &[Hop], bits: f64, model: DelayModel) -> f64 {
    let propagation: f64 = hops.iter().map(|h| h.delay_s).sum();
    if bits == 0.0 {
        return propagation;
    }
    if hops.iter().any(|h| h.rate_bps <= 0.0) {
        return f64::INFINITY;
    }
    match model {
        DelayModel::CutThrough => {
            let bottleneck = hops.iter().map(|h| h.rate_bps).fold(f64::INFINITY, f64::min);
            if bottleneck.is_infinite() {
                propagation
            } else {
                propagation + bits / bottleneck
            }
        }
        DelayModel::StoreAndForward => propagation + hops.iter().map(|h| bits / h.rate_bps).sum::<f64>(),
    }
}

/// Result of splitting a file over parallel sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSplit {
    /// Completion time of the whole file, `f64::INFINITY` when no source
    /// has a positive rate.
    pub delay_s: f64,
    /// Fraction of the file fetched from each source, in input order.
    pub ratios: Vec<f64>,
}

/// Splits `total_bits` over sources `(propagation delay, rate)` so that the
/// completion time is minimal.
///
/// Source `c` finishes at `prop_c + x_c * bits / rate_c`. At the optimum all
/// used sources finish together at `D`, and a source is used iff
/// `prop_c < D`, so `D` solves `sum_c max(0, D - prop_c) * rate_c = bits`.
/// Sources are admitted in order of propagation delay until the next one
/// would start after the common finish time.
pub fn optimal_ratio_delay(sources: &[(f64, f64)], total_bits: f64) -> RatioSplit {
    let mut order: Vec<usize> = (0..sources.len()).filter(|&c| sources[c].1 > 0.0).collect();
    let mut ratios = vec![0.0; sources.len()];
    if order.is_empty() {
        return RatioSplit { delay_s: f64::INFINITY, ratios };
    }
    order.sort_by(|&x, &y| sources[x].0.total_cmp(&sources[y].0).then(x.cmp(&y)));
    if total_bits <= 0.0 {
        ratios[order[0]] = 1.0;
        return RatioSplit { delay_s: sources[order[0]].0, ratios };
    }

    let mut rate_sum = 0.0;
    let mut weighted = 0.0;
    let mut delay = f64::INFINITY;
    let mut active = 0;
    for (m, &c) in order.iter().enumerate() {
        let (prop, rate) = sources[c];
        rate_sum += rate;
        weighted += prop * rate;
        delay = (total_bits + weighted) / rate_sum;
        active = m + 1;
        match order.get(m + 1) {
            Some(&next) if sources[next].0 < delay => continue,
            _ => break,
        }
    }
    let mut sum = 0.0;
    for &c in &order[..active] {
        let (prop, rate) = sources[c];
        let x = ((delay - prop) * rate / total_bits).max(0.0);
        ratios[c] = x;
        sum += x;
    }
    for r in &mut ratios {
        *r /= sum;
    }
    RatioSplit { delay_s: delay, ratios }
}
