//! Snapshot routing: shortest-distance and minimum-hop paths with a total
//! tie-break order, hop-count statistics between ground terminals, and the
//! empirical check of how often the shortest-distance path is also a
//! minimum-hop path.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::link_budget::LinkParamSet;
use crate::orbital::{ground_position, propagate, ConstellationConfig, GroundNode};
use crate::topology::{NodeId, TopologySettings, TopologySnapshot};

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("node {0:?} is not part of the snapshot")]
    UnknownNode(NodeId),
    #[error("at least one {0} is required")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub hop_count: usize,
    pub total_distance_km: f64,
    pub total_propagation_delay_s: f64,
    /// `f64::INFINITY` for the empty path.
    pub bottleneck_capacity_bps: f64,
}

impl Path {
    /// Rebuilds the aggregate fields from a node sequence. `None` when two
    /// consecutive nodes share no edge.
    pub fn from_nodes(snapshot: &TopologySnapshot, nodes: Vec<NodeId>) -> Option<Path> {
        let mut total_distance_km = 0.0;
        let mut total_propagation_delay_s = 0.0;
        let mut bottleneck_capacity_bps = f64::INFINITY;
        for w in nodes.windows(2) {
            let e = snapshot.edge_between(w[0], w[1])?;
            total_distance_km += e.distance_km;
            total_propagation_delay_s += e.delay_s;
            bottleneck_capacity_bps = bottleneck_capacity_bps.min(e.capacity_bps);
        }
        Some(Path {
            hop_count: nodes.len().saturating_sub(1),
            nodes,
            total_distance_km,
            total_propagation_delay_s,
            bottleneck_capacity_bps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Distance,
    Hops,
}

#[derive(Clone)]
struct Label {
    distance: f64,
    hops: usize,
    nodes: Vec<NodeId>,
}

impl Label {
    fn cmp(&self, other: &Label, metric: Metric) -> Ordering {
        let primary = match metric {
            Metric::Distance => self.distance.total_cmp(&other.distance).then(self.hops.cmp(&other.hops)),
            Metric::Hops => self.hops.cmp(&other.hops).then(self.distance.total_cmp(&other.distance)),
        };
        primary.then_with(|| self.nodes.cmp(&other.nodes))
    }
}

/// Label-setting search with labels ordered by (metric, other metric,
/// node sequence). Extending two equal-length paths by the same edge keeps
/// their order, so the first settled label of `dst` is the unique minimum.
/// Ground nodes only start or end a path; they never relay.
fn best_path(
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    metric: Metric,
) -> Result<Option<Path>, RoutingError> {
    for n in [src, dst] {
        if !snapshot.contains(n) {
            return Err(RoutingError::UnknownNode(n));
        }
    }
    let adj = snapshot.adjacency();
    let n = snapshot.node_count();
    let (s, t) = (snapshot.index_of(src), snapshot.index_of(dst));
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut settled = vec![false; n];
    best[s] = Some(Label { distance: 0.0, hops: 0, nodes: vec![src] });
    loop {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if settled[v] {
                continue;
            }
            if let Some(l) = &best[v] {
                let better = match pick {
                    None => true,
                    Some(p) => l.cmp(best[p].as_ref().unwrap(), metric) == Ordering::Less,
                };
                if better {
                    pick = Some(v);
                }
            }
        }
        let Some(u) = pick else { return Ok(None) };
        settled[u] = true;
        if u == t {
            let label = best[t].take().unwrap();
            return Ok(Path::from_nodes(snapshot, label.nodes));
        }
        if u != s && matches!(snapshot.node_at(u), NodeId::Ground(_)) {
            continue;
        }
        let current = best[u].clone().unwrap();
        for &(v, k) in &adj[u] {
            if settled[v] {
                continue;
            }
            let e = &snapshot.edges[k];
            let mut nodes = current.nodes.clone();
            nodes.push(snapshot.node_at(v));
            let cand = Label { distance: current.distance + e.distance_km, hops: current.hops + 1, nodes };
            let replace = match &best[v] {
                None => true,
                Some(old) => cand.cmp(old, metric) == Ordering::Less,
            };
            if replace {
                best[v] = Some(cand);
            }
        }
    }
}

/// Minimum total distance; ties go to fewer hops, then the lexicographically
/// smallest node sequence. `Ok(None)` when `dst` is unreachable.
pub fn shortest_distance_path(
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
) -> Result<Option<Path>, RoutingError> {
    best_path(snapshot, src, dst, Metric::Distance)
}

/// Minimum edge count; ties go to shorter distance, then the
/// lexicographically smallest node sequence.
pub fn min_hop_path(snapshot: &TopologySnapshot, src: NodeId, dst: NodeId) -> Result<Option<Path>, RoutingError> {
    best_path(snapshot, src, dst, Metric::Hops)
}

pub fn path_by_metric(
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    metric: Metric,
) -> Result<Option<Path>, RoutingError> {
    best_path(snapshot, src, dst, metric)
}

/// Breadth-first hop counts from `src` to every node index.
pub fn hop_counts_from(adj: &[Vec<(usize, usize)>], src: usize) -> Vec<Option<usize>> {
    let mut hops = vec![None; adj.len()];
    hops[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let h = hops[u].unwrap();
        for &(v, _) in &adj[u] {
            if hops[v].is_none() {
                hops[v] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

/// One (pair, epoch) sample of ISL hop counts over every association of the
/// two terminals with their visible satellites.
#[derive(Debug, Clone, PartialEq)]
pub struct HopSample {
    pub pair_id: String,
    pub epoch_s: f64,
    pub min_hops: usize,
    pub max_hops: usize,
    pub mean_hops: f64,
    pub spread: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HopStats {
    pub samples: Vec<HopSample>,
    /// Samples where a terminal saw no satellite or no association connected.
    pub skipped: usize,
}

impl HopStats {
    /// CSV: `pair_id,epoch_s,min_hops,max_hops,mean_hops,spread`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair_id", "epoch_s", "min_hops", "max_hops", "mean_hops", "spread"])?;
        for s in &self.samples {
            w.write_record([
                s.pair_id.clone(),
                s.epoch_s.to_string(),
                s.min_hops.to_string(),
                s.max_hops.to_string(),
                s.mean_hops.to_string(),
                s.spread.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundPair {
    pub pair_id: String,
    pub a: GroundNode,
    pub b: GroundNode,
}

pub fn ground_pair_hop_stats(
    config: &ConstellationConfig,
    pairs: &[GroundPair],
    epochs: &[f64],
    topology: &TopologySettings,
    params: &LinkParamSet,
) -> Result<HopStats, RoutingError> {
    if pairs.is_empty() {
        return Err(RoutingError::Empty("pair"));
    }
    if epochs.is_empty() {
        return Err(RoutingError::Empty("epoch"));
    }
    let visibility = topology.visibility();
    let mut stats = HopStats::default();
    for &epoch in epochs {
        let states = propagate(config, epoch);
        let snap = topology.build(epoch, &states, config, params);
        let adj = snap.adjacency();
        let seen_by = |node: &GroundNode| -> Vec<usize> {
            let pos = ground_position(node, epoch);
            (0..states.len()).filter(|&k| visibility.visible(&pos, &states[k].position_km)).collect()
        };
        for pair in pairs {
            let (starts, ends) = (seen_by(&pair.a), seen_by(&pair.b));
            let mut counts = Vec::new();
            for &s in &starts {
                let hops = hop_counts_from(&adj, s);
                counts.extend(ends.iter().filter_map(|&e| hops[e]));
            }
            if counts.is_empty() {
                stats.skipped += 1;
                continue;
            }
            let min_hops = *counts.iter().min().unwrap();
            let max_hops = *counts.iter().max().unwrap();
            stats.samples.push(HopSample {
                pair_id: pair.pair_id.clone(),
                epoch_s: epoch,
                min_hops,
                max_hops,
                mean_hops: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
                spread: max_hops - min_hops,
            });
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpMhpReport {
    pub fraction: f64,
    /// Connected pairs compared.
    pub compared: usize,
    pub matching: usize,
    pub disconnected: usize,
    pub per_epoch: Vec<(f64, f64)>,
}

/// Counts the pairs whose shortest-distance path has the minimum hop count.
/// Returns `(matching, compared, disconnected)`.
pub fn count_sdp_in_mhp(
    snapshot: &TopologySnapshot,
    pairs: &[(NodeId, NodeId)],
) -> Result<(usize, usize, usize), RoutingError> {
    let (mut matching, mut compared, mut disconnected) = (0, 0, 0);
    for &(a, b) in pairs {
        match (shortest_distance_path(snapshot, a, b)?, min_hop_path(snapshot, a, b)?) {
            (Some(sdp), Some(mhp)) => {
                compared += 1;
                if sdp.hop_count == mhp.hop_count {
                    matching += 1;
                }
            }
            _ => disconnected += 1,
        }
    }
    Ok((matching, compared, disconnected))
}

/// Samples `sample_pairs` distinct satellite pairs per epoch and reports the
/// fraction whose shortest-distance path is also minimum-hop.
pub fn sdp_mhp_fraction(
    config: &ConstellationConfig,
    topology: &TopologySettings,
    params: &LinkParamSet,
    sample_pairs: usize,
    epochs: &[f64],
    rng_seed: u64,
) -> Result<SdpMhpReport, RoutingError> {
    if sample_pairs == 0 {
        return Err(RoutingError::Empty("sample pair"));
    }
    if epochs.is_empty() {
        return Err(RoutingError::Empty("epoch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let total = config.total();
    let mut report = SdpMhpReport { fraction: 1.0, compared: 0, matching: 0, disconnected: 0, per_epoch: Vec::new() };
    for &epoch in epochs {
        let states = propagate(config, epoch);
        let snap = topology.build(epoch, &states, config, params);
        let mut pairs = Vec::with_capacity(sample_pairs);
        while total > 1 && pairs.len() < sample_pairs {
            let (i, j) = (rng.random_range(0..total), rng.random_range(0..total));
            if i != j {
                pairs.push((snap.node_at(i), snap.node_at(j)));
            }
        }
        let (m, c, d) = count_sdp_in_mhp(&snap, &pairs)?;
        report.matching += m;
        report.compared += c;
        report.disconnected += d;
        report.per_epoch.push((epoch, if c == 0 { 1.0 } else { m as f64 / c as f64 }));
    }
    if report.compared > 0 {
        report.fraction = report.matching as f64 / report.compared as f64;
    }
    Ok(report)
}
