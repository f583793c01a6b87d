//! Per-epoch ISL graphs: the +Grid pattern, degree-constrained dynamic
//! assignment, and ground/aircraft access links.

use std::collections::BTreeSet;
use std::io;

use serde::{Deserialize, Serialize};

use crate::link_budget::{capacity_bps, propagation_delay_s, LinkClass, LinkParamSet};
use crate::orbital::{
    ground_position, ConstellationConfig, GroundKind, GroundNode, SatId, SatelliteState, Vec3, Visibility,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Sat(SatId),
    /// Index into [`TopologySnapshot::ground`].
    Ground(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub class: LinkClass,
    pub distance_km: f64,
    pub capacity_bps: f64,
    pub delay_s: f64,
}

impl Edge {
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if self.a == n {
            Some(self.b)
        } else if self.b == n {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    Grid,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPolicy {
    NearestFirst,
    IntraOrbitPreferred,
}

/// How ISL snapshots are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySettings {
    pub mode: TopologyMode,
    pub max_isls: usize,
    pub max_range_km: f64,
    pub policy: LinkPolicy,
    pub grazing_altitude_km: f64,
    pub elevation_mask_deg: f64,
}

impl Default for TopologySettings {
    fn default() -> Self {
        Self {
            mode: TopologyMode::Grid,
            max_isls: 4,
            max_range_km: 5000.0,
            policy: LinkPolicy::NearestFirst,
            grazing_altitude_km: 80.0,
            elevation_mask_deg: 10.0,
        }
    }
}

impl TopologySettings {
    pub fn visibility(&self) -> Visibility {
        Visibility { grazing_altitude_km: self.grazing_altitude_km, elevation_mask_deg: self.elevation_mask_deg }
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if !(self.max_range_km > 0.0) {
            return Err(ConfigError::field("topology.max_range_km", "must be positive"));
        }
        if !(self.grazing_altitude_km >= 0.0) {
            return Err(ConfigError::field("topology.grazing_altitude_km", "must be non-negative"));
        }
        if !(-90.0..=90.0).contains(&self.elevation_mask_deg) {
            return Err(ConfigError::field("topology.elevation_mask_deg", "must be within [-90, 90]"));
        }
        Ok(())
    }

    /// ISL-only snapshot in the configured mode.
    pub fn build(
        &self,
        epoch_s: f64,
        states: &[SatelliteState],
        config: &ConstellationConfig,
        params: &LinkParamSet,
    ) -> TopologySnapshot {
        let ctx = LinkContext { visibility: self.visibility(), params };
        match self.mode {
            TopologyMode::Grid => build_grid_topology(epoch_s, states, config, &ctx),
            TopologyMode::Dynamic => {
                build_dynamic_topology(epoch_s, states, Some(self.max_isls), self.max_range_km, self.policy, &ctx)
            }
        }
    }
}

/// Immutable graph of one time slot.
#[derive(Debug, Clone)]
pub struct TopologySnapshot {
    pub epoch_s: f64,
    pub satellites: Vec<SatelliteState>,
    pub ground: Vec<(GroundNode, Vec3)>,
    pub edges: Vec<Edge>,
    /// `None` when the ISL degree is unconstrained.
    pub max_isl_degree: Option<usize>,
    sats_per_plane: u32,
}

impl TopologySnapshot {
    /// Assembles a snapshot from parts. Satellites must be listed plane-major
    /// with every slot present, as [`crate::orbital::propagate`] returns them.
    pub fn from_parts(
        epoch_s: f64,
        satellites: Vec<SatelliteState>,
        ground: Vec<(GroundNode, Vec3)>,
        edges: Vec<Edge>,
        max_isl_degree: Option<usize>,
    ) -> Self {
        let mut snap = snapshot(epoch_s, &satellites, edges, max_isl_degree);
        snap.ground = ground;
        debug_assert!(snap.satellites.iter().enumerate().all(|(k, s)| snap.index_of(NodeId::Sat(s.id)) == k));
        snap
    }

    pub fn node_count(&self) -> usize {
        self.satellites.len() + self.ground.len()
    }

    /// Dense index: satellites first, in state order, then ground nodes.
    pub fn index_of(&self, n: NodeId) -> usize {
        match n {
            NodeId::Sat(id) => id.plane as usize * self.sats_per_plane as usize + id.slot as usize,
            NodeId::Ground(g) => self.satellites.len() + g as usize,
        }
    }

    pub fn node_at(&self, index: usize) -> NodeId {
        if index < self.satellites.len() {
            NodeId::Sat(self.satellites[index].id)
        } else {
            NodeId::Ground((index - self.satellites.len()) as u32)
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        match n {
            NodeId::Sat(id) => id.slot < self.sats_per_plane && self.index_of(n) < self.satellites.len(),
            NodeId::Ground(g) => (g as usize) < self.ground.len(),
        }
    }

    pub fn position(&self, n: NodeId) -> Vec3 {
        match n {
            NodeId::Sat(_) => self.satellites[self.index_of(n)].position_km,
            NodeId::Ground(g) => self.ground[g as usize].1,
        }
    }

    pub fn label(&self, n: NodeId) -> String {
        match n {
            NodeId::Sat(id) => id.to_string(),
            NodeId::Ground(g) => self.ground[g as usize].0.node_id.clone(),
        }
    }

    /// Resolves a satellite label (`S<plane>-<slot>`) or a ground node id.
    pub fn resolve(&self, label: &str) -> Option<NodeId> {
        if let Some(g) = self.ground.iter().position(|(node, _)| node.node_id == label) {
            return Some(NodeId::Ground(g as u32));
        }
        let id: SatId = label.parse().ok()?;
        let n = NodeId::Sat(id);
        self.contains(n).then_some(n)
    }

    /// Neighbour lists as `(node index, edge index)`, sorted by node id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for (k, e) in self.edges.iter().enumerate() {
            let (ia, ib) = (self.index_of(e.a), self.index_of(e.b));
            adj[ia].push((ib, k));
            adj[ib].push((ia, k));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| self.node_at(n));
        }
        adj
    }

    pub fn isl_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.class == LinkClass::IslLaser)
    }

    pub fn isl_degree(&self, sat: SatId) -> usize {
        let n = NodeId::Sat(sat);
        self.isl_edges().filter(|e| e.a == n || e.b == n).count()
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }

    /// Edge-list CSV: `epoch_s,node_a,node_b,link_class,distance_km,capacity_bps,delay_s`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch_s", "node_a", "node_b", "link_class", "distance_km", "capacity_bps", "delay_s"])?;
        for e in &self.edges {
            w.write_record([
                self.epoch_s.to_string(),
                self.label(e.a),
                self.label(e.b),
                e.class.to_string(),
                e.distance_km.to_string(),
                e.capacity_bps.to_string(),
                e.delay_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Visibility rules and link parameters shared by all builders.
#[derive(Debug, Clone, Copy)]
pub struct LinkContext<'a> {
    pub visibility: Visibility,
    pub params: &'a LinkParamSet,
}

impl LinkContext<'_> {
    fn isl_edge(&self, a: &SatelliteState, b: &SatelliteState) -> Edge {
        let distance_km = (a.position_km - b.position_km).norm();
        let (x, y) = if a.id <= b.id { (a.id, b.id) } else { (b.id, a.id) };
        Edge {
            a: NodeId::Sat(x),
            b: NodeId::Sat(y),
            class: LinkClass::IslLaser,
            distance_km,
            capacity_bps: self.params.isl_laser.lisl_fixed_rate_bps,
            delay_s: propagation_delay_s(distance_km),
        }
    }

    fn rf_edge(&self, a: NodeId, b: NodeId, class: LinkClass, distance_km: f64) -> Edge {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // A zero-length link (co-located endpoints) gets the capacity of a 1 m hop.
        let capacity_bps = capacity_bps(self.params.get(class), distance_km.max(1e-3), 1.0)
            .expect("share 1 and positive distance are valid");
        Edge { a, b, class, distance_km, capacity_bps, delay_s: propagation_delay_s(distance_km) }
    }
}

fn snapshot(
    epoch_s: f64,
    states: &[SatelliteState],
    edges: Vec<Edge>,
    max_isl_degree: Option<usize>,
) -> TopologySnapshot {
    let sats_per_plane = states.iter().map(|s| s.id.slot + 1).max().unwrap_or(1);
    TopologySnapshot { epoch_s, satellites: states.to_vec(), ground: Vec::new(), edges, max_isl_degree, sats_per_plane }
}

/// Neighbour pairs of the +Grid rule, before any visibility check: in-plane
/// predecessor/successor and same-slot satellites of the adjacent planes.
pub fn grid_pairs(config: &ConstellationConfig) -> BTreeSet<(SatId, SatId)> {
    let planes = config.num_planes;
    let slots = config.sats_per_plane;
    let mut pairs = BTreeSet::new();
    let mut add = |a: SatId, b: SatId| {
        if a != b {
            pairs.insert(if a < b { (a, b) } else { (b, a) });
        }
    };
    for id in config.sat_ids() {
        add(id, SatId { plane: id.plane, slot: (id.slot + 1) % slots });
        add(id, SatId { plane: id.plane, slot: (id.slot + slots - 1) % slots });
        if id.plane + 1 < planes || config.planes_wrap() {
            add(id, SatId { plane: (id.plane + 1) % planes, slot: id.slot });
        }
        if id.plane > 0 || config.planes_wrap() {
            add(id, SatId { plane: (id.plane + planes - 1) % planes, slot: id.slot });
        }
    }
    pairs
}

/// The four-neighbour +Grid. Pairs that fail the line-of-sight test are
/// dropped, which is how seams and polar outages show up.
pub fn build_grid_topology(
    epoch_s: f64,
    states: &[SatelliteState],
    config: &ConstellationConfig,
    ctx: &LinkContext<'_>,
) -> TopologySnapshot {
    let state = |id: SatId| &states[config.index_of(id)];
    let edges = grid_pairs(config)
        .into_iter()
        .filter_map(|(a, b)| {
            let (sa, sb) = (state(a), state(b));
            ctx.visibility.visible(&sa.position_km, &sb.position_km).then(|| ctx.isl_edge(sa, sb))
        })
        .collect();
    snapshot(epoch_s, states, edges, Some(4))
}

/// A feasible ISL: mutually visible and within range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IslCandidate {
    pub a: usize,
    pub b: usize,
    pub distance_km: f64,
    pub intra_plane: bool,
}

/// All satellite pairs that could host an ISL, sorted by `policy`, with
/// ties broken by the (lower, higher) index pair.
pub fn isl_candidates(
    states: &[SatelliteState],
    max_range_km: f64,
    visibility: &Visibility,
    policy: LinkPolicy,
) -> Vec<IslCandidate> {
    let mut out = Vec::new();
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let (pa, pb) = (&states[i].position_km, &states[j].position_km);
            let distance_km = (pa - pb).norm();
            if distance_km <= max_range_km && visibility.visible(pa, pb) {
                out.push(IslCandidate {
                    a: i,
                    b: j,
                    distance_km,
                    intra_plane: states[i].id.plane == states[j].id.plane,
                });
            }
        }
    }
    out.sort_by(|x, y| {
        let rank = |c: &IslCandidate| match policy {
            LinkPolicy::NearestFirst => 0,
            LinkPolicy::IntraOrbitPreferred => u8::from(!c.intra_plane),
        };
        rank(x).cmp(&rank(y)).then(x.distance_km.total_cmp(&y.distance_km)).then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    out
}

/// Degree-constrained greedy link selection over pre-sorted candidates.
///
/// Runs one greedy pass per degree cap 1, 2, ..., `max_degree`, each pass
/// continuing from the links accepted so far. The accepted set for cap `k`
/// is therefore always contained in the set for cap `k + 1`, which a single
/// pass at cap `k` does not guarantee. Returns indices into `candidates`.
pub fn assign_links(node_count: usize, candidates: &[IslCandidate], max_degree: Option<usize>) -> Vec<usize> {
    let mut degree = vec![0usize; node_count];
    let mut taken = vec![false; candidates.len()];
    let busiest = {
        let mut d = vec![0usize; node_count];
        for c in candidates {
            d[c.a] += 1;
            d[c.b] += 1;
        }
        d.into_iter().max().unwrap_or(0)
    };
    let last_cap = max_degree.map_or(busiest, |k| k.min(busiest));
    for cap in 1..=last_cap {
        for (k, c) in candidates.iter().enumerate() {
            if !taken[k] && degree[c.a] < cap && degree[c.b] < cap {
                taken[k] = true;
                degree[c.a] += 1;
                degree[c.b] += 1;
            }
        }
    }
    (0..candidates.len()).filter(|&k| taken[k]).collect()
}

/// Dynamic ISLs: every satellite keeps at most `max_isls` links (`None`
/// lifts the cap, linking every feasible pair).
pub fn build_dynamic_topology(
    epoch_s: f64,
    states: &[SatelliteState],
    max_isls: Option<usize>,
    max_range_km: f64,
    policy: LinkPolicy,
    ctx: &LinkContext<'_>,
) -> TopologySnapshot {
    let candidates = isl_candidates(states, max_range_km, &ctx.visibility, policy);
    let mut edges: Vec<Edge> = assign_links(states.len(), &candidates, max_isls)
        .into_iter()
        .map(|k| ctx.isl_edge(&states[candidates[k].a], &states[candidates[k].b]))
        .collect();
    edges.sort_by_key(|e| (e.a, e.b));
    snapshot(epoch_s, states, edges, max_isls)
}

/// Adds feeder links (GS-satellite), space-to-air links (satellite-aircraft)
/// and ground-to-air links (GS-aircraft) for every visible pair.
pub fn attach_ground_links(
    mut snapshot: TopologySnapshot,
    ground_nodes: &[GroundNode],
    ctx: &LinkContext<'_>,
) -> TopologySnapshot {
    let base = snapshot.ground.len() as u32;
    let placed: Vec<(GroundNode, Vec3)> =
        ground_nodes.iter().map(|n| (n.clone(), ground_position(n, snapshot.epoch_s))).collect();
    let mut edges = Vec::new();
    for (g, (node, pos)) in placed.iter().enumerate() {
        let gid = NodeId::Ground(base + g as u32);
        let class = match node.kind {
            GroundKind::GroundStation => LinkClass::GroundToSat,
            GroundKind::Aircraft => LinkClass::SatToAir,
        };
        for sat in &snapshot.satellites {
            if ctx.visibility.visible(pos, &sat.position_km) {
                let d = (pos - sat.position_km).norm();
                edges.push(ctx.rf_edge(gid, NodeId::Sat(sat.id), class, d));
            }
        }
        if node.kind == GroundKind::Aircraft {
            for (h, (other, opos)) in placed.iter().enumerate() {
                if other.kind == GroundKind::GroundStation && ctx.visibility.visible(opos, pos) {
                    let d = (pos - opos).norm();
                    edges.push(ctx.rf_edge(NodeId::Ground(base + h as u32), gid, LinkClass::GroundToAir, d));
                }
            }
        }
    }
    snapshot.ground.extend(placed);
    snapshot.edges.extend(edges);
    snapshot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::propagate;

    fn ctx(params: &LinkParamSet) -> LinkContext<'_> {
        LinkContext { visibility: Visibility::default(), params }
    }

    fn fake_states(points: &[(u32, u32, Vec3)]) -> Vec<SatelliteState> {
        points
            .iter()
            .map(|&(plane, slot, p)| SatelliteState {
                id: SatId { plane, slot },
                position_km: p,
                velocity_km_s: Vec3::zeros(),
            })
            .collect()
    }

    #[test]
    fn default_grid_degrees() {
        let params = LinkParamSet::default();
        let c = ConstellationConfig::default();
        let states = propagate(&c, 0.0);
        let snap = build_grid_topology(0.0, &states, &c, &ctx(&params));
        let pairs = grid_pairs(&c);
        assert_eq!(pairs.len(), 240);
        let vis = ctx(&params).visibility;
        let pos = |id: SatId| states[c.index_of(id)].position_km;
        let visible: Vec<_> = pairs.iter().filter(|(a, b)| vis.visible(&pos(*a), &pos(*b))).collect();
        assert_eq!(snap.edges.len(), visible.len());
        for s in &states {
            let all_visible =
                pairs.iter().filter(|(a, b)| *a == s.id || *b == s.id).all(|(a, b)| vis.visible(&pos(*a), &pos(*b)));
            let d = snap.isl_degree(s.id);
            assert!(d <= 4);
            if all_visible {
                assert_eq!(d, 4);
            }
        }
    }

    #[test]
    fn single_plane_grid_is_a_ring() {
        let params = LinkParamSet::default();
        let c = ConstellationConfig::new(1, 20, 1000.0, 53.0, 0).unwrap();
        let states = propagate(&c, 0.0);
        let snap = build_grid_topology(0.0, &states, &c, &ctx(&params));
        assert_eq!(snap.edges.len(), 20);
        assert!(states.iter().all(|s| snap.isl_degree(s.id) == 2));
    }

    #[test]
    fn two_by_two_grid_is_a_four_ring() {
        let c = ConstellationConfig::new(2, 2, 1000.0, 53.0, 1).unwrap();
        let s = |plane, slot| SatId { plane, slot };
        let pairs: Vec<_> = grid_pairs(&c).into_iter().collect();
        assert_eq!(pairs, vec![(s(0, 0), s(0, 1)), (s(0, 0), s(1, 0)), (s(0, 1), s(1, 1)), (s(1, 0), s(1, 1))]);
        // The in-plane pairs sit 180 degrees apart and are occluded.
        let params = LinkParamSet::default();
        let states = propagate(&c, 0.0);
        let snap = build_grid_topology(0.0, &states, &c, &ctx(&params));
        assert!(snap
            .edges
            .iter()
            .all(|e| matches!((e.a, e.b), (NodeId::Sat(a), NodeId::Sat(b)) if a.plane != b.plane)));
    }

    #[test]
    fn zero_cap_yields_no_links() {
        let params = LinkParamSet::default();
        let states = propagate(&ConstellationConfig::default(), 0.0);
        let snap = build_dynamic_topology(0.0, &states, Some(0), 5000.0, LinkPolicy::NearestFirst, &ctx(&params));
        assert!(snap.edges.is_empty());
    }

    #[test]
    fn collinear_triplet_links_the_closest_pair() {
        let params = LinkParamSet::default();
        let states = fake_states(&[
            (0, 0, Vec3::new(7371.0, 0.0, 0.0)),
            (0, 1, Vec3::new(7371.0, 100.0, 0.0)),
            (0, 2, Vec3::new(7371.0, 250.0, 0.0)),
        ]);
        let snap = build_dynamic_topology(0.0, &states, Some(1), 5000.0, LinkPolicy::NearestFirst, &ctx(&params));
        assert_eq!(snap.edges.len(), 1);
        let e = &snap.edges[0];
        assert_eq!((e.a, e.b), (NodeId::Sat(SatId { plane: 0, slot: 0 }), NodeId::Sat(SatId { plane: 0, slot: 1 })));
    }

    #[test]
    fn single_pass_greedy_is_not_nested_but_layered_is() {
        // Sorted order: (a,x) (b,y) (u,a) (u,b) (u,v). A single pass at cap 1
        // keeps (u,v); a single pass at cap 2 saturates u before reaching it.
        let (u, v, a, b, x, y) = (0, 1, 2, 3, 4, 5);
        let cands: Vec<IslCandidate> = [(a, x), (b, y), (u, a), (u, b), (u, v)]
            .iter()
            .enumerate()
            .map(|(k, &(p, q))| IslCandidate { a: p, b: q, distance_km: k as f64, intra_plane: false })
            .collect();
        let one = assign_links(6, &cands, Some(1));
        let two = assign_links(6, &cands, Some(2));
        assert!(one.contains(&4));
        assert!(one.iter().all(|k| two.contains(k)), "{one:?} vs {two:?}");
    }

    #[test]
    fn unconstrained_links_every_candidate() {
        let params = LinkParamSet::default();
        let states = propagate(&ConstellationConfig::default(), 300.0);
        let vis = Visibility::default();
        let all = isl_candidates(&states, 5000.0, &vis, LinkPolicy::NearestFirst);
        let snap = build_dynamic_topology(300.0, &states, None, 5000.0, LinkPolicy::NearestFirst, &ctx(&params));
        assert_eq!(snap.edges.len(), all.len());
        let busiest = states.iter().map(|s| snap.isl_degree(s.id)).max().unwrap();
        let capped =
            build_dynamic_topology(300.0, &states, Some(busiest), 5000.0, LinkPolicy::NearestFirst, &ctx(&params));
        assert_eq!(capped.edges, snap.edges);
    }

    #[test]
    fn pole_station_sees_no_equatorial_satellite() {
        let params = LinkParamSet::default();
        let c = ConstellationConfig::new(6, 20, 1000.0, 0.0, 1).unwrap();
        let states = propagate(&c, 0.0);
        let grid = build_grid_topology(0.0, &states, &c, &ctx(&params));
        let snap = attach_ground_links(grid, &[GroundNode::ground_station("pole", 90.0, 0.0)], &ctx(&params));
        assert!(snap.edges.iter().all(|e| e.class == LinkClass::IslLaser));
    }

    #[test]
    fn aircraft_under_satellite_uses_altitude_difference() {
        let params = LinkParamSet::default();
        let c = ConstellationConfig::new(1, 1, 1000.0, 0.0, 0).unwrap();
        let states = propagate(&c, 0.0);
        let grid = build_grid_topology(0.0, &states, &c, &ctx(&params));
        let ac = GroundNode::aircraft("ac", 0.0, 0.0, 90.0);
        let snap = attach_ground_links(grid, std::slice::from_ref(&ac), &ctx(&params));
        let e = snap.edges.iter().find(|e| e.class == LinkClass::SatToAir).unwrap();
        assert!((e.distance_km - (1000.0 - ac.altitude_km)).abs() < 1e-9);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let params = LinkParamSet::default();
        let c = ConstellationConfig::new(1, 4, 1000.0, 53.0, 0).unwrap();
        let states = propagate(&c, 0.0);
        let snap = build_grid_topology(0.0, &states, &c, &ctx(&params));
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch_s,node_a,node_b,link_class,distance_km,capacity_bps,delay_s"));
        assert_eq!(lines.count(), snap.edges.len());
    }
}
