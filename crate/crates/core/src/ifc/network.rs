use crate::link_budget::{LinkClass, LinkParamSet};
use crate::orbital::{propagate, ConstellationConfig, GroundKind, GroundNode, SatId};
use crate::topology::{
    attach_ground_links, build_dynamic_topology, LinkContext, LinkPolicy, NodeId, TopologySettings, TopologySnapshot,
};

/// A link as seen from one endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reach {
    /// Satellite index, or ground index for feeder lists.
    pub node: usize,
    pub distance_km: f64,
    pub delay_s: f64,
    pub rate_bps: f64,
}

/// The link candidates of one slot, indexed for the delivery planners.
///
/// ISL candidates are every visible satellite pair within range; which of
/// them get activated is the planners' decision.
#[derive(Debug, Clone)]
pub struct IfcNetwork {
    pub snapshot: TopologySnapshot,
    pub params: LinkParamSet,
    /// In-range ISL peers of each satellite, nearest first.
    pub isl_peers: Vec<Vec<Reach>>,
    /// Ground stations seen by each satellite.
    pub feeders: Vec<Vec<Reach>>,
    /// Satellites seen by each aircraft (scenario order).
    pub air: Vec<Vec<Reach>>,
    pub ground_station_count: usize,
}

impl IfcNetwork {
    /// Builds the slot network: unconstrained ISL candidates plus feeder,
    /// space-to-air and ground-to-air links.
    pub fn build(
        config: &ConstellationConfig,
        ground_stations: &[GroundNode],
        aircraft: &[GroundNode],
        params: &LinkParamSet,
        topology: &TopologySettings,
        epoch_s: f64,
    ) -> Self {
        let states = propagate(config, epoch_s);
        let ctx = LinkContext { visibility: topology.visibility(), params };
        let isl = build_dynamic_topology(epoch_s, &states, None, topology.max_range_km, LinkPolicy::NearestFirst, &ctx);
        let ground: Vec<GroundNode> = ground_stations.iter().chain(aircraft).cloned().collect();
        let snapshot = attach_ground_links(isl, &ground, &ctx);
        Self::from_snapshot(snapshot, params.clone())
    }

    /// Indexes a snapshot whose ground nodes list ground stations before
    /// aircraft.
    pub fn from_snapshot(snapshot: TopologySnapshot, params: LinkParamSet) -> Self {
        let sats = snapshot.satellites.len();
        let ground_station_count =
            snapshot.ground.iter().take_while(|(n, _)| n.kind == GroundKind::GroundStation).count();
        let aircraft_count = snapshot.ground.len() - ground_station_count;
        let mut isl_peers = vec![Vec::new(); sats];
        let mut feeders = vec![Vec::new(); sats];
        let mut air = vec![Vec::new(); aircraft_count];
        for e in &snapshot.edges {
            let (ia, ib) = (snapshot.index_of(e.a), snapshot.index_of(e.b));
            let reach = |node| Reach { node, distance_km: e.distance_km, delay_s: e.delay_s, rate_bps: e.capacity_bps };
            match e.class {
                LinkClass::IslLaser => {
                    isl_peers[ia].push(reach(ib));
                    isl_peers[ib].push(reach(ia));
                }
                LinkClass::GroundToSat => feeders[ia].push(reach(ib - sats)),
                LinkClass::SatToAir => air[ib - sats - ground_station_count].push(reach(ia)),
                LinkClass::GroundToAir => {}
            }
        }
        let by_distance =
            |v: &mut Vec<Reach>| v.sort_by(|x, y| x.distance_km.total_cmp(&y.distance_km).then(x.node.cmp(&y.node)));
        isl_peers.iter_mut().chain(feeders.iter_mut()).chain(air.iter_mut()).for_each(by_distance);
        Self { snapshot, params, isl_peers, feeders, air, ground_station_count }
    }

    pub fn sat_id(&self, index: usize) -> SatId {
        self.snapshot.satellites[index].id
    }

    pub fn sat_index(&self, id: SatId) -> usize {
        self.snapshot.index_of(NodeId::Sat(id))
    }

    pub fn ground_station_name(&self, gs: usize) -> &str {
        &self.snapshot.ground[gs].0.node_id
    }

    pub fn aircraft_name(&self, aircraft: usize) -> &str {
        &self.snapshot.ground[self.ground_station_count + aircraft].0.node_id
    }

    pub fn aircraft_count(&self) -> usize {
        self.air.len()
    }
}
