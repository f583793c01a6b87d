//! Request generation, per-slot planning and the ISL-budget sweep.

use std::collections::HashMap;
use std::io;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cached::{cached_problem, solve_cached};
use super::network::IfcNetwork;
use super::noncached::{
    evaluate, ground_request, solve_levels, BandwidthMode, GroundContext, GroundPlan, GroundRequest,
};
use super::{DeliveryPlan, FileDelivery, FileRequest, IfcSettings, Scheme, Source};
use crate::orbital::ConstellationConfig;
use crate::scenario::Scenario;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the requests of one (seed, epoch) slot.
pub fn slot_rng(seed: u64, epoch_s: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(epoch_s.to_bits())))
}

/// Per file class, which satellites (constellation order) cache it. Depends
/// on the seed only, so it is shared by every slot of a run.
pub fn cache_placement(config: &ConstellationConfig, settings: &IfcSettings, seed: u64) -> Vec<Vec<bool>> {
    let n = config.total();
    let holders = ((settings.cache_fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    settings
        .class_ranges
        .iter()
        .map(|_| {
            let mut mask = vec![false; n];
            for i in sample(&mut rng, n, holders) {
                mask[i] = true;
            }
            mask
        })
        .collect()
}

/// The requests and cache state of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRequests {
    pub epoch_s: f64,
    pub requests: Vec<FileRequest>,
    /// Cache mask per file class.
    pub holders: Vec<Vec<bool>>,
}

impl SlotRequests {
    /// At most one request per aircraft, in aircraft order.
    pub fn generate(scenario: &Scenario, epoch_s: f64, seed: u64) -> Self {
        let settings = &scenario.ifc;
        let holders = cache_placement(&scenario.constellation, settings, seed);
        let sat_ids: Vec<_> = scenario.constellation.sat_ids().collect();
        let gs_ids: Vec<String> = scenario.ground_stations.iter().map(|g| g.node_id.clone()).collect();
        let mut rng = slot_rng(seed, epoch_s);
        let mut requests = Vec::new();
        for (a, node) in scenario.aircraft.iter().enumerate() {
            if rng.random::<f64>() >= settings.request_probability {
                continue;
            }
            let file_class = rng.random_range(0..settings.class_ranges.len());
            let [lo, hi] = settings.class_ranges[file_class];
            let num_packets = rng.random_range(lo..=hi);
            let cached = rng.random::<f64>() < settings.hit_probability;
            let cache_holders = if cached {
                sat_ids.iter().zip(&holders[file_class]).filter(|(_, &h)| h).map(|(s, _)| *s).collect()
            } else {
                Vec::new()
            };
            requests.push(FileRequest {
                request_id: requests.len() as u32,
                aircraft: a,
                aircraft_id: node.node_id.clone(),
                file_class,
                num_packets,
                packet_bits: settings.packet_bits,
                cached,
                cache_holders,
                source_gs_set: gs_ids.clone(),
            });
        }
        Self { epoch_s, requests, holders }
    }
}

/// Plans every request of a slot under `scheme` with at most `max_isls`
/// activated ISLs at a serving satellite.
///
/// Cached files go to the cache planner; those with no reachable holder,
/// and all non-cached files, are fetched from the ground. A file whose
/// aircraft sees no satellite is undelivered.
pub fn plan_slot(
    network: &IfcNetwork,
    slot: &SlotRequests,
    settings: &IfcSettings,
    max_isls: usize,
    scheme: Scheme,
) -> DeliveryPlan {
    plan_slot_with(network, slot, settings, max_isls, scheme, &mut GroundMemo::default())
}

/// Ground-batch plans of one slot for every relay budget, keyed by the
/// batch's request ids. The batch does not otherwise depend on the ISL cap
/// or the scheme, so the cells of a slot can share them.
#[derive(Debug, Default)]
pub struct GroundMemo {
    plans: HashMap<Vec<u32>, Vec<GroundPlan>>,
}

/// [`plan_slot`] reusing ground-batch solutions across calls on the same
/// slot.
pub fn plan_slot_with(
    network: &IfcNetwork,
    slot: &SlotRequests,
    settings: &IfcSettings,
    max_isls: usize,
    scheme: Scheme,
    memo: &mut GroundMemo,
) -> DeliveryPlan {
    let cap = if scheme == Scheme::Full { None } else { Some(max_isls) };
    let model = settings.delay_model;
    let mut deliveries = Vec::new();
    let mut undelivered = Vec::new();
    let mut ground: Vec<(&FileRequest, GroundRequest)> = Vec::new();

    for req in &slot.requests {
        if network.air[req.aircraft].is_empty() {
            undelivered.push(req.request_id);
            continue;
        }
        if req.cached {
            let problem = cached_problem(network, req.aircraft, &slot.holders[req.file_class], req.bits());
            if let Some(c) = solve_cached(&problem, Some(max_isls), scheme.association(), model, settings.limits()) {
                let option = &problem.options[c.option];
                let mut sources = Vec::new();
                if option.holds_file {
                    sources.push((Source::LocalCache, c.evaluation.local_ratio));
                }
                for (&j, &ratio) in c.peers.iter().zip(&c.evaluation.peer_ratios) {
                    sources.push((Source::Peer(option.peers[j].sat), ratio));
                }
                deliveries.push(FileDelivery {
                    request_id: req.request_id,
                    aircraft_id: req.aircraft_id.clone(),
                    cached: true,
                    serving_satellite: option.sat,
                    sources,
                    activated_isls: c.peers.iter().map(|&j| (option.sat, option.peers[j].sat)).collect(),
                    feeder_shares: Vec::new(),
                    delay_s: c.evaluation.delay_s,
                    constraint_binding: c.constraint_binding,
                });
                continue;
            }
        }
        ground.push((req, ground_request(network, req.aircraft, req.bits())));
    }

    let batch: Vec<GroundRequest> = ground.iter().map(|(_, g)| g.clone()).collect();
    let stations = network.ground_station_count;
    let ctx = GroundContext { bandwidth_hz: network.params.ground_to_sat.bandwidth_hz, model, stations };
    // More relays than stations can never be used by one file.
    let level = cap.map_or(stations, |k| k.min(stations));
    let key: Vec<u32> = ground.iter().map(|(r, _)| r.request_id).collect();
    let plans =
        memo.plans.entry(key).or_insert_with(|| solve_levels(&batch, &ctx, stations, settings.local_search_iterations));
    let optimal = &plans[level];
    let plan = match scheme.bandwidth() {
        BandwidthMode::Optimal => optimal.clone(),
        BandwidthMode::Equal => evaluate(&batch, &optimal.assignment, &ctx, BandwidthMode::Equal, Some(level)),
    };
    for (i, (req, g)) in ground.iter().enumerate() {
        let Some(a) = &plan.assignment[i] else {
            undelivered.push(req.request_id);
            continue;
        };
        let route = &g.options[a.option];
        let serving = network.sat_id(route.serving);
        let mut sources = Vec::new();
        let mut activated_isls = Vec::new();
        let mut feeder_shares = Vec::new();
        for (c, &j) in a.streams.iter().enumerate() {
            let s = &route.streams[j];
            let (gs, entry) = (network.ground_station_name(s.gs).to_string(), network.sat_id(s.entry));
            if s.relayed() {
                activated_isls.push((serving, entry));
            }
            feeder_shares.push((gs.clone(), plan.shares[i][c]));
            sources.push((Source::Ground { gs, entry }, plan.ratios[i][c]));
        }
        deliveries.push(FileDelivery {
            request_id: req.request_id,
            aircraft_id: req.aircraft_id.clone(),
            cached: req.cached,
            serving_satellite: serving,
            sources,
            activated_isls,
            feeder_shares,
            delay_s: plan.delays[i],
            constraint_binding: plan.binding[i],
        });
    }

    deliveries.sort_by_key(|d| d.request_id);
    undelivered.sort_unstable();
    let average_delay_s = if deliveries.is_empty() {
        0.0
    } else {
        deliveries.iter().map(|d| d.delay_s).sum::<f64>() / deliveries.len() as f64
    };
    DeliveryPlan { epoch_s: slot.epoch_s, max_isls: cap, scheme, deliveries, undelivered, average_delay_s }
}

pub fn slot_network(scenario: &Scenario, epoch_s: f64) -> IfcNetwork {
    IfcNetwork::build(
        &scenario.constellation,
        &scenario.ground_stations,
        &scenario.aircraft,
        &scenario.link_params,
        &scenario.topology,
        epoch_s,
    )
}

pub fn run_slot(scenario: &Scenario, epoch_s: f64, max_isls: usize, scheme: Scheme, seed: u64) -> DeliveryPlan {
    let network = slot_network(scenario, epoch_s);
    let slot = SlotRequests::generate(scenario, epoch_s, seed);
    plan_slot(&network, &slot, &scenario.ifc, max_isls, scheme)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub max_isls: usize,
    pub mode: Scheme,
    pub seed: u64,
    pub epoch_s: f64,
    pub avg_delay_s: f64,
    pub delivered: usize,
    pub undelivered: usize,
    pub constraint_binding: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by (max_isls, mode, seed, epoch).
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Mean of the per-slot average delays at one point.
    pub fn mean(&self, max_isls: usize, mode: Scheme) -> Option<f64> {
        let v: Vec<f64> =
            self.rows.iter().filter(|r| r.max_isls == max_isls && r.mode == mode).map(|r| r.avg_delay_s).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Whether the cap excluded a peer in any slot at this point.
    pub fn binding(&self, max_isls: usize, mode: Scheme) -> bool {
        self.rows.iter().any(|r| r.max_isls == max_isls && r.mode == mode && r.constraint_binding)
    }

    pub fn row(&self, max_isls: usize, mode: Scheme, seed: u64, epoch_s: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.max_isls == max_isls && r.mode == mode && r.seed == seed && r.epoch_s == epoch_s)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["max_isls", "mode", "seed", "epoch_s", "avg_delay_s", "delivered", "undelivered"])?;
        for r in &self.rows {
            w.write_record([
                r.max_isls.to_string(),
                r.mode.to_string(),
                r.seed.to_string(),
                r.epoch_s.to_string(),
                r.avg_delay_s.to_string(),
                r.delivered.to_string(),
                r.undelivered.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every (max_isls, mode, seed, epoch) cell. Slots run in parallel; the
/// network and requests of a slot are shared by all its cells.
pub fn sweep_max_isls(
    scenario: &Scenario,
    isls: &[usize],
    modes: &[Scheme],
    epochs: &[f64],
    seeds: &[u64],
) -> SweepResult {
    let slots: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| epochs.iter().map(move |&e| (s, e))).collect();
    let mut rows: Vec<SweepRow> = slots
        .par_iter()
        .flat_map_iter(|&(seed, epoch_s)| {
            let network = slot_network(scenario, epoch_s);
            let slot = SlotRequests::generate(scenario, epoch_s, seed);
            let mut memo = GroundMemo::default();
            let mut out = Vec::with_capacity(isls.len() * modes.len());
            for &k in isls {
                for &mode in modes {
                    let plan = plan_slot_with(&network, &slot, &scenario.ifc, k, mode, &mut memo);
                    out.push(SweepRow {
                        max_isls: k,
                        mode,
                        seed,
                        epoch_s,
                        avg_delay_s: plan.average_delay_s,
                        delivered: plan.deliveries.len(),
                        undelivered: plan.undelivered.len(),
                        constraint_binding: plan.constraint_binding(),
                    });
                }
            }
            out
        })
        .collect();
    rows.sort_by(|a, b| {
        a.max_isls
            .cmp(&b.max_isls)
            .then(a.mode.cmp(&b.mode))
            .then(a.seed.cmp(&b.seed))
            .then(a.epoch_s.total_cmp(&b.epoch_s))
    });
    SweepResult { rows }
}
