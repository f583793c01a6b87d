//! Non-cached delivery: a file is fetched from ground stations over one or
//! more feeder streams that meet at the aircraft's serving satellite, and
//! every station splits its feeder bandwidth over the streams it carries.
//!
//! A stream enters the space segment either at the serving satellite itself
//! or at an in-range peer, in which case it costs the serving satellite one
//! ISL. A file uses at most one stream per station.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::bandwidth::{optimal_shares, shannon_slope, total_delay, FeederDemand, ShareCost};
use super::network::{IfcNetwork, Reach};
use super::waterfill::{hops_delay, optimal_ratio_delay, DelayModel, Hop, RatioSplit};
use crate::link_budget::shannon_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    Optimal,
    Equal,
}

/// GS -> feeder -> entry satellite (-> one ISL when the entry is a peer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamOption {
    pub gs: usize,
    pub entry: usize,
    pub feeder: Reach,
    pub isl: Option<Reach>,
    /// Linear feeder SNR over the whole feeder band.
    pub feeder_snr: f64,
}

impl StreamOption {
    pub fn relayed(&self) -> bool {
        self.isl.is_some()
    }
}

/// The streams able to reach one candidate serving satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingRoutes {
    pub serving: usize,
    pub air: Reach,
    pub streams: Vec<StreamOption>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundRequest {
    pub bits: f64,
    /// Nearest serving satellite first.
    pub options: Vec<ServingRoutes>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundContext {
    pub bandwidth_hz: f64,
    pub model: DelayModel,
    pub stations: usize,
}

/// Serving option and streams (indices into its `streams`, ascending) of one
/// file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub option: usize,
    pub streams: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundPlan {
    /// `None` for files with no route.
    pub assignment: Vec<Option<Assignment>>,
    /// Feeder share per file per stream, in assignment order.
    pub shares: Vec<Vec<f64>>,
    /// Download ratio per file per stream.
    pub ratios: Vec<Vec<f64>>,
    pub delays: Vec<f64>,
    /// Some serving candidate reached more stations through peers than the
    /// ISL cap allowed.
    pub binding: Vec<bool>,
}

impl GroundPlan {
    pub fn total_delay(&self) -> f64 {
        self.delays.iter().filter(|d| d.is_finite()).sum()
    }
}

fn dominates(a: &StreamOption, b: &StreamOption) -> bool {
    let prop = |s: &StreamOption| s.feeder.delay_s + s.isl.map_or(0.0, |h| h.delay_s);
    let isl_rate = |s: &StreamOption| s.isl.map_or(f64::INFINITY, |h| h.rate_bps);
    a.gs == b.gs
        && a.relayed() <= b.relayed()
        && prop(a) <= prop(b)
        && a.feeder_snr >= b.feeder_snr
        && isl_rate(a) >= isl_rate(b)
}

/// Every stream able to feed each satellite serving `aircraft`, minus those
/// beaten by another stream from the same station that needs no more ISLs.
pub fn ground_request(network: &IfcNetwork, aircraft: usize, bits: f64) -> GroundRequest {
    let feeder = &network.params.ground_to_sat;
    let options = network.air[aircraft]
        .iter()
        .map(|air| {
            let serving = air.node;
            let direct = std::iter::once((serving, None));
            let relayed = network.isl_peers[serving].iter().map(|p| (p.node, Some(*p)));
            let mut all = Vec::new();
            for (entry, isl) in direct.chain(relayed) {
                for f in &network.feeders[entry] {
                    let Ok(snr) = feeder.full_band_snr(f.distance_km.max(1e-3)) else { continue };
                    all.push(StreamOption { gs: f.node, entry, feeder: *f, isl, feeder_snr: snr });
                }
            }
            let streams = (0..all.len())
                .filter(|&i| {
                    !(0..all.len())
                        .any(|j| j != i && dominates(&all[j], &all[i]) && (!dominates(&all[i], &all[j]) || j < i))
                })
                .map(|i| all[i])
                .collect();
            ServingRoutes { serving, air: *air, streams }
        })
        .collect();
    GroundRequest { bits, options }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        1.0 / (1.0 / a + 1.0 / b)
    }
}

/// How one stream turns feeder share into (propagation delay, rate) at the
/// point where the file is reassembled.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StreamShape {
    prop: f64,
    snr: f64,
    bandwidth_hz: f64,
    /// ISL rate, for store-and-forward at the entry.
    relay_rate: Option<f64>,
    /// Rate ceiling under cut-through.
    cap: f64,
}

impl StreamShape {
    fn new(route: &ServingRoutes, s: &StreamOption, streams: usize, ctx: &GroundContext) -> Self {
        let base = s.feeder.delay_s + s.isl.map_or(0.0, |h| h.delay_s);
        match ctx.model {
            DelayModel::StoreAndForward => Self {
                prop: base,
                snr: s.feeder_snr,
                bandwidth_hz: ctx.bandwidth_hz,
                relay_rate: s.isl.map(|h| h.rate_bps),
                cap: f64::INFINITY,
            },
            DelayModel::CutThrough => Self {
                prop: base + route.air.delay_s,
                snr: s.feeder_snr,
                bandwidth_hz: ctx.bandwidth_hz,
                relay_rate: None,
                cap: s.isl.map_or(f64::INFINITY, |h| h.rate_bps).min(route.air.rate_bps / streams as f64),
            },
        }
    }

    fn raw(&self, share: f64) -> f64 {
        if share <= 0.0 {
            0.0
        } else {
            shannon_rate(self.bandwidth_hz, self.snr, share)
        }
    }

    fn rate(&self, share: f64) -> f64 {
        let raw = self.raw(share);
        match self.relay_rate {
            Some(r) => harmonic(raw, r),
            None => raw.min(self.cap),
        }
    }

    /// `d rate / d share`.
    fn slope(&self, share: f64) -> f64 {
        let raw = self.raw(share);
        if raw <= 0.0 {
            return 0.0;
        }
        let inner = match self.relay_rate {
            Some(r) => {
                let h = harmonic(raw, r);
                (h / raw) * (h / raw)
            }
            None if raw >= self.cap => 0.0,
            None => 1.0,
        };
        inner * shannon_slope(self.bandwidth_hz, self.snr, share)
    }
}

/// Part of the delay paid after reassembly at the serving satellite.
fn tail_delay(route: &ServingRoutes, bits: f64, model: DelayModel) -> f64 {
    match model {
        DelayModel::StoreAndForward => {
            hops_delay(&[Hop { delay_s: route.air.delay_s, rate_bps: route.air.rate_bps }], bits, model)
        }
        DelayModel::CutThrough => 0.0,
    }
}

fn shapes(req: &GroundRequest, a: &Assignment, ctx: &GroundContext) -> Vec<StreamShape> {
    let route = &req.options[a.option];
    a.streams.iter().map(|&j| StreamShape::new(route, &route.streams[j], a.streams.len(), ctx)).collect()
}

/// Delay and ratios of one file under the given per-stream shares.
pub fn file_delay(req: &GroundRequest, a: &Assignment, shares: &[f64], ctx: &GroundContext) -> RatioSplit {
    let sources: Vec<(f64, f64)> = shapes(req, a, ctx).iter().zip(shares).map(|(s, &b)| (s.prop, s.rate(b))).collect();
    let split = optimal_ratio_delay(&sources, req.bits);
    RatioSplit {
        delay_s: split.delay_s + tail_delay(&req.options[a.option], req.bits, ctx.model),
        ratios: split.ratios,
    }
}

/// One stream's file delay as a function of its own share, the file's
/// other streams held fixed.
struct StreamDemand {
    bits: f64,
    tail: f64,
    own: StreamShape,
    others: Vec<(f64, f64)>,
}

impl StreamDemand {
    fn finish(&self, share: f64) -> (f64, f64) {
        let mut sources = self.others.clone();
        sources.push((self.own.prop, self.own.rate(share)));
        let d = optimal_ratio_delay(&sources, self.bits).delay_s;
        let active: f64 = sources.iter().filter(|(p, _)| *p < d).map(|(_, r)| r).sum();
        (d, active)
    }
}

impl ShareCost for StreamDemand {
    fn delay(&self, share: f64) -> f64 {
        self.finish(share).0 + self.tail
    }

    fn marginal(&self, share: f64) -> f64 {
        if self.bits == 0.0 {
            return 0.0;
        }
        let (d, active) = self.finish(share);
        if !(d > self.own.prop) || active <= 0.0 {
            return 0.0;
        }
        (d - self.own.prop) / active * self.own.slope(share)
    }

    fn idle(&self) -> bool {
        self.bits == 0.0
    }
}

/// (file, stream position) pairs carried by each station.
fn station_members(
    requests: &[GroundRequest],
    assign: &[Option<Assignment>],
    stations: usize,
) -> Vec<Vec<(usize, usize)>> {
    let mut members = vec![Vec::new(); stations];
    for (f, a) in assign.iter().enumerate() {
        if let Some(a) = a {
            for (c, &j) in a.streams.iter().enumerate() {
                members[requests[f].options[a.option].streams[j].gs].push((f, c));
            }
        }
    }
    members
}

fn equal_split(requests: &[GroundRequest], assign: &[Option<Assignment>], stations: usize) -> Vec<Vec<f64>> {
    let members = station_members(requests, assign, stations);
    let mut shares: Vec<Vec<f64>> =
        assign.iter().map(|a| vec![0.0; a.as_ref().map_or(0, |a| a.streams.len())]).collect();
    for m in &members {
        for &(f, c) in m {
            shares[f][c] = 1.0 / m.len() as f64;
        }
    }
    shares
}

fn total(requests: &[GroundRequest], assign: &[Option<Assignment>], shares: &[Vec<f64>], ctx: &GroundContext) -> f64 {
    assign
        .iter()
        .enumerate()
        .filter_map(|(f, a)| a.as_ref().map(|a| file_delay(&requests[f], a, &shares[f], ctx).delay_s))
        .sum()
}

/// Feeder shares for a fixed assignment. Optimal mode improves the equal
/// split one station at a time, re-solving that station's allocation with
/// every other share held fixed, until a full round gains nothing.
pub fn allocate(
    requests: &[GroundRequest],
    assign: &[Option<Assignment>],
    ctx: &GroundContext,
    mode: BandwidthMode,
) -> Vec<Vec<f64>> {
    let mut shares = equal_split(requests, assign, ctx.stations);
    if mode == BandwidthMode::Equal {
        return shares;
    }
    let members = station_members(requests, assign, ctx.stations);
    let mut current = total(requests, assign, &shares, ctx);
    for _ in 0..30 {
        for m in members.iter().filter(|m| !m.is_empty()) {
            let demands: Vec<StreamDemand> = m
                .iter()
                .map(|&(f, c)| {
                    let a = assign[f].as_ref().unwrap();
                    let sh = shapes(&requests[f], a, ctx);
                    StreamDemand {
                        bits: requests[f].bits,
                        tail: tail_delay(&requests[f].options[a.option], requests[f].bits, ctx.model),
                        own: sh[c],
                        others: (0..sh.len())
                            .filter(|&o| o != c)
                            .map(|o| (sh[o].prop, sh[o].rate(shares[f][o])))
                            .collect(),
                    }
                })
                .collect();
            let old: Vec<f64> = m.iter().map(|&(f, c)| shares[f][c]).collect();
            let new = optimal_shares(&demands);
            if total_delay(&demands, &new) < total_delay(&demands, &old) {
                for (&(f, c), &s) in m.iter().zip(&new) {
                    shares[f][c] = s;
                }
            }
        }
        let next = total(requests, assign, &shares, ctx);
        let gained = current - next;
        current = next;
        if !(gained > 1e-12 * current) {
            break;
        }
    }
    shares
}

pub fn evaluate(
    requests: &[GroundRequest],
    assign: &[Option<Assignment>],
    ctx: &GroundContext,
    mode: BandwidthMode,
    level: Option<usize>,
) -> GroundPlan {
    let shares = allocate(requests, assign, ctx, mode);
    let mut ratios = Vec::with_capacity(requests.len());
    let mut delays = Vec::with_capacity(requests.len());
    for (f, a) in assign.iter().enumerate() {
        match a {
            Some(a) => {
                let split = file_delay(&requests[f], a, &shares[f], ctx);
                delays.push(split.delay_s);
                ratios.push(split.ratios);
            }
            None => {
                delays.push(f64::INFINITY);
                ratios.push(Vec::new());
            }
        }
    }
    let binding = requests.iter().map(|q| binding(q, level)).collect();
    GroundPlan { assignment: assign.to_vec(), shares, ratios, delays, binding }
}

fn binding(req: &GroundRequest, level: Option<usize>) -> bool {
    let Some(level) = level else { return false };
    req.options.iter().any(|o| {
        let mut gs: Vec<usize> = o.streams.iter().filter(|s| s.relayed()).map(|s| s.gs).collect();
        gs.sort_unstable();
        gs.dedup();
        gs.len() > level
    })
}

// Single-stream planning, used to seed the multi-stream search.

/// A single-stream route of one file, flattened over serving options.
#[derive(Debug, Clone, Copy)]
struct SingleRoute {
    option: usize,
    stream: usize,
    gs: usize,
    demand: FeederDemand,
}

fn single_routes(req: &GroundRequest, ctx: &GroundContext, relays: bool) -> Vec<SingleRoute> {
    let mut out = Vec::new();
    for (o, route) in req.options.iter().enumerate() {
        for (j, s) in route.streams.iter().enumerate() {
            if s.relayed() && !relays {
                continue;
            }
            let shape = StreamShape::new(route, s, 1, ctx);
            let tail = tail_delay(route, req.bits, ctx.model);
            let demand = match shape.relay_rate {
                Some(r) => FeederDemand {
                    bits: req.bits,
                    fixed_delay_s: shape.prop + tail + if req.bits > 0.0 { req.bits / r } else { 0.0 },
                    bandwidth_hz: shape.bandwidth_hz,
                    full_band_snr: shape.snr,
                    rate_cap_bps: f64::INFINITY,
                },
                None => FeederDemand {
                    bits: req.bits,
                    fixed_delay_s: shape.prop + tail,
                    bandwidth_hz: shape.bandwidth_hz,
                    full_band_snr: shape.snr,
                    rate_cap_bps: shape.cap,
                },
            };
            out.push(SingleRoute { option: o, stream: j, gs: s.gs, demand });
        }
    }
    out
}

/// Summed delay of one station's files under optimal shares, memoized by
/// the station's (file, route) membership.
struct StationCosts<'a> {
    routes: &'a [Vec<SingleRoute>],
    memo: HashMap<(usize, Vec<(usize, usize)>), f64>,
}

impl StationCosts<'_> {
    fn cost(&mut self, choice: &[Option<usize>], gs: usize) -> f64 {
        let routes = self.routes;
        let members: Vec<(usize, usize)> =
            (0..routes.len()).filter_map(|i| choice[i].filter(|&r| routes[i][r].gs == gs).map(|r| (i, r))).collect();
        if members.is_empty() {
            return 0.0;
        }
        *self.memo.entry((gs, members)).or_insert_with_key(|(_, m)| {
            let demands: Vec<FeederDemand> = m.iter().map(|&(i, r)| routes[i][r].demand).collect();
            total_delay(&demands, &optimal_shares(&demands))
        })
    }
}

/// Re-routes one file at a time while that lowers the summed delay.
fn descend_single(
    routes: &[Vec<SingleRoute>],
    mut choice: Vec<Option<usize>>,
    iterations: usize,
) -> Vec<Option<usize>> {
    let mut costs = StationCosts { routes, memo: HashMap::new() };
    for _ in 0..iterations {
        let mut improved = false;
        for i in 0..routes.len() {
            let Some(current) = choice[i] else { continue };
            let old_gs = routes[i][current].gs;
            let with = costs.cost(&choice, old_gs);
            let mut trial = choice.clone();
            trial[i] = None;
            let without = costs.cost(&trial, old_gs);
            for (r, route) in routes[i].iter().enumerate() {
                if r == current {
                    continue;
                }
                let new_gs = route.gs;
                trial[i] = Some(r);
                let (before, after) = if new_gs == old_gs {
                    (with, costs.cost(&trial, old_gs))
                } else {
                    (with + costs.cost(&choice, new_gs), without + costs.cost(&trial, new_gs))
                };
                if after < before - 1e-15 * before.abs() {
                    choice = trial.clone();
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    choice
}

/// Nearest serving satellite, direct entry before relayed, nearest entry,
/// nearest station.
fn greedy_single(routes: &[SingleRoute], req: &GroundRequest) -> Option<usize> {
    (0..routes.len()).min_by(|&x, &y| {
        let key = |r: &SingleRoute| {
            let s = &req.options[r.option].streams[r.stream];
            (r.option, s.isl.map_or(0.0, |h| h.distance_km), s.feeder.distance_km)
        };
        let (a, b) = (key(&routes[x]), key(&routes[y]));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)).then(x.cmp(&y))
    })
}

/// Best single-stream assignment by route descent from two starts: each
/// file's best standalone route, and the greedy routes.
fn single_stream_plan(
    requests: &[GroundRequest],
    ctx: &GroundContext,
    relays: bool,
    iterations: usize,
) -> Vec<Option<Assignment>> {
    let routes: Vec<Vec<SingleRoute>> = requests.iter().map(|q| single_routes(q, ctx, relays)).collect();
    let standalone: Vec<Option<usize>> = routes
        .iter()
        .map(|rs| {
            (0..rs.len()).min_by(|&x, &y| rs[x].demand.delay(1.0).total_cmp(&rs[y].demand.delay(1.0)).then(x.cmp(&y)))
        })
        .collect();
    let greedy: Vec<Option<usize>> = routes.iter().zip(requests).map(|(rs, q)| greedy_single(rs, q)).collect();
    let to_assign = |choice: &[Option<usize>]| -> Vec<Option<Assignment>> {
        choice
            .iter()
            .zip(&routes)
            .map(|(c, rs)| c.map(|r| Assignment { option: rs[r].option, streams: vec![rs[r].stream] }))
            .collect()
    };
    let mut best: Option<(f64, Vec<Option<Assignment>>)> = None;
    for start in [standalone, greedy] {
        let assign = to_assign(&descend_single(&routes, start, iterations));
        let shares = allocate(requests, &assign, ctx, BandwidthMode::Optimal);
        let t = total(requests, &assign, &shares, ctx);
        if best.as_ref().is_none_or(|(b, _)| t < *b) {
            best = Some((t, assign));
        }
    }
    best.map(|(_, a)| a).unwrap_or_default()
}

// Multi-stream search.

fn relayed_count(req: &GroundRequest, a: &Assignment) -> usize {
    a.streams.iter().filter(|&&j| req.options[a.option].streams[j].relayed()).count()
}

/// Candidate replacements for one file's assignment at `level` relays.
fn moves(req: &GroundRequest, a: &Assignment, level: usize, ctx: &GroundContext) -> Vec<Assignment> {
    let route = &req.options[a.option];
    let gs_of = |j: usize| route.streams[j].gs;
    let mut out = Vec::new();
    let mut push = |mut streams: Vec<usize>| {
        streams.sort_unstable();
        let cand = Assignment { option: a.option, streams };
        if relayed_count(req, &cand) <= level {
            out.push(cand);
        }
    };
    for j in 0..route.streams.len() {
        if a.streams.contains(&j) {
            continue;
        }
        if a.streams.iter().all(|&k| gs_of(k) != gs_of(j)) {
            let mut s = a.streams.clone();
            s.push(j);
            push(s);
        }
        for (i, &k) in a.streams.iter().enumerate() {
            if gs_of(k) == gs_of(j) || a.streams.iter().all(|&x| gs_of(x) != gs_of(j)) {
                let mut s = a.streams.clone();
                s[i] = j;
                push(s);
            }
        }
    }
    if a.streams.len() > 1 {
        for i in 0..a.streams.len() {
            let mut s = a.streams.clone();
            s.remove(i);
            push(s);
        }
    }
    for (o, other) in req.options.iter().enumerate() {
        if o == a.option {
            continue;
        }
        let best = (0..other.streams.len()).filter(|&j| level > 0 || !other.streams[j].relayed()).min_by(|&x, &y| {
            let d = |j: usize| file_delay(req, &Assignment { option: o, streams: vec![j] }, &[1.0], ctx).delay_s;
            d(x).total_cmp(&d(y)).then(x.cmp(&y))
        });
        if let Some(j) = best {
            out.push(Assignment { option: o, streams: vec![j] });
        }
    }
    out
}

/// First-improvement local search scored with equal feeder shares.
fn search(
    requests: &[GroundRequest],
    ctx: &GroundContext,
    level: usize,
    mut assign: Vec<Option<Assignment>>,
    iterations: usize,
) -> Vec<Option<Assignment>> {
    let score = |a: &[Option<Assignment>]| total(requests, a, &equal_split(requests, a, ctx.stations), ctx);
    let mut current = score(&assign);
    for _ in 0..iterations {
        let mut improved = false;
        for f in 0..requests.len() {
            let Some(a) = assign[f].clone() else { continue };
            for cand in moves(&requests[f], &a, level, ctx) {
                let mut trial = assign.clone();
                trial[f] = Some(cand);
                let s = score(&trial);
                if s < current - 1e-15 * current {
                    assign = trial;
                    current = s;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    assign
}

/// Optimal-share plans for every relay budget `0..=max_level`.
///
/// Each level starts from the better of the previous level's plan and the
/// best single-stream plan, searches multi-stream assignments, and keeps the
/// result only if it beats its start; the delay is therefore non-increasing
/// in the level.
pub fn solve_levels(
    requests: &[GroundRequest],
    ctx: &GroundContext,
    max_level: usize,
    iterations: usize,
) -> Vec<GroundPlan> {
    let mut plans: Vec<GroundPlan> = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let mut starts = Vec::new();
        if let Some(prev) = plans.last() {
            starts.push(prev.assignment.clone());
        }
        if level <= 1 {
            starts.push(single_stream_plan(requests, ctx, level == 1, iterations));
        }
        let mut best: Option<GroundPlan> = None;
        for start in starts {
            let p = evaluate(requests, &start, ctx, BandwidthMode::Optimal, Some(level));
            if best.as_ref().is_none_or(|b| p.total_delay() < b.total_delay()) {
                best = Some(p);
            }
        }
        let seed = best.expect("at least one start");
        let found = search(requests, ctx, level, seed.assignment.clone(), iterations);
        let candidate = evaluate(requests, &found, ctx, BandwidthMode::Optimal, Some(level));
        plans.push(if candidate.total_delay() < seed.total_delay() { candidate } else { seed });
    }
    plans
}
