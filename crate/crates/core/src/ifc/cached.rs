//! Cached-file delivery: pick the aircraft's serving satellite and the
//! cache-holding ISL peers it pulls the file from.

use serde::{Deserialize, Serialize};

use super::network::IfcNetwork;
use super::waterfill::{hops_delay, optimal_ratio_delay, DelayModel, Hop};
use crate::orbital::SatId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// Exact search over serving satellites and peer sets when small,
    /// local search otherwise.
    Optimized,
    /// Nearest serving satellite, then the fastest peers.
    Greedy,
    /// Optimized with the ISL cap lifted.
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchLimits {
    /// Largest peer candidate count searched exhaustively.
    pub exhaustive_limit: usize,
    pub local_search_iterations: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self { exhaustive_limit: 12, local_search_iterations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerOption {
    pub sat: SatId,
    pub distance_km: f64,
    pub delay_s: f64,
    pub rate_bps: f64,
}

/// A candidate serving satellite for one aircraft.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingOption {
    pub sat: SatId,
    pub air_distance_km: f64,
    pub air_delay_s: f64,
    pub air_rate_bps: f64,
    pub holds_file: bool,
    /// Cache holders reachable over one ISL.
    pub peers: Vec<PeerOption>,
}

impl ServingOption {
    fn has_source(&self) -> bool {
        self.holds_file || !self.peers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedProblem {
    pub bits: f64,
    /// Nearest first.
    pub options: Vec<ServingOption>,
}

/// Delay and split of one (serving satellite, peer subset) choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub delay_s: f64,
    /// Fraction served from the serving satellite's own cache.
    pub local_ratio: f64,
    /// Per selected peer, in subset order.
    pub peer_ratios: Vec<f64>,
    /// Per selected peer: propagation delay and rate of the stream.
    pub peer_streams: Vec<(f64, f64)>,
}

/// Delay of serving `bits` through `option` with the peers in `subset`.
///
/// Store-and-forward: the serving satellite assembles the file from its
/// peers (equal-finish split over the ISL streams, nothing to fetch on a
/// local hit) and then sends it down the space-to-air link. Cut-through:
/// every stream is relayed straight to the aircraft and the space-to-air
/// rate is split evenly between the streams. `None` when the choice has no
/// source.
pub fn evaluate(option: &ServingOption, subset: &[usize], bits: f64, model: DelayModel) -> Option<Evaluation> {
    if subset.is_empty() && !option.holds_file {
        return None;
    }
    let air = Hop { delay_s: option.air_delay_s, rate_bps: option.air_rate_bps };
    match model {
        DelayModel::StoreAndForward => {
            let downlink = hops_delay(&[air], bits, model);
            let streams: Vec<(f64, f64)> =
                subset.iter().map(|&j| (option.peers[j].delay_s, option.peers[j].rate_bps)).collect();
            if option.holds_file {
                return Some(Evaluation {
                    delay_s: downlink,
                    local_ratio: 1.0,
                    peer_ratios: vec![0.0; subset.len()],
                    peer_streams: streams,
                });
            }
            let split = optimal_ratio_delay(&streams, bits);
            Some(Evaluation {
                delay_s: split.delay_s + downlink,
                local_ratio: 0.0,
                peer_ratios: split.ratios,
                peer_streams: streams,
            })
        }
        DelayModel::CutThrough => {
            let m = subset.len() + usize::from(option.holds_file);
            let share = option.air_rate_bps / m as f64;
            let mut sources = Vec::with_capacity(m);
            if option.holds_file {
                sources.push((option.air_delay_s, share));
            }
            let streams: Vec<(f64, f64)> = subset
                .iter()
                .map(|&j| (option.peers[j].delay_s + option.air_delay_s, option.peers[j].rate_bps.min(share)))
                .collect();
            sources.extend_from_slice(&streams);
            let split = optimal_ratio_delay(&sources, bits);
            let offset = usize::from(option.holds_file);
            Some(Evaluation {
                delay_s: split.delay_s,
                local_ratio: if option.holds_file { split.ratios[0] } else { 0.0 },
                peer_ratios: split.ratios[offset..].to_vec(),
                peer_streams: streams,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedChoice {
    /// Index into [`CachedProblem::options`].
    pub option: usize,
    /// Indices into the option's peers, ascending.
    pub peers: Vec<usize>,
    pub evaluation: Evaluation,
    /// Some serving candidate had more peers than the ISL cap allowed.
    pub constraint_binding: bool,
}

/// Calls `f` for every subset of `0..n` with at most `max_size` elements,
/// by size and then lexicographically.
pub fn for_each_subset(n: usize, max_size: usize, mut f: impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < left {
                break;
            }
            cur.push(i);
            rec(i + 1, n, left - 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::new();
    for size in 0..=max_size.min(n) {
        rec(0, n, size, &mut cur, &mut f);
    }
}

fn greedy_peers(option: &ServingOption, cap: usize) -> Vec<usize> {
    if option.holds_file {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..option.peers.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (&option.peers[x], &option.peers[y]);
        b.rate_bps.total_cmp(&a.rate_bps).then(a.delay_s.total_cmp(&b.delay_s)).then(x.cmp(&y))
    });
    order.truncate(cap);
    order.sort_unstable();
    order
}

/// Swap/add/remove descent from `seed` under `cap`.
fn descend(
    option: &ServingOption,
    bits: f64,
    cap: usize,
    model: DelayModel,
    iterations: usize,
    mut current: Vec<usize>,
    mut best: Evaluation,
) -> (Vec<usize>, Evaluation) {
    let n = option.peers.len();
    for _ in 0..iterations {
        let mut improved: Option<(Vec<usize>, Evaluation)> = None;
        let mut consider = |mut cand: Vec<usize>| {
            cand.sort_unstable();
            if let Some(e) = evaluate(option, &cand, bits, model) {
                let target = improved.as_ref().map_or(best.delay_s, |(_, b)| b.delay_s);
                if e.delay_s < target {
                    improved = Some((cand, e));
                }
            }
        };
        for i in 0..current.len() {
            let mut c = current.clone();
            c.remove(i);
            consider(c);
        }
        let outside: Vec<usize> = (0..n).filter(|j| !current.contains(j)).collect();
        if current.len() < cap {
            for &j in &outside {
                let mut c = current.clone();
                c.push(j);
                consider(c);
            }
        }
        for i in 0..current.len() {
            for &j in &outside {
                let mut c = current.clone();
                c[i] = j;
                consider(c);
            }
        }
        match improved {
            Some((c, e)) => {
                current = c;
                best = e;
            }
            None => break,
        }
    }
    (current, best)
}

/// Local search for one serving option. Caps are raised one at a time and
/// each level starts from the better of the greedy set and the previous
/// level's result, so the result never worsens as `cap` grows.
fn local_search(
    option: &ServingOption,
    bits: f64,
    cap: usize,
    model: DelayModel,
    iterations: usize,
) -> Option<(Vec<usize>, Evaluation)> {
    let mut best: Option<(Vec<usize>, Evaluation)> = evaluate(option, &[], bits, model).map(|e| (Vec::new(), e));
    for level in 1..=cap.min(option.peers.len()) {
        let greedy = greedy_peers(&ServingOption { holds_file: false, ..option.clone() }, level);
        let mut seed = evaluate(option, &greedy, bits, model).map(|e| (greedy, e));
        if let Some((p, e)) = &best {
            if seed.as_ref().is_none_or(|(_, s)| e.delay_s <= s.delay_s) {
                seed = Some((p.clone(), e.clone()));
            }
        }
        let Some((start, eval)) = seed else { continue };
        best = Some(descend(option, bits, level, model, iterations, start, eval));
    }
    best
}

/// Chooses the serving satellite and peer set. `None` when no candidate has
/// any source of the file.
pub fn solve_cached(
    problem: &CachedProblem,
    max_isls: Option<usize>,
    mode: AssociationMode,
    model: DelayModel,
    limits: SearchLimits,
) -> Option<CachedChoice> {
    let cap = match mode {
        AssociationMode::FullyConnected => usize::MAX,
        _ => max_isls.unwrap_or(usize::MAX),
    };
    let constraint_binding = problem.options.iter().any(|o| o.peers.len() > cap);
    match mode {
        AssociationMode::Greedy => {
            let k = problem.options.iter().position(ServingOption::has_source)?;
            let peers = greedy_peers(&problem.options[k], cap);
            let evaluation = evaluate(&problem.options[k], &peers, problem.bits, model)?;
            Some(CachedChoice { option: k, peers, evaluation, constraint_binding })
        }
        AssociationMode::Optimized | AssociationMode::FullyConnected => {
            let mut best: Option<CachedChoice> = None;
            let mut offer = |k: usize, peers: Vec<usize>, evaluation: Evaluation| {
                if best.as_ref().is_none_or(|b| evaluation.delay_s < b.evaluation.delay_s) {
                    best = Some(CachedChoice { option: k, peers, evaluation, constraint_binding });
                }
            };
            for (k, option) in problem.options.iter().enumerate() {
                if option.peers.len() <= limits.exhaustive_limit {
                    for_each_subset(option.peers.len(), cap, |s| {
                        if let Some(e) = evaluate(option, s, problem.bits, model) {
                            offer(k, s.to_vec(), e);
                        }
                    });
                } else if let Some((peers, e)) =
                    local_search(option, problem.bits, cap, model, limits.local_search_iterations)
                {
                    offer(k, peers, e);
                }
            }
            best
        }
    }
}

/// Builds the cached-delivery problem of one aircraft from the slot network.
pub fn cached_problem(network: &IfcNetwork, aircraft: usize, holders: &[bool], bits: f64) -> CachedProblem {
    let options = network.air[aircraft]
        .iter()
        .map(|a| ServingOption {
            sat: network.sat_id(a.node),
            air_distance_km: a.distance_km,
            air_delay_s: a.delay_s,
            air_rate_bps: a.rate_bps,
            holds_file: holders[a.node],
            peers: network.isl_peers[a.node]
                .iter()
                .filter(|p| holders[p.node])
                .map(|p| PeerOption {
                    sat: network.sat_id(p.node),
                    distance_km: p.distance_km,
                    delay_s: p.delay_s,
                    rate_bps: p.rate_bps,
                })
                .collect(),
        })
        .collect();
    CachedProblem { bits, options }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peer(slot: u32, distance_km: f64) -> PeerOption {
        PeerOption { sat: SatId { plane: 1, slot }, distance_km, delay_s: distance_km / 299_792.458, rate_bps: 1e10 }
    }

    fn option(slot: u32, holds: bool, peers: Vec<PeerOption>) -> ServingOption {
        ServingOption {
            sat: SatId { plane: 0, slot },
            air_distance_km: 1200.0,
            air_delay_s: 1200.0 / 299_792.458,
            air_rate_bps: 8e8,
            holds_file: holds,
            peers,
        }
    }

    #[test]
    fn subsets_enumerate_by_size() {
        let mut seen = Vec::new();
        for_each_subset(3, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![], vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn local_hit_needs_no_isl() {
        let p = CachedProblem { bits: 1080.0 * 500.0, options: vec![option(0, true, vec![peer(0, 2000.0)])] };
        for model in [DelayModel::StoreAndForward, DelayModel::CutThrough] {
            let c = solve_cached(&p, Some(4), AssociationMode::Optimized, model, SearchLimits::default()).unwrap();
            assert!(c.peers.is_empty());
            let o = &p.options[0];
            let expected = o.air_delay_s + p.bits / o.air_rate_bps;
            assert!((c.evaluation.delay_s - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn no_source_is_none() {
        let p = CachedProblem { bits: 1000.0, options: vec![option(0, false, vec![])] };
        assert!(solve_cached(
            &p,
            Some(2),
            AssociationMode::Optimized,
            DelayModel::StoreAndForward,
            SearchLimits::default()
        )
        .is_none());
        assert!(solve_cached(
            &p,
            Some(2),
            AssociationMode::Greedy,
            DelayModel::StoreAndForward,
            SearchLimits::default()
        )
        .is_none());
    }

    #[test]
    fn parallel_peers_help_under_store_and_forward() {
        let peers = vec![peer(0, 1000.0), peer(1, 1000.0), peer(2, 1000.0)];
        let p = CachedProblem { bits: 3000.0 * 1080.0, options: vec![option(0, false, peers)] };
        let limits = SearchLimits::default();
        let one = solve_cached(&p, Some(1), AssociationMode::Optimized, DelayModel::StoreAndForward, limits).unwrap();
        let three = solve_cached(&p, Some(3), AssociationMode::Optimized, DelayModel::StoreAndForward, limits).unwrap();
        assert_eq!(three.peers, vec![0, 1, 2]);
        assert!(three.evaluation.delay_s < one.evaluation.delay_s);
        assert!(one.constraint_binding && !three.constraint_binding);
        let full =
            solve_cached(&p, Some(1), AssociationMode::FullyConnected, DelayModel::StoreAndForward, limits).unwrap();
        assert_eq!(full.evaluation, three.evaluation);
    }

    #[test]
    fn local_search_matches_exhaustive_on_easy_instance() {
        let peers: Vec<PeerOption> = (0..15).map(|k| peer(k, 800.0 + 97.0 * ((k * 7) % 15) as f64)).collect();
        let p = CachedProblem { bits: 2500.0 * 1080.0, options: vec![option(0, false, peers)] };
        let heuristic = solve_cached(
            &p,
            Some(3),
            AssociationMode::Optimized,
            DelayModel::StoreAndForward,
            SearchLimits { exhaustive_limit: 12, local_search_iterations: 200 },
        )
        .unwrap();
        let exact = solve_cached(
            &p,
            Some(3),
            AssociationMode::Optimized,
            DelayModel::StoreAndForward,
            SearchLimits { exhaustive_limit: 20, local_search_iterations: 0 },
        )
        .unwrap();
        assert!(heuristic.peers.len() <= 3);
        assert!((heuristic.evaluation.delay_s - exact.evaluation.delay_s).abs() < 1e-12);
    }

    #[test]
    fn greedy_takes_nearest_serving_satellite_with_a_source() {
        let far = ServingOption { air_distance_km: 2000.0, ..option(1, true, vec![]) };
        let near_empty = ServingOption { air_distance_km: 1100.0, ..option(2, false, vec![]) };
        let near = option(0, false, vec![peer(0, 3000.0), peer(1, 1500.0)]);
        let p = CachedProblem { bits: 1e5, options: vec![near_empty, near, far] };
        let g =
            solve_cached(&p, Some(1), AssociationMode::Greedy, DelayModel::StoreAndForward, SearchLimits::default())
                .unwrap();
        assert_eq!(g.option, 1);
        assert_eq!(g.peers, vec![1]);
        let o =
            solve_cached(&p, Some(1), AssociationMode::Optimized, DelayModel::StoreAndForward, SearchLimits::default())
                .unwrap();
        assert!(o.evaluation.delay_s <= g.evaluation.delay_s);
    }
}
