//! Time-dependent routing over the multimodal graph.
//!
//! Link travel times live in 96 fifteen-minute bins and are applied
//! piecewise-constant by entry time. All route arithmetic is integer
//! seconds: a link entered at second `t` in bin `b` costs `ceil(time[b])`,
//! and a vehicle may instead wait (at full time cost) for a later bin when
//! that strictly improves arrival. That waiting envelope makes every link's
//! arrival function non-decreasing, so label-setting search is exact.
//!
//! Generalized cost weights walking and stop waiting above in-vehicle time;
//! weights are integers over seconds, so costs are exactly representable
//! and comparable across algorithms.

pub mod intermodal;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::config::RouterConfig;
use crate::demand::Skims;
use crate::error::Result;
use crate::network::MultimodalGraph;
use crate::types::{Mode, ModeSet, VehicleClass};

pub const BIN_S: u32 = 900;
pub const BINS: usize = 96;

/// Expected link travel times (seconds) per 15-minute bin, car class.
/// Other roadway classes scale by their free-flow ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeProfile {
    pub times: Vec<Vec<f64>>,
}

impl TravelTimeProfile {
    pub fn free_flow(graph: &MultimodalGraph) -> TravelTimeProfile {
        let times = graph
            .links
            .iter()
            .map(|l| vec![l.ff_time(VehicleClass::Car, &graph.class_params); BINS])
            .collect();
        TravelTimeProfile { times }
    }

    /// Raw profile time for a car entering the link at second `t`.
    pub fn time_at(&self, link: usize, t: u64) -> f64 {
        self.times[link][bin_of(t)]
    }

    /// Clamps every entry to its free-flow floor.
    pub fn floor_free_flow(&mut self, graph: &MultimodalGraph) {
        for (l, link) in graph.links.iter().enumerate() {
            let ff = link.ff_time(VehicleClass::Car, &graph.class_params);
            for v in &mut self.times[l] {
                if *v < ff {
                    *v = ff;
                }
            }
        }
    }
}

pub fn bin_of(t: u64) -> usize {
    ((t / BIN_S as u64) as usize).min(BINS - 1)
}

/// Ceiling to whole seconds with a tolerance for float division noise
/// (700 m / 1.4 m/s must be 500 s, not 501).
pub fn ceil_secs(x: f64) -> u64 {
    (x - 1e-9 - x.abs() * 1e-12).ceil().max(0.0) as u64
}

/// Generalized-cost weights in tenths (in-vehicle second = 10). Keeping
/// costs integral makes search results exactly comparable across
/// algorithms and runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcWeights {
    pub ivt: u64,
    pub wait: u64,
    pub walk: u64,
}

impl GcWeights {
    pub fn from_config(cfg: &RouterConfig) -> GcWeights {
        GcWeights {
            ivt: 10,
            wait: (cfg.wait_weight * 10.0).round().max(0.0) as u64,
            walk: (cfg.walk_weight * 10.0).round().max(0.0) as u64,
        }
    }

    pub fn min_weight(&self) -> u64 {
        self.ivt.min(self.wait).min(self.walk).max(1)
    }

    /// Weight applied to a leg's duration when pricing a plan.
    pub fn for_leg(&self, kind: LegKind, at_stop: bool) -> u64 {
        match kind {
            LegKind::Walk => self.walk,
            // Waiting in the vehicle for a better bin prices as drive time;
            // waiting on a platform prices as transit wait.
            LegKind::Wait if at_stop => self.wait,
            _ => self.ivt,
        }
    }
}

/// Integer cost tables and waiting envelopes derived from a profile.
/// Rebuilt whenever the profile changes.
pub struct PreparedProfile {
    /// cost[class][link][bin] = ceil(seconds), class ∈ {car, truck}.
    cost: [Vec<[u32; BINS]>; 2],
    /// envelope[class][link][b] = min over k ≥ b of (bin_start(k) + cost_k);
    /// entry BINS is the empty-suffix sentinel.
    envelope: [Vec<[u64; BINS + 1]>; 2],
    pub weights: GcWeights,
}

fn class_slot(class: VehicleClass) -> usize {
    match class {
        VehicleClass::Car | VehicleClass::Bus => 0,
        VehicleClass::Truck => 1,
    }
}

impl PreparedProfile {
    pub fn new(
        graph: &MultimodalGraph,
        profile: &TravelTimeProfile,
        router_cfg: &RouterConfig,
    ) -> PreparedProfile {
        let n = graph.links.len();
        let mut cost = [vec![[0u32; BINS]; n], vec![[0u32; BINS]; n]];
        let mut envelope = [
            vec![[u64::MAX; BINS + 1]; n],
            vec![[u64::MAX; BINS + 1]; n],
        ];
        for (slot, class) in [(0, VehicleClass::Car), (1, VehicleClass::Truck)] {
            for (l, link) in graph.links.iter().enumerate() {
                // Scale car profile times by the class free-flow ratio.
                let ratio = link.ff_time(class, &graph.class_params)
                    / link.ff_time(VehicleClass::Car, &graph.class_params);
                for b in 0..BINS {
                    let t = profile.times[l][b] * ratio;
                    cost[slot][l][b] = ceil_secs(t).max(1) as u32;
                }
                let mut best = u64::MAX;
                for b in (0..BINS).rev() {
                    let depart_at_start = b as u64 * BIN_S as u64 + cost[slot][l][b] as u64;
                    best = best.min(depart_at_start);
                    envelope[slot][l][b] = best;
                }
            }
        }
        PreparedProfile {
            cost,
            envelope,
            weights: GcWeights::from_config(router_cfg),
        }
    }

    pub fn cost_at(&self, class: VehicleClass, link: usize, t: u64) -> u32 {
        self.cost[class_slot(class)][link][bin_of(t)]
    }

    /// Earliest arrival after traversing `link` when present at its tail at
    /// second `t`, allowing a wait for a later bin. Returns (arrival,
    /// entry): entry > t means wait until `entry` before entering.
    pub fn arrival(&self, class: VehicleClass, link: usize, t: u64) -> (u64, u64) {
        let slot = class_slot(class);
        let b = bin_of(t);
        let direct = t + self.cost[slot][link][b] as u64;
        let enveloped = if b + 1 < BINS {
            self.envelope[slot][link][b + 1]
        } else {
            u64::MAX
        };
        if direct <= enveloped {
            return (direct, t);
        }
        // Find the earliest later bin start achieving the envelope.
        for k in (b + 1)..BINS {
            let start = k as u64 * BIN_S as u64;
            if start + self.cost[slot][link][k] as u64 == enveloped {
                return (enveloped, start);
            }
        }
        (direct, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Drive,
    Walk,
    Bike,
    Board,
    Ride,
    Alight,
    Wait,
    Park,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub kind: LegKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<u64>,
    /// Pattern index in the graph, for board/ride/alight/wait-at-stop legs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trip: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
    pub dur_s: u32,
    pub dist_m: f64,
}

impl Leg {
    pub(crate) fn simple(kind: LegKind, dur_s: u32) -> Leg {
        Leg {
            kind,
            link: None,
            pattern: None,
            trip: None,
            stop: None,
            dur_s,
            dist_m: 0.0,
        }
    }

    pub(crate) fn on_link(kind: LegKind, link: u64, dur_s: u32, dist_m: f64) -> Leg {
        Leg {
            link: Some(link),
            dist_m,
            ..Leg::simple(kind, dur_s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripPlan {
    pub person_id: u64,
    pub activity_id: u64,
    pub mode: Mode,
    pub departure: u64,
    pub legs: Vec<Leg>,
    pub predicted_total: u64,
    /// Weighted tenths-of-seconds; divide by 10 for weighted seconds.
    pub generalized_cost: u64,
    pub distance_m: f64,
    pub origin_node: usize,
    pub dest_node: usize,
}

impl TripPlan {
    pub fn arrival(&self) -> u64 {
        self.departure + self.predicted_total
    }

    pub fn gc_secs(&self) -> f64 {
        self.generalized_cost as f64 / 10.0
    }

    /// Sum of leg durations must equal the predicted total exactly.
    pub fn consistent(&self) -> bool {
        self.legs.iter().map(|l| l.dur_s as u64).sum::<u64>() == self.predicted_total
    }

    pub fn drive_distance_m(&self) -> f64 {
        self.legs
            .iter()
            .filter(|l| l.kind == LegKind::Drive)
            .map(|l| l.dist_m)
            .sum()
    }
}

fn walk_secs(graph: &MultimodalGraph, dist_m: f64) -> u32 {
    ceil_secs(dist_m / graph.walk_speed_mps) as u32
}

fn bike_secs(graph: &MultimodalGraph, dist_m: f64) -> u32 {
    ceil_secs(dist_m / graph.bike_speed_mps) as u32
}

fn mode_flag(mode: Mode) -> ModeSet {
    match mode {
        Mode::Drive => ModeSet::AUTO,
        Mode::Walk => ModeSet::WALK,
        Mode::Bike => ModeSet::BIKE,
        Mode::WalkToTransit | Mode::DriveToTransit => ModeSet::WALK,
    }
}

/// Unimodal time-dependent shortest path (earliest arrival). Drive uses
/// the congestion profile with optional bin waiting; walk and bike use
/// static speeds. Returns None when unreachable.
pub fn shortest_path(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    dest: usize,
    departure: u64,
    mode: Mode,
) -> Option<TripPlan> {
    let class = match mode {
        Mode::Drive | Mode::DriveToTransit => Some(VehicleClass::Car),
        _ => None,
    };
    shortest_path_inner(graph, prep, origin, dest, departure, mode, class, true)
}

/// Truck routing reuses auto paths with truck class speeds.
pub fn shortest_path_truck(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    dest: usize,
    departure: u64,
) -> Option<TripPlan> {
    shortest_path_inner(
        graph,
        prep,
        origin,
        dest,
        departure,
        Mode::Drive,
        Some(VehicleClass::Truck),
        true,
    )
}

/// Same search with the A* heuristic disabled (test hook: results must
/// match `shortest_path` exactly).
pub fn shortest_path_no_heuristic(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    dest: usize,
    departure: u64,
    mode: Mode,
) -> Option<TripPlan> {
    let class = match mode {
        Mode::Drive | Mode::DriveToTransit => Some(VehicleClass::Car),
        _ => None,
    };
    shortest_path_inner(graph, prep, origin, dest, departure, mode, class, false)
}

#[allow(clippy::too_many_arguments)]
fn shortest_path_inner(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    dest: usize,
    departure: u64,
    mode: Mode,
    class: Option<VehicleClass>,
    use_heuristic: bool,
) -> Option<TripPlan> {
    let n = graph.nodes.len();
    if origin >= n || dest >= n {
        return None;
    }
    let flag = mode_flag(mode);
    let vmax = graph.idx.vmax_mps;
    let h = |node: usize| -> u64 {
        if use_heuristic && node != dest {
            (graph.straight_line_m(node, dest) / vmax).floor() as u64
        } else {
            0
        }
    };

    let mut best = vec![u64::MAX; n];
    // prev[node] = (prev node, link idx, entry time at link tail).
    let mut prev: Vec<Option<(usize, usize, u64)>> = vec![None; n];
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    best[origin] = departure;
    heap.push(Reverse((departure + h(origin), departure, origin)));
    while let Some(Reverse((_, t, u))) = heap.pop() {
        if t > best[u] {
            continue;
        }
        if u == dest {
            break;
        }
        for &li in &graph.idx.out_links[u] {
            let link = &graph.links[li];
            if !link.modes.contains(flag) {
                continue;
            }
            let v = graph.idx.link_to[li];
            let (arr, entry) = match class {
                Some(c) => prep.arrival(c, li, t),
                None => {
                    let secs = match mode {
                        Mode::Bike => bike_secs(graph, link.length_m),
                        _ => walk_secs(graph, link.length_m),
                    };
                    (t + secs.max(1) as u64, t)
                }
            };
            if arr < best[v] {
                best[v] = arr;
                prev[v] = Some((u, li, entry));
                heap.push(Reverse((arr + h(v), arr, v)));
            }
        }
    }
    if best[dest] == u64::MAX {
        return None;
    }

    // Reconstruct legs from the predecessor chain.
    let mut chain = Vec::new();
    let mut cur = dest;
    while cur != origin {
        let (p, li, entry) = prev[cur]?;
        chain.push((li, entry, best[cur]));
        cur = p;
    }
    chain.reverse();
    let mut legs = Vec::new();
    let mut cursor = departure;
    let mut distance = 0.0;
    let mut gc: u64 = 0;
    let w = prep.weights;
    let kind = match mode {
        Mode::Bike => LegKind::Bike,
        Mode::Walk => LegKind::Walk,
        _ => LegKind::Drive,
    };
    for (li, entry, arr) in chain {
        if entry > cursor {
            legs.push(Leg::simple(LegKind::Wait, (entry - cursor) as u32));
            gc += (entry - cursor) * w.for_leg(LegKind::Wait, false);
        }
        let len = graph.links[li].length_m;
        legs.push(Leg::on_link(kind, graph.links[li].id, (arr - entry) as u32, len));
        gc += (arr - entry) * w.for_leg(kind, false);
        distance += len;
        cursor = arr;
    }
    Some(TripPlan {
        person_id: 0,
        activity_id: 0,
        mode,
        departure,
        legs,
        predicted_total: best[dest] - departure,
        generalized_cost: gc,
        distance_m: distance,
        origin_node: origin,
        dest_node: dest,
    })
}

/// One-to-all earliest arrivals for a roadway class (drive skims).
pub fn one_to_all_drive(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    departure: u64,
    class: VehicleClass,
) -> Vec<u64> {
    let n = graph.nodes.len();
    let mut best = vec![u64::MAX; n];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    best[origin] = departure;
    heap.push(Reverse((departure, origin)));
    while let Some(Reverse((t, u))) = heap.pop() {
        if t > best[u] {
            continue;
        }
        for &li in &graph.idx.out_links[u] {
            if !graph.links[li].modes.allows_class(class) {
                continue;
            }
            let v = graph.idx.link_to[li];
            let (arr, _) = prep.arrival(class, li, t);
            if arr < best[v] {
                best[v] = arr;
                heap.push(Reverse((arr, v)));
            }
        }
    }
    best
}

/// Zone-to-zone expected drive times in minutes at `departure`.
pub fn zone_skims(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    departure: u64,
) -> Result<Skims> {
    let zones = graph.zones();
    let mut tt = Vec::with_capacity(zones.len());
    for &z in &zones {
        let origin = graph.centroid_node(z)?;
        let best = one_to_all_drive(graph, prep, origin, departure, VehicleClass::Car);
        let row: Vec<f64> = zones
            .iter()
            .map(|&d| {
                let node = graph.idx.zone_centroid_idx[&d];
                if best[node] == u64::MAX {
                    f64::INFINITY
                } else {
                    (best[node] - departure) as f64 / 60.0
                }
            })
            .collect();
        tt.push(row);
    }
    Ok(Skims::new(zones, tt))
}

/// Per-mode level of service between two zones at a departure time.
/// Unavailable modes are flagged rather than omitted.
pub fn mode_levels_of_service(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin_zone: u32,
    dest_zone: u32,
    departure: u64,
) -> Result<std::collections::BTreeMap<Mode, crate::demand::choice::LevelOfService>> {
    use crate::demand::choice::LevelOfService;
    let o = graph.centroid_node(origin_zone)?;
    let d = graph.centroid_node(dest_zone)?;
    let mut out = std::collections::BTreeMap::new();
    if origin_zone == dest_zone {
        // Intra-zone movement is below the model's resolution: every mode
        // is trivially available at zero impedance (transit still needs a
        // transit layer).
        for mode in Mode::ALL {
            let mut los = LevelOfService::default();
            los.available = !mode.is_transit() || graph.has_transit();
            out.insert(mode, los);
        }
        return Ok(out);
    }
    let straight_km = graph.straight_line_m(o, d) / 1000.0;

    for mode in Mode::ALL {
        let mut los = LevelOfService::default();
        match mode {
            Mode::Drive => {
                if let Some(plan) = shortest_path(graph, prep, o, d, departure, Mode::Drive) {
                    los.in_vehicle_s = plan.predicted_total as f64;
                    los.distance_m = plan.distance_m;
                    los.cost_usd = cfg.auto_cost_per_km * plan.drive_distance_m() / 1000.0;
                    los.available = true;
                }
            }
            Mode::Walk => {
                if straight_km <= cfg.walk_max_km {
                    if let Some(plan) = shortest_path(graph, prep, o, d, departure, Mode::Walk) {
                        los.walk_s = plan.predicted_total as f64;
                        los.distance_m = plan.distance_m;
                        los.available = true;
                    }
                }
            }
            Mode::Bike => {
                if straight_km <= cfg.bike_max_km {
                    if let Some(plan) = shortest_path(graph, prep, o, d, departure, Mode::Bike) {
                        los.in_vehicle_s = plan.predicted_total as f64;
                        los.distance_m = plan.distance_m;
                        los.available = true;
                    }
                }
            }
            Mode::WalkToTransit | Mode::DriveToTransit => {
                let access = if mode == Mode::WalkToTransit {
                    intermodal::AccessMode::Walk
                } else {
                    intermodal::AccessMode::Drive
                };
                if graph.has_transit() {
                    if let Some(plan) =
                        intermodal::intermodal_path(graph, prep, cfg, o, d, departure, access)
                    {
                        let mut ivt = 0f64;
                        let mut wait = 0f64;
                        let mut walk = 0f64;
                        let mut boardings = 0u32;
                        for leg in &plan.legs {
                            match leg.kind {
                                LegKind::Ride | LegKind::Drive | LegKind::Park => {
                                    ivt += leg.dur_s as f64
                                }
                                LegKind::Walk => walk += leg.dur_s as f64,
                                LegKind::Wait => wait += leg.dur_s as f64,
                                LegKind::Board => boardings += 1,
                                _ => {}
                            }
                        }
                        los.in_vehicle_s = ivt;
                        los.wait_s = wait;
                        los.walk_s = walk;
                        los.distance_m = plan.distance_m;
                        los.cost_usd = cfg.fare_per_boarding * boardings as f64
                            + cfg.auto_cost_per_km * plan.drive_distance_m() / 1000.0;
                        los.available = true;
                    }
                }
            }
        }
        out.insert(mode, los);
    }
    Ok(out)
}

/// Raising any profile entry must never lower any cost (used by tests).
pub fn plan_cost(plan: &Option<TripPlan>) -> Option<u64> {
    plan.as_ref().map(|p| p.generalized_cost)
}

/// Records experienced times back into profile shape. Entries without
/// observations fall back to the previous profile value.
pub fn profile_from_records(
    graph: &MultimodalGraph,
    previous: &TravelTimeProfile,
    sums: &[Vec<f64>],
    counts: &[Vec<u32>],
) -> TravelTimeProfile {
    let mut times = previous.times.clone();
    for (l, row) in times.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            if counts[l][b] > 0 {
                *v = sums[l][b] / counts[l][b] as f64;
            }
        }
    }
    let mut p = TravelTimeProfile { times };
    p.floor_free_flow(graph);
    p
}


#[cfg(test)]
mod tests {
    use super::*;
    use testnet::*;

    #[test]
    fn single_link_flat_profile() {
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 1000.0, 0.0, 0)],
            vec![link(10, 1, 2, 1000.0, 10.0)],
            vec![],
            vec![],
        );
        let profile = TravelTimeProfile::free_flow(&g);
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        let plan = shortest_path(&g, &prep, 0, 1, 28800, Mode::Drive).unwrap();
        assert_eq!(plan.predicted_total, 100);
        assert_eq!(plan.legs.len(), 1);
        assert_eq!(plan.legs[0].kind, LegKind::Drive);
        assert_eq!(plan.legs[0].dur_s, 100);
        assert!(plan.consistent());
        assert_eq!(plan.generalized_cost, 1000); // 100 s at in-vehicle weight
        assert_eq!(plan.gc_secs(), 100.0);
    }

    #[test]
    fn congested_bin_prefers_detour() {
        // Direct link A congested (200 s) in the departure bin; detour via
        // two links totals 150 s.
        let g = build(
            vec![
                node(1, 0.0, 0.0, 0),
                node(2, 2000.0, 0.0, 0),
                node(3, 1000.0, 600.0, 0),
            ],
            vec![
                link(10, 1, 2, 2000.0, 20.0), // direct: ff 100 s
                link(11, 1, 3, 1500.0, 20.0), // detour legs: 75 s each
                link(12, 3, 2, 1500.0, 20.0),
            ],
            vec![],
            vec![],
        );
        let mut profile = TravelTimeProfile::free_flow(&g);
        let dep: u64 = 32_000; // bin 35
        profile.times[0][bin_of(dep)] = 200.0;
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        let plan = shortest_path(&g, &prep, 0, 1, dep, Mode::Drive).unwrap();
        let links: Vec<u64> = plan.legs.iter().filter_map(|l| l.link).collect();
        assert_eq!(links, vec![11, 12]);
        assert_eq!(plan.predicted_total, 150);
    }

    #[test]
    fn waiting_for_cheaper_bin_when_it_helps() {
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 3000.0, 0.0, 0)],
            vec![link(10, 1, 2, 3000.0, 15.0)],
            vec![],
            vec![],
        );
        let mut profile = TravelTimeProfile::free_flow(&g);
        // Departure bin badly congested; next bin free-flow (200 s).
        let dep: u64 = 10 * 900 + 800; // 100 s before the bin edge
        profile.times[0][10] = 2000.0;
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        let plan = shortest_path(&g, &prep, 0, 1, dep, Mode::Drive).unwrap();
        // Waiting 100 s then driving 200 beats driving 2000 now.
        assert_eq!(plan.predicted_total, 300);
        assert_eq!(plan.legs[0].kind, LegKind::Wait);
        assert_eq!(plan.legs[0].dur_s, 100);
        assert_eq!(plan.legs[1].dur_s, 200);
        // Arrival function stays non-decreasing across the boundary.
        let later = shortest_path(&g, &prep, 0, 1, dep + 100, Mode::Drive).unwrap();
        assert!(later.arrival() >= plan.arrival());
    }

    #[test]
    fn walk_and_bike_are_static() {
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 700.0, 0.0, 0)],
            vec![link(10, 1, 2, 700.0, 15.0)],
            vec![],
            vec![],
        );
        let profile = TravelTimeProfile::free_flow(&g);
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        let walk = shortest_path(&g, &prep, 0, 1, 0, Mode::Walk).unwrap();
        assert_eq!(walk.predicted_total, 500); // 700 / 1.4
        assert_eq!(walk.gc_secs(), 1000.0); // walk weighted 2×
        let bike = shortest_path(&g, &prep, 0, 1, 0, Mode::Bike).unwrap();
        assert_eq!(bike.predicted_total, (700f64 / 4.2).ceil() as u64);
    }

    #[test]
    fn truck_scales_from_car_profile() {
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 900.0, 0.0, 0)],
            vec![link(10, 1, 2, 900.0, 10.0)],
            vec![],
            vec![],
        );
        let profile = TravelTimeProfile::free_flow(&g);
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        let car = shortest_path(&g, &prep, 0, 1, 0, Mode::Drive).unwrap();
        assert_eq!(car.predicted_total, 90);
        let truck = shortest_path_truck(&g, &prep, 0, 1, 0).unwrap();
        assert_eq!(truck.predicted_total, 100); // 90 / 0.9
    }

    #[test]
    fn unreachable_is_none() {
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 500.0, 0.0, 0)],
            vec![link(10, 2, 1, 500.0, 15.0)], // wrong direction only
            vec![],
            vec![],
        );
        let profile = TravelTimeProfile::free_flow(&g);
        let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
        assert!(shortest_path(&g, &prep, 0, 1, 0, Mode::Drive).is_none());
    }

    #[test]
    fn heuristic_never_changes_result() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            let n = rng.gen_range(8..20u64);
            let mut nodes = Vec::new();
            for i in 0..n {
                nodes.push(node(
                    i,
                    rng.gen_range(0.0..5000.0),
                    rng.gen_range(0.0..5000.0),
                    0,
                ));
            }
            let mut links = Vec::new();
            let mut lid = 0u64;
            for i in 0..n {
                // ring for connectivity plus random chords
                let j = (i + 1) % n;
                let d = ((nodes[i as usize].x - nodes[j as usize].x).powi(2)
                    + (nodes[i as usize].y - nodes[j as usize].y).powi(2))
                .sqrt()
                .max(50.0);
                links.push(link(lid, i, j, d, rng.gen_range(8.0..25.0)));
                lid += 1;
            }
            for _ in 0..n {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a == b {
                    continue;
                }
                let d = ((nodes[a as usize].x - nodes[b as usize].x).powi(2)
                    + (nodes[a as usize].y - nodes[b as usize].y).powi(2))
                .sqrt()
                .max(50.0);
                links.push(link(lid, a, b, d, rng.gen_range(8.0..25.0)));
                lid += 1;
            }
            let g = build(nodes, links, vec![], vec![]);
            let mut profile = TravelTimeProfile::free_flow(&g);
            for row in &mut profile.times {
                for b in 0..BINS {
                    row[b] *= rng.gen_range(1.0..4.0);
                }
            }
            let prep = PreparedProfile::new(&g, &profile, &RouterConfig::default());
            for _ in 0..10 {
                let o = rng.gen_range(0..g.nodes.len());
                let d = rng.gen_range(0..g.nodes.len());
                let dep = rng.gen_range(0..86_000u64);
                let with_h = shortest_path(&g, &prep, o, d, dep, Mode::Drive);
                let without = shortest_path_no_heuristic(&g, &prep, o, d, dep, Mode::Drive);
                assert_eq!(
                    with_h.as_ref().map(|p| (p.predicted_total, p.generalized_cost)),
                    without.as_ref().map(|p| (p.predicted_total, p.generalized_cost))
                );
            }
        }
    }

    #[test]
    fn raising_profile_never_lowers_cost() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let g = build(
            vec![
                node(0, 0.0, 0.0, 0),
                node(1, 1000.0, 0.0, 0),
                node(2, 1000.0, 1000.0, 0),
                node(3, 0.0, 1000.0, 0),
            ],
            vec![
                link(0, 0, 1, 1000.0, 15.0),
                link(1, 1, 2, 1000.0, 15.0),
                link(2, 2, 3, 1000.0, 15.0),
                link(3, 3, 0, 1000.0, 15.0),
                link(4, 0, 2, 1414.0, 15.0),
            ],
            vec![],
            vec![],
        );
        for _ in 0..20 {
            let mut p1 = TravelTimeProfile::free_flow(&g);
            for row in &mut p1.times {
                for b in 0..BINS {
                    row[b] *= rng.gen_range(1.0..3.0);
                }
            }
            let mut p2 = p1.clone();
            for row in &mut p2.times {
                for b in 0..BINS {
                    row[b] += rng.gen_range(0.0..60.0);
                }
            }
            let prep1 = PreparedProfile::new(&g, &p1, &RouterConfig::default());
            let prep2 = PreparedProfile::new(&g, &p2, &RouterConfig::default());
            for _ in 0..20 {
                let o = rng.gen_range(0..4);
                let d = rng.gen_range(0..4);
                let dep = rng.gen_range(0..80_000u64);
                let c1 = plan_cost(&shortest_path(&g, &prep1, o, d, dep, Mode::Drive));
                let c2 = plan_cost(&shortest_path(&g, &prep2, o, d, dep, Mode::Drive));
                match (c1, c2) {
                    (Some(a), Some(b)) => assert!(b >= a, "{b} < {a}"),
                    (None, Some(_)) => panic!("reachability should not improve"),
                    _ => {}
                }
            }
        }
    }
}
