//! Intermodal (access + transit + egress) route search.
//!
//! Label-setting search over states (place, boardings, time) ordered by
//! generalized cost. Places cover the access phase (walking or driving to
//! a first boarding), being at a stop, riding a pattern trip, and the
//! walk-only egress phase. Drive access may park only at park-and-ride
//! stops and only before the first boarding; egress requires at least one
//! boarding. Costs are weighted tenths-of-seconds (see `GcWeights`), so
//! optima are exactly comparable against an independent enumeration.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::config::RouterConfig;
use crate::network::MultimodalGraph;
use crate::types::{Mode, ModeSet, VehicleClass};

use super::{Leg, LegKind, PreparedProfile, TripPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    Walk,
    Drive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Place {
    /// Roadway node before any boarding (walking or driving per access mode).
    Access(u32),
    /// At a stop: board, transfer on foot, or leave for egress.
    Stop(u32),
    /// On board, doors closed, departing stop `pos` at dep[pos].
    Ready { pat: u32, trip: u32, pos: u16 },
    /// On board at stop `pos`, arrived at arr[pos]; may alight or sit
    /// through the dwell.
    Arrived { pat: u32, trip: u32, pos: u16 },
    /// Roadway node after the last alight (walk only).
    Egress(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct SKey {
    place: Place,
    boardings: u8,
}

type Timed = (SKey, u64);

struct Search<'a> {
    graph: &'a MultimodalGraph,
    prep: &'a PreparedProfile,
    cfg: &'a RouterConfig,
    access: AccessMode,
    dest: usize,
    use_h: bool,
    /// Latest boardable departure anywhere; pre-boarding states past it
    /// can never lead to a trip.
    last_dep: u64,
    /// Hard bound on any state time: last transit event plus a gross
    /// acyclic walking bound. Optimal paths never exceed it.
    horizon: u64,
    best: HashMap<Timed, u64>,
    /// Egress cost is time-independent (walking only), so one gc per node
    /// suffices there.
    egress_best: HashMap<u32, u64>,
    /// Same once the service day is over: stops only lead to walks.
    stop_late_best: HashMap<(u32, u8), u64>,
    parent: HashMap<Timed, (Timed, Vec<Leg>)>,
    heap: BinaryHeap<Reverse<(u64, u64, u64, SKey)>>,
}

impl<'a> Search<'a> {
    fn place_xy(&self, place: Place) -> (f64, f64) {
        match place {
            Place::Access(n) | Place::Egress(n) => {
                let node = &self.graph.nodes[n as usize];
                (node.x, node.y)
            }
            Place::Stop(s) => {
                let stop = &self.graph.stops[s as usize];
                (stop.x, stop.y)
            }
            Place::Ready { pat, pos, .. } | Place::Arrived { pat, pos, .. } => {
                let si = self.graph.idx.pattern_stops[pat as usize][pos as usize];
                let stop = &self.graph.stops[si];
                (stop.x, stop.y)
            }
        }
    }

    fn h(&self, place: Place) -> u64 {
        if !self.use_h {
            return 0;
        }
        let (x, y) = self.place_xy(place);
        let d = &self.graph.nodes[self.dest];
        let dist = (x - d.x).hypot(y - d.y);
        (dist / self.graph.idx.vmax_mps).floor() as u64 * self.prep.weights.min_weight()
    }

    fn push(&mut self, from: Timed, to: SKey, t: u64, gc: u64, legs: Vec<Leg>) {
        if t > self.horizon {
            return;
        }
        match to.place {
            Place::Access(_) if t > self.last_dep => return,
            Place::Stop(_) if to.boardings == 0 && t > self.last_dep => return,
            Place::Stop(sid) if t > self.last_dep => {
                match self.stop_late_best.get(&(sid, to.boardings)) {
                    Some(&g) if g <= gc => return,
                    _ => {
                        self.stop_late_best.insert((sid, to.boardings), gc);
                    }
                }
            }
            Place::Egress(n) => match self.egress_best.get(&n) {
                Some(&g) if g <= gc => return,
                _ => {
                    self.egress_best.insert(n, gc);
                }
            },
            _ => {}
        }
        let key = (to, t);
        match self.best.get(&key) {
            Some(&g) if g <= gc => return,
            _ => {}
        }
        self.best.insert(key, gc);
        self.parent.insert(key, (from, legs));
        self.heap.push(Reverse((gc + self.h(to.place), gc, t, to)));
    }

    fn walk_secs(&self, dist_m: f64) -> u64 {
        super::ceil_secs(dist_m / self.graph.walk_speed_mps)
    }

    fn expand(&mut self, key: SKey, t: u64, gc: u64) {
        let w = self.prep.weights;
        let g = self.graph;
        let from = (key, t);
        match key.place {
            Place::Access(n) => {
                let n = n as usize;
                match self.access {
                    AccessMode::Walk => {
                        for &li in &g.idx.out_links[n] {
                            let link = &g.links[li];
                            if !link.modes.contains(ModeSet::WALK) {
                                continue;
                            }
                            let dur = self.walk_secs(link.length_m).max(1);
                            let leg =
                                Leg::on_link(LegKind::Walk, link.id, dur as u32, link.length_m);
                            let to = SKey {
                                place: Place::Access(g.idx.link_to[li] as u32),
                                boardings: key.boardings,
                            };
                            self.push(from, to, t + dur, gc + dur * w.walk, vec![leg]);
                        }
                    }
                    AccessMode::Drive => {
                        for &li in &g.idx.out_links[n] {
                            let link = &g.links[li];
                            if !link.modes.contains(ModeSet::AUTO) {
                                continue;
                            }
                            let (arr, entry) = self.prep.arrival(VehicleClass::Car, li, t);
                            let mut legs = Vec::new();
                            let mut cost = 0;
                            if entry > t {
                                legs.push(Leg::simple(LegKind::Wait, (entry - t) as u32));
                                cost += (entry - t) * w.ivt;
                            }
                            legs.push(Leg::on_link(
                                LegKind::Drive,
                                link.id,
                                (arr - entry) as u32,
                                link.length_m,
                            ));
                            cost += (arr - entry) * w.ivt;
                            let to = SKey {
                                place: Place::Access(g.idx.link_to[li] as u32),
                                boardings: key.boardings,
                            };
                            self.push(from, to, arr, gc + cost, legs);
                        }
                    }
                }
                // Enter anchored stops: on foot directly, by car via parking
                // at a park-and-ride stop.
                for &si in &g.idx.node_stops[n] {
                    let stop = &g.stops[si];
                    let to = SKey {
                        place: Place::Stop(si as u32),
                        boardings: key.boardings,
                    };
                    match self.access {
                        AccessMode::Walk => {
                            let dur = self.walk_secs(stop.access_dist_m);
                            let mut leg =
                                Leg::simple(LegKind::Walk, dur as u32);
                            leg.stop = Some(stop.id.clone());
                            leg.dist_m = stop.access_dist_m;
                            self.push(from, to, t + dur, gc + dur * w.walk, vec![leg]);
                        }
                        AccessMode::Drive => {
                            if !g.idx.stop_drive_access[si] {
                                continue;
                            }
                            let park = self.cfg.park_time_s as u64;
                            let walk = self.walk_secs(stop.access_dist_m);
                            let mut park_leg = Leg::simple(LegKind::Park, park as u32);
                            park_leg.stop = Some(stop.id.clone());
                            let mut walk_leg = Leg::simple(LegKind::Walk, walk as u32);
                            walk_leg.stop = Some(stop.id.clone());
                            walk_leg.dist_m = stop.access_dist_m;
                            self.push(
                                from,
                                to,
                                t + park + walk,
                                gc + park * w.ivt + walk * w.walk,
                                vec![park_leg, walk_leg],
                            );
                        }
                    }
                }
            }
            Place::Stop(s) => {
                let s = s as usize;
                let stop = &g.stops[s];
                // Board any later departure of a pattern serving this stop.
                if (key.boardings as u32) < self.cfg.max_boardings {
                    for &(pi, pos) in &g.idx.stop_patterns[s] {
                        let pattern = &g.patterns[pi];
                        if pos + 1 >= pattern.stops.len() {
                            continue; // boarding at the terminal goes nowhere
                        }
                        for (ti, trip) in pattern.trips.iter().enumerate() {
                            let dep = trip.dep[pos] as u64;
                            if dep < t {
                                continue;
                            }
                            let mut wait_leg = Leg::simple(LegKind::Wait, (dep - t) as u32);
                            wait_leg.pattern = Some(pi);
                            wait_leg.stop = Some(stop.id.clone());
                            let mut board = Leg::simple(LegKind::Board, 0);
                            board.pattern = Some(pi);
                            board.trip = Some(trip.id.clone());
                            board.stop = Some(stop.id.clone());
                            let to = SKey {
                                place: Place::Ready {
                                    pat: pi as u32,
                                    trip: ti as u32,
                                    pos: pos as u16,
                                },
                                boardings: key.boardings + 1,
                            };
                            self.push(
                                from,
                                to,
                                dep,
                                gc + (dep - t) * w.wait,
                                vec![wait_leg, board],
                            );
                        }
                    }
                }
                // Walk transfers to nearby stops.
                for &(s2, dist) in &g.idx.stop_transfers[s] {
                    let dur = self.walk_secs(dist);
                    let mut leg = Leg::simple(LegKind::Walk, dur as u32);
                    leg.stop = Some(g.stops[s2].id.clone());
                    leg.dist_m = dist;
                    let to = SKey {
                        place: Place::Stop(s2 as u32),
                        boardings: key.boardings,
                    };
                    self.push(from, to, t + dur, gc + dur * w.walk, vec![leg]);
                }
                // Egress to the anchor node once we have ridden something.
                if key.boardings > 0 {
                    if let Some(ni) = g.idx.stop_node[s] {
                        let dur = self.walk_secs(stop.access_dist_m);
                        let mut leg = Leg::simple(LegKind::Walk, dur as u32);
                        leg.dist_m = stop.access_dist_m;
                        let to = SKey {
                            place: Place::Egress(ni as u32),
                            boardings: key.boardings,
                        };
                        self.push(from, to, t + dur, gc + dur * w.walk, vec![leg]);
                    }
                }
            }
            Place::Ready { pat, trip, pos } => {
                let pattern = &g.patterns[pat as usize];
                let sched = &pattern.trips[trip as usize];
                let next = pos as usize + 1;
                let arr = sched.arr[next] as u64;
                let dur = arr - t;
                let mut leg = Leg::simple(LegKind::Ride, dur as u32);
                leg.pattern = Some(pat as usize);
                leg.trip = Some(sched.id.clone());
                leg.stop = Some(pattern.stops[next].clone());
                leg.dist_m = self.segment_dist(pat as usize, pos as usize);
                let to = SKey {
                    place: Place::Arrived {
                        pat,
                        trip,
                        pos: next as u16,
                    },
                    boardings: key.boardings,
                };
                self.push(from, to, arr, gc + dur * w.ivt, vec![leg]);
            }
            Place::Arrived { pat, trip, pos } => {
                let pattern = &g.patterns[pat as usize];
                let sched = &pattern.trips[trip as usize];
                let si = g.idx.pattern_stops[pat as usize][pos as usize];
                // Alight here.
                let mut alight = Leg::simple(LegKind::Alight, 0);
                alight.pattern = Some(pat as usize);
                alight.trip = Some(sched.id.clone());
                alight.stop = Some(g.stops[si].id.clone());
                let to = SKey {
                    place: Place::Stop(si as u32),
                    boardings: key.boardings,
                };
                self.push(from, to, t, gc, vec![alight]);
                // Or sit through the dwell and keep riding.
                if (pos as usize) + 1 < pattern.stops.len() {
                    let dep = sched.dep[pos as usize] as u64;
                    let dwell = dep - t;
                    let mut leg = Leg::simple(LegKind::Wait, dwell as u32);
                    leg.pattern = Some(pat as usize);
                    leg.trip = Some(sched.id.clone());
                    let to = SKey {
                        place: Place::Ready { pat, trip, pos },
                        boardings: key.boardings,
                    };
                    self.push(from, to, dep, gc + dwell * w.ivt, vec![leg]);
                }
            }
            Place::Egress(n) => {
                let n = n as usize;
                for &li in &g.idx.out_links[n] {
                    let link = &g.links[li];
                    if !link.modes.contains(ModeSet::WALK) {
                        continue;
                    }
                    let dur = self.walk_secs(link.length_m).max(1);
                    let leg = Leg::on_link(LegKind::Walk, link.id, dur as u32, link.length_m);
                    let to = SKey {
                        place: Place::Egress(g.idx.link_to[li] as u32),
                        boardings: key.boardings,
                    };
                    self.push(from, to, t + dur, gc + dur * w.walk, vec![leg]);
                }
            }
        }
    }

    /// Ride distance for one pattern segment: mapped roadway length for
    /// buses, straight line otherwise.
    fn segment_dist(&self, pat: usize, pos: usize) -> f64 {
        if let Some(Some(paths)) = self.graph.idx.bus_paths.get(pat) {
            if let Some(path) = paths.get(pos) {
                return path.iter().map(|&li| self.graph.links[li].length_m).sum();
            }
        }
        let stops = &self.graph.idx.pattern_stops[pat];
        let a = &self.graph.stops[stops[pos]];
        let b = &self.graph.stops[stops[pos + 1]];
        (a.x - b.x).hypot(a.y - b.y)
    }
}

pub fn intermodal_path(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    access: AccessMode,
) -> Option<TripPlan> {
    search(graph, prep, cfg, origin, dest, departure, access, true)
}

/// Heuristic disabled; must agree with `intermodal_path` exactly.
pub fn intermodal_path_no_heuristic(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    access: AccessMode,
) -> Option<TripPlan> {
    search(graph, prep, cfg, origin, dest, departure, access, false)
}

#[allow(clippy::too_many_arguments)]
fn search(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    access: AccessMode,
    use_h: bool,
) -> Option<TripPlan> {
    if !graph.has_transit() || origin >= graph.nodes.len() || dest >= graph.nodes.len() {
        return None;
    }
    let mut last_event: u64 = 0;
    let mut last_dep: u64 = 0;
    for p in &graph.patterns {
        for tr in &p.trips {
            for pos in 0..p.stops.len() {
                last_event = last_event.max(tr.arr[pos] as u64).max(tr.dep[pos] as u64);
                if pos + 1 < p.stops.len() {
                    last_dep = last_dep.max(tr.dep[pos] as u64);
                }
            }
        }
    }
    if departure > last_dep {
        return None; // end of service
    }
    let walk_bound: f64 = graph
        .links
        .iter()
        .filter(|l| l.modes.contains(ModeSet::WALK))
        .map(|l| l.length_m / graph.walk_speed_mps)
        .sum::<f64>()
        + graph
            .stops
            .iter()
            .map(|st| 2.0 * st.access_dist_m / graph.walk_speed_mps)
            .sum::<f64>()
        + graph
            .transfers
            .iter()
            .map(|tr| tr.dist_m / graph.walk_speed_mps)
            .sum::<f64>()
        + cfg.park_time_s as f64;
    let horizon = last_event.max(departure) + walk_bound.ceil() as u64 + 60;
    let mut s = Search {
        graph,
        prep,
        cfg,
        access,
        dest,
        use_h,
        last_dep,
        horizon,
        best: HashMap::new(),
        egress_best: HashMap::new(),
        stop_late_best: HashMap::new(),
        parent: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    let start = SKey {
        place: Place::Access(origin as u32),
        boardings: 0,
    };
    s.best.insert((start, departure), 0);
    s.heap.push(Reverse((s.h(start.place), 0, departure, start)));
    let goal = loop {
        let Some(Reverse((_, gc, t, key))) = s.heap.pop() else {
            return None;
        };
        if s.best.get(&(key, t)).copied() != Some(gc) {
            continue; // stale entry
        }
        if key.place == Place::Egress(dest as u32) {
            break (key, t, gc);
        }
        s.expand(key, t, gc);
    };

    // Walk the parent chain back to the start.
    let (key, t_end, gc) = goal;
    let mut legs: Vec<Leg> = Vec::new();
    let mut cur = (key, t_end);
    while cur != (start, departure) {
        let (prev, arc_legs) = s.parent.remove(&cur)?;
        for leg in arc_legs.into_iter().rev() {
            legs.push(leg);
        }
        cur = prev;
    }
    legs.reverse();
    legs.retain(|l| l.dur_s > 0 || matches!(l.kind, LegKind::Board | LegKind::Alight | LegKind::Park));
    let distance_m = legs.iter().map(|l| l.dist_m).sum();
    Some(TripPlan {
        person_id: 0,
        activity_id: 0,
        mode: if access == AccessMode::Walk {
            Mode::WalkToTransit
        } else {
            Mode::DriveToTransit
        },
        departure,
        legs,
        predicted_total: t_end - departure,
        generalized_cost: gc,
        distance_m,
        origin_node: origin,
        dest_node: dest,
    })
}

/// Structural validity: legs contiguous in time, boards/alights only at
/// stops of the referenced pattern, boardings within the cap, drive and
/// park legs only before the first board. Used by tests.
pub fn validate_plan(graph: &MultimodalGraph, cfg: &RouterConfig, plan: &TripPlan) -> Result<(), String> {
    if !plan.consistent() {
        return Err("leg durations do not sum to predicted_total".into());
    }
    let mut boards = 0u32;
    for leg in &plan.legs {
        match leg.kind {
            LegKind::Board => {
                boards += 1;
                let pat = leg.pattern.ok_or("board leg without pattern")?;
                let stop = leg.stop.as_ref().ok_or("board leg without stop")?;
                if !graph.patterns[pat].stops.contains(stop) {
                    return Err(format!("board at {stop} not on pattern {pat}"));
                }
            }
            LegKind::Alight => {
                let pat = leg.pattern.ok_or("alight leg without pattern")?;
                let stop = leg.stop.as_ref().ok_or("alight leg without stop")?;
                if !graph.patterns[pat].stops.contains(stop) {
                    return Err(format!("alight at {stop} not on pattern {pat}"));
                }
            }
            LegKind::Drive | LegKind::Park => {
                if boards > 0 {
                    return Err("drive/park after boarding".into());
                }
            }
            _ => {}
        }
    }
    if boards > cfg.max_boardings {
        return Err(format!("{boards} boardings exceed cap"));
    }
    if plan.mode.is_transit() && boards == 0 {
        return Err("transit plan without a boarding".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::testnet::*;
    use crate::router::TravelTimeProfile;
    use crate::types::TransitMode;

    /// Two stops 84 m off their anchor nodes (60 s walk at 1.4 m/s), one
    /// bus trip A→B departing 1000, arriving 1600.
    fn feed_graph() -> crate::network::MultimodalGraph {
        build(
            vec![node(1, 0.0, 0.0, 0), node(2, 5000.0, 0.0, 1)],
            vec![
                link(10, 1, 2, 5000.0, 15.0),
                link(11, 2, 1, 5000.0, 15.0),
            ],
            vec![stop("A", 0.0, 84.0, false), stop("B", 5000.0, 84.0, false)],
            vec![pattern(
                "R1",
                TransitMode::Bus,
                &["A", "B"],
                vec![("t1", vec![1000, 1600], vec![1000, 1600])],
            )],
        )
    }

    #[test]
    fn schedule_arithmetic_example() {
        let g = feed_graph();
        let cfg = crate::config::RouterConfig::default();
        let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
        let plan =
            intermodal_path(&g, &prep, &cfg, 0, 1, 900, AccessMode::Walk).expect("path");
        assert_eq!(plan.predicted_total, 760); // 60 walk + 40 wait + 600 ride + 60 walk
        assert!(plan.consistent());
        validate_plan(&g, &cfg, &plan).unwrap();
        let kinds: Vec<LegKind> = plan.legs.iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            vec![
                LegKind::Walk,
                LegKind::Wait,
                LegKind::Board,
                LegKind::Ride,
                LegKind::Alight,
                LegKind::Walk
            ]
        );
        assert_eq!(plan.legs[1].dur_s, 40);
        assert_eq!(plan.legs[3].dur_s, 600);
        // 60·2 + 40·2 + 600·1 + 60·2 weighted seconds, in tenths.
        assert_eq!(plan.generalized_cost, 9200);
    }

    #[test]
    fn missing_the_only_trip_is_no_path() {
        let g = feed_graph();
        let cfg = crate::config::RouterConfig::default();
        let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
        // Departing at 1001 the stop is reached at 1061, after the 1000
        // departure; there is no later trip.
        assert!(intermodal_path(&g, &prep, &cfg, 0, 1, 1001, AccessMode::Walk).is_none());
        // 940 still makes it: walk lands exactly on the departure.
        let plan = intermodal_path(&g, &prep, &cfg, 0, 1, 940, AccessMode::Walk).unwrap();
        assert_eq!(plan.predicted_total, 720);
    }

    #[test]
    fn drive_access_requires_park_and_ride() {
        // Stop A sits 3 km of driving from the origin; walk access would
        // miss the trip. Only a park-and-ride flag lets the car be used.
        let make = |pnr: bool| {
            build(
                vec![
                    node(1, 0.0, 0.0, 0),
                    node(2, 3000.0, 0.0, 0),
                    node(3, 8000.0, 0.0, 1),
                ],
                vec![
                    link(10, 1, 2, 3000.0, 30.0),
                    link(11, 2, 3, 5000.0, 30.0),
                ],
                vec![stop("A", 3000.0, 0.0, pnr), stop("B", 8000.0, 0.0, false)],
                vec![pattern(
                    "R1",
                    TransitMode::Bus,
                    &["A", "B"],
                    vec![("t1", vec![400, 900], vec![400, 900])],
                )],
            )
        };
        let cfg = crate::config::RouterConfig::default();
        for pnr in [true, false] {
            let g = make(pnr);
            let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
            let plan = intermodal_path(&g, &prep, &cfg, 0, 2, 0, AccessMode::Drive);
            if pnr {
                let plan = plan.expect("drive access should reach the trip");
                // 100 s drive + 60 s park + 240 s wait + 500 s ride.
                assert_eq!(plan.predicted_total, 900);
                assert!(plan.legs.iter().any(|l| l.kind == LegKind::Park));
                validate_plan(&g, &cfg, &plan).unwrap();
            } else {
                // Without parking the car is useless and walking 3 km takes
                // 2143 s, far past the 400 s departure.
                assert!(plan.is_none());
            }
        }
    }

    #[test]
    fn egress_is_walk_only_and_needs_a_boarding() {
        // Roads allow cars but not pedestrians; after riding A→B the only
        // way back to the origin node would be driving, which egress
        // forbids, so origin→origin has no intermodal plan even though a
        // car could loop in seconds.
        let g = build(
            vec![node(1, 0.0, 0.0, 0), node(2, 5000.0, 0.0, 1)],
            vec![
                road_link(10, 1, 2, 5000.0, 15.0),
                road_link(11, 2, 1, 5000.0, 15.0),
            ],
            vec![stop("A", 0.0, 84.0, false), stop("B", 5000.0, 84.0, false)],
            vec![pattern(
                "R1",
                TransitMode::Bus,
                &["A", "B"],
                vec![("t1", vec![1000, 1600], vec![1000, 1600])],
            )],
        );
        let cfg = crate::config::RouterConfig::default();
        let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
        assert!(intermodal_path(&g, &prep, &cfg, 0, 0, 900, AccessMode::Walk).is_none());
        // The forward trip itself still works.
        assert!(intermodal_path(&g, &prep, &cfg, 0, 1, 900, AccessMode::Walk).is_some());
    }

    #[test]
    fn transfer_between_lines() {
        // Line 1: A→B; line 2: C→D with C within transfer range of B.
        let g = build(
            vec![
                node(1, 0.0, 0.0, 0),
                node(2, 4000.0, 0.0, 0),
                node(3, 9000.0, 0.0, 1),
            ],
            vec![
                link(10, 1, 2, 4000.0, 20.0),
                link(11, 2, 3, 5000.0, 20.0),
            ],
            vec![
                stop("A", 0.0, 0.0, false),
                stop("B", 4000.0, 0.0, false),
                stop("C", 4000.0, 140.0, false),
                stop("D", 9000.0, 0.0, false),
            ],
            vec![
                pattern(
                    "R1",
                    TransitMode::Bus,
                    &["A", "B"],
                    vec![("t1", vec![100, 500], vec![100, 500])],
                ),
                pattern(
                    "R2",
                    TransitMode::Bus,
                    &["C", "D"],
                    vec![("t2", vec![700, 1200], vec![700, 1200])],
                ),
            ],
        );
        let cfg = crate::config::RouterConfig::default();
        let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
        let plan = intermodal_path(&g, &prep, &cfg, 0, 2, 100, AccessMode::Walk).unwrap();
        validate_plan(&g, &cfg, &plan).unwrap();
        let boards = plan.legs.iter().filter(|l| l.kind == LegKind::Board).count();
        assert_eq!(boards, 2);
        // Arrive B at 500, walk 100 s transfer (140 m), board C at 700.
        assert_eq!(plan.arrival(), 1200);
    }

    #[test]
    fn boarding_cap_respected() {
        let g = feed_graph();
        let mut cfg = crate::config::RouterConfig::default();
        cfg.max_boardings = 0;
        let prep = PreparedProfile::new(&g, &TravelTimeProfile::free_flow(&g), &cfg);
        assert!(intermodal_path(&g, &prep, &cfg, 0, 1, 900, AccessMode::Walk).is_none());
    }
}
