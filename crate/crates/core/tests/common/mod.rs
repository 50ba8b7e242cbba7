//! Shared helpers for integration tests: random multimodal instances and
//! time-expanded reference searches implemented independently of the
//! production router (label-correcting over explicit time states instead
//! of label-setting with envelopes and heuristics).

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::Rng;

use metrosim::config::{NetworkConfig, RouterConfig};
use metrosim::network::gtfs::{FeedStop, TransitFeed, TransitPattern, TripSchedule};
use metrosim::network::{build_graph, Link, MultimodalGraph, Node};
use metrosim::router::{bin_of, ceil_secs, PreparedProfile, TravelTimeProfile, BINS, BIN_S};
use metrosim::types::{ModeSet, TransitMode, VehicleClass};

pub fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Random strongly-connected roadway with optional transit lines.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n_nodes: usize,
    n_lines: usize,
) -> (MultimodalGraph, TravelTimeProfile) {
    let span = 4000.0;
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        nodes.push(Node {
            id: i as u64,
            x: rng.gen_range(0.0..span),
            y: rng.gen_range(0.0..span),
            zone: if i < n_nodes / 2 { 0 } else { 1 },
        });
    }
    let mut links = Vec::new();
    let add_link = |links: &mut Vec<Link>, from: usize, to: usize, rng: &mut R| {
        let id = links.len() as u64;
        let d = dist(
            (nodes[from].x, nodes[from].y),
            (nodes[to].x, nodes[to].y),
        )
        .max(60.0);
        let mut modes = ModeSet::all_roadway();
        if rng.gen_bool(0.7) {
            modes = modes.with(ModeSet::WALK).with(ModeSet::BIKE);
        }
        links.push(Link {
            id,
            from: from as u64,
            to: to as u64,
            length_m: d,
            lanes: rng.gen_range(1..3),
            ffs_mps: rng.gen_range(8.0..25.0),
            jam_spacing_m: 7.5,
            wave_mps: 5.0,
            modes,
            congestable: true,
        });
    };
    for i in 0..n_nodes {
        add_link(&mut links, i, (i + 1) % n_nodes, rng);
    }
    for _ in 0..(n_nodes * 2) {
        let a = rng.gen_range(0..n_nodes);
        let b = rng.gen_range(0..n_nodes);
        if a != b {
            add_link(&mut links, a, b, rng);
        }
    }

    // Transit lines: stops jittered near distinct nodes, schedule run
    // times loosely tied to distance so vmax stays sane.
    let mut stops = Vec::new();
    let mut patterns = Vec::new();
    for line in 0..n_lines {
        let n_stops = rng.gen_range(3..=5.min(n_nodes));
        let mut picked = Vec::new();
        while picked.len() < n_stops {
            let n = rng.gen_range(0..n_nodes);
            if !picked.contains(&n) {
                picked.push(n);
            }
        }
        let stop_ids: Vec<String> = picked
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let id = format!("L{line}S{k}");
                stops.push(FeedStop {
                    id: id.clone(),
                    name: id.clone(),
                    x: nodes[n].x + rng.gen_range(-250.0..250.0),
                    y: nodes[n].y + rng.gen_range(-250.0..250.0),
                    park_and_ride: rng.gen_bool(0.3),
                });
                id
            })
            .collect();
        let n_trips = rng.gen_range(2..=4);
        let mut trips = Vec::new();
        for k in 0..n_trips {
            let mut t = rng.gen_range(600..12_000u32) + k * rng.gen_range(600..3000);
            let mut arr = Vec::with_capacity(n_stops);
            let mut dep = Vec::with_capacity(n_stops);
            for pos in 0..n_stops {
                if pos > 0 {
                    let a = stops[stops.len() - n_stops + pos - 1].clone();
                    let b = stops[stops.len() - n_stops + pos].clone();
                    let run = (dist((a.x, a.y), (b.x, b.y)) / rng.gen_range(8.0..15.0))
                        .ceil()
                        .max(30.0) as u32;
                    t += run;
                }
                arr.push(t);
                let dwell = if pos + 1 < n_stops {
                    rng.gen_range(0..40)
                } else {
                    0
                };
                dep.push(t + dwell);
                t += dwell;
            }
            trips.push(TripSchedule {
                id: format!("L{line}T{k}"),
                arr,
                dep,
            });
        }
        patterns.push(TransitPattern {
            route_id: format!("L{line}"),
            agency: "AG".into(),
            mode: TransitMode::Bus,
            stops: stop_ids,
            trips,
            seats: 40,
            crush: 60,
        });
    }

    let feed = (n_lines > 0).then_some(TransitFeed {
        stops,
        patterns,
        warnings: 0,
    });
    let graph = build_graph(nodes, links, feed, &NetworkConfig::default(), "test").unwrap();

    let mut profile = TravelTimeProfile::free_flow(&graph);
    for row in &mut profile.times {
        let shape = rng.gen_range(0..3);
        for b in 0..BINS {
            let factor = match shape {
                0 => rng.gen_range(1.0..2.0),
                1 => {
                    // a few heavily congested bins
                    if rng.gen_bool(0.15) {
                        rng.gen_range(4.0..10.0)
                    } else {
                        1.0
                    }
                }
                _ => 1.0 + 3.0 * ((b as f64 / 12.0).sin().abs()),
            };
            row[b] *= factor;
        }
    }
    (graph, profile)
}

/// Earliest FIFO arrival across one roadway link entered at `t`: a driver
/// may idle into a faster future bin but never dawdles to arrive later.
fn fifo_link_arrival(prep: &PreparedProfile, li: usize, t: u64) -> u64 {
    let mut arr = u64::MAX;
    for k in bin_of(t)..BINS {
        let entry = t.max(k as u64 * BIN_S as u64);
        arr = arr.min(entry + prep.cost_at(VehicleClass::Car, li, entry) as u64);
    }
    arr
}

/// Reference earliest-arrival drive times from `origin` to every node:
/// Bellman-style label-correcting where each relaxation enumerates every
/// future entry bin explicitly.
fn drive_arrivals_all(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    departure: u64,
) -> Vec<u64> {
    let n = graph.nodes.len();
    let mut best = vec![u64::MAX; n];
    best[origin] = departure;
    let mut queue = VecDeque::from([origin]);
    let mut queued = vec![false; n];
    queued[origin] = true;
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        let t = best[u];
        for &li in &graph.idx.out_links[u] {
            if !graph.links[li].modes.contains(ModeSet::AUTO) {
                continue;
            }
            let v = graph.idx.link_to[li];
            let arr = fifo_link_arrival(prep, li, t);
            if arr < best[v] {
                best[v] = arr;
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    best
}

/// Reference earliest-arrival search for driving; returns the arrival
/// time at `dest`.
pub fn oracle_drive_arrival(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    origin: usize,
    dest: usize,
    departure: u64,
) -> Option<u64> {
    let best = drive_arrivals_all(graph, prep, origin, departure);
    (best[dest] != u64::MAX).then_some(best[dest])
}

/// Static walk-time Dijkstra over walkable links from `source`;
/// `reverse` flips every arc (times *to* `source` instead).
fn walk_times_from(graph: &MultimodalGraph, source: usize, reverse: bool) -> Vec<u64> {
    let walk_secs = |d: f64| ceil_secs(d / graph.walk_speed_mps);
    let n = graph.nodes.len();
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (li, l) in graph.links.iter().enumerate() {
        if !l.modes.contains(ModeSet::WALK) {
            continue;
        }
        let dur = walk_secs(l.length_m).max(1);
        let (a, b) = if reverse {
            (graph.idx.link_to[li], graph.idx.link_from[li])
        } else {
            (graph.idx.link_from[li], graph.idx.link_to[li])
        };
        adj[a].push((b, dur));
    }
    let mut best = vec![u64::MAX; n];
    best[source] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((t, u))) = heap.pop() {
        if t > best[u] {
            continue;
        }
        for &(v, dur) in &adj[u] {
            if t + dur < best[v] {
                best[v] = t + dur;
                heap.push(Reverse((t + dur, v)));
            }
        }
    }
    best
}

/// Walking seconds from every node to the nearest stop platform
/// (network walk plus the stop's access spur).
fn nearest_platform_walk(graph: &MultimodalGraph) -> Vec<u64> {
    let walk_secs = |d: f64| ceil_secs(d / graph.walk_speed_mps);
    let n = graph.nodes.len();
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (li, l) in graph.links.iter().enumerate() {
        if !l.modes.contains(ModeSet::WALK) {
            continue;
        }
        let dur = walk_secs(l.length_m).max(1);
        adj[graph.idx.link_to[li]].push((graph.idx.link_from[li], dur));
    }
    let mut best = vec![u64::MAX; n];
    let mut heap = BinaryHeap::new();
    for si in 0..graph.stops.len() {
        if let Some(ni) = graph.idx.stop_node[si] {
            let d = walk_secs(graph.stops[si].access_dist_m);
            if d < best[ni] {
                best[ni] = d;
                heap.push(Reverse((d, ni)));
            }
        }
    }
    while let Some(Reverse((t, u))) = heap.pop() {
        if t > best[u] {
            continue;
        }
        for &(v, dur) in &adj[u] {
            if t + dur < best[v] {
                best[v] = t + dur;
                heap.push(Reverse((t + dur, v)));
            }
        }
    }
    best
}

/// Exact generalized cost of a small family of concrete feasible plans:
/// access (walk, or fastest drive plus park) to a boarding stop, one ride,
/// optionally a transfer walk and a second ride, then an egress walk to
/// the destination. Every candidate is achievable, so the minimum bounds
/// the optimum from above and lets the reference search discard costlier
/// states early.
pub fn intermodal_gc_upper_bound(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    drive_access: bool,
) -> u64 {
    if cfg.max_boardings == 0 {
        return u64::MAX;
    }
    let w = prep.weights;
    let walk_secs = |d: f64| ceil_secs(d / graph.walk_speed_mps);
    let ns = graph.stops.len();

    // (platform-ready time, gc so far) per stop when approached from origin.
    let mut ready: Vec<(u64, u64)> = vec![(u64::MAX, u64::MAX); ns];
    if drive_access {
        let arr = drive_arrivals_all(graph, prep, origin, departure);
        for si in 0..ns {
            if !graph.idx.stop_drive_access[si] {
                continue;
            }
            let Some(ni) = graph.idx.stop_node[si] else {
                continue;
            };
            if arr[ni] == u64::MAX {
                continue;
            }
            let park = cfg.park_time_s as u64;
            let wk = walk_secs(graph.stops[si].access_dist_m);
            ready[si] = (
                arr[ni] + park + wk,
                (arr[ni] - departure + park) * w.ivt + wk * w.walk,
            );
        }
    } else {
        let wt = walk_times_from(graph, origin, false);
        for si in 0..ns {
            let Some(ni) = graph.idx.stop_node[si] else {
                continue;
            };
            if wt[ni] == u64::MAX {
                continue;
            }
            let wk = walk_secs(graph.stops[si].access_dist_m);
            ready[si] = (departure + wt[ni] + wk, (wt[ni] + wk) * w.walk);
        }
    }

    // Egress walk gc from each stop's platform to dest.
    let back = walk_times_from(graph, dest, true);
    let egress: Vec<u64> = (0..ns)
        .map(|si| {
            let Some(ni) = graph.idx.stop_node[si] else {
                return u64::MAX;
            };
            if back[ni] == u64::MAX {
                return u64::MAX;
            }
            (walk_secs(graph.stops[si].access_dist_m) + back[ni]) * w.walk
        })
        .collect();

    // Single rides from every reachable boarding position:
    // (alight stop, alight time, gc including access and platform wait).
    let mut first_legs: Vec<(usize, u64, u64)> = Vec::new();
    for (pi, pattern) in graph.patterns.iter().enumerate() {
        for pos in 0..pattern.stops.len().saturating_sub(1) {
            let sb = graph.idx.pattern_stops[pi][pos];
            let (rt, rg) = ready[sb];
            if rt == u64::MAX {
                continue;
            }
            for trip in &pattern.trips {
                let dep = trip.dep[pos] as u64;
                if dep < rt {
                    continue;
                }
                for j in (pos + 1)..pattern.stops.len() {
                    let arr = trip.arr[j] as u64;
                    let sj = graph.idx.pattern_stops[pi][j];
                    first_legs.push((sj, arr, rg + (dep - rt) * w.wait + (arr - dep) * w.ivt));
                }
            }
        }
    }

    let mut ub = u64::MAX;
    for &(s, _, g) in &first_legs {
        if egress[s] != u64::MAX {
            ub = ub.min(g.saturating_add(egress[s]));
        }
    }
    if cfg.max_boardings >= 2 {
        for &(s, t1, g1) in &first_legs {
            let mut hops: Vec<(usize, u64, u64)> = vec![(s, t1, g1)];
            for &(s2, d) in &graph.idx.stop_transfers[s] {
                let dur = walk_secs(d);
                hops.push((s2, t1 + dur, g1 + dur * w.walk));
            }
            for (s2, t2, g2) in hops {
                for &(pi, pos) in &graph.idx.stop_patterns[s2] {
                    let pattern = &graph.patterns[pi];
                    if pos + 1 >= pattern.stops.len() {
                        continue;
                    }
                    for trip in &pattern.trips {
                        let dep = trip.dep[pos] as u64;
                        if dep < t2 {
                            continue;
                        }
                        for j in (pos + 1)..pattern.stops.len() {
                            let sj = graph.idx.pattern_stops[pi][j];
                            if egress[sj] == u64::MAX {
                                continue;
                            }
                            let arr = trip.arr[j] as u64;
                            ub = ub.min(
                                g2 + (dep - t2) * w.wait + (arr - dep) * w.ivt + egress[sj],
                            );
                        }
                    }
                }
            }
        }
    }
    ub
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
enum OPlace {
    Acc(usize),
    Stop(usize),
    Egr(usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
struct OKey {
    place: OPlace,
    boardings: u8,
    t: u64,
}

/// Reference intermodal search: label-correcting over explicit
/// (place, boardings, time) states with ride segments as direct macro
/// arcs (board at i, alight anywhere downstream). Prices identical to the
/// production weights; returns the minimum generalized cost in tenths.
pub fn oracle_intermodal_gc(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    drive_access: bool,
) -> Option<u64> {
    if !graph.has_transit() {
        return None;
    }
    let w = prep.weights;
    let walk_secs = |d: f64| ceil_secs(d / graph.walk_speed_mps);

    let mut last_event = 0u64;
    let mut last_dep = 0u64;
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
        return None;
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
            .map(|s| 2.0 * s.access_dist_m / graph.walk_speed_mps)
            .sum::<f64>()
        + graph
            .transfers
            .iter()
            .map(|t| t.dist_m / graph.walk_speed_mps)
            .sum::<f64>()
        + cfg.park_time_s as f64;
    let mut horizon = last_event.max(departure) + walk_bound.ceil() as u64 + 60;

    // Branch and bound: any state costlier than a known feasible plan can
    // never improve on it, and since every arc charges at least min_w per
    // elapsed second the bound also caps how far time can advance.
    let ub = intermodal_gc_upper_bound(graph, prep, cfg, origin, dest, departure, drive_access);
    let min_w = w.ivt.min(w.wait).min(w.walk).max(1);
    if ub != u64::MAX {
        horizon = horizon.min(departure + ub / min_w + 1);
    }

    // Admissible remaining-cost bounds: an egress state must still walk to
    // dest, everything else must eventually make a final egress from some
    // stop, and a pre-boarding walker must first walk to some platform.
    let back = walk_times_from(graph, dest, true);
    let egress_min = (0..graph.stops.len())
        .filter_map(|si| {
            let ni = graph.idx.stop_node[si]?;
            (back[ni] != u64::MAX)
                .then(|| (walk_secs(graph.stops[si].access_dist_m) + back[ni]) * w.walk)
        })
        .min()
        .unwrap_or(u64::MAX);
    let to_stop = if drive_access {
        Vec::new()
    } else {
        nearest_platform_walk(graph)
    };
    let lower_bound = |place: OPlace| -> u64 {
        match place {
            OPlace::Egr(n) => {
                if back[n] == u64::MAX {
                    u64::MAX
                } else {
                    back[n] * w.walk
                }
            }
            OPlace::Acc(n) if !drive_access => {
                if to_stop[n] == u64::MAX || egress_min == u64::MAX {
                    u64::MAX
                } else {
                    to_stop[n] * w.walk + egress_min
                }
            }
            _ => egress_min,
        }
    };

    let mut best: HashMap<OKey, u64> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(u64, OKey)>> = BinaryHeap::new();
    let start = OKey {
        place: OPlace::Acc(origin),
        boardings: 0,
        t: departure,
    };
    best.insert(start, 0);
    heap.push(Reverse((0, start)));

    let relax = |best: &mut HashMap<OKey, u64>,
                 heap: &mut BinaryHeap<Reverse<(u64, OKey)>>,
                 key: OKey,
                 gc: u64| {
        if key.t > horizon || gc > ub {
            return;
        }
        let lb = lower_bound(key.place);
        if lb == u64::MAX || (ub != u64::MAX && gc + lb > ub) {
            return;
        }
        match key.place {
            OPlace::Acc(_) if key.t > last_dep => return,
            OPlace::Stop(_) if key.boardings == 0 && key.t > last_dep => return,
            _ => {}
        }
        match best.get(&key) {
            Some(&g) if g <= gc => {}
            _ => {
                best.insert(key, gc);
                heap.push(Reverse((gc, key)));
            }
        }
    };

    while let Some(Reverse((gc, key))) = heap.pop() {
        if best.get(&key) != Some(&gc) {
            continue;
        }
        if matches!(key.place, OPlace::Egr(n) if n == dest) {
            return Some(gc);
        }
        let t = key.t;
        match key.place {
            OPlace::Acc(n) => {
                if drive_access {
                    for &li in &graph.idx.out_links[n] {
                        let link = &graph.links[li];
                        if !link.modes.contains(ModeSet::AUTO) {
                            continue;
                        }
                        let arr = fifo_link_arrival(prep, li, t);
                        relax(
                            &mut best,
                            &mut heap,
                            OKey {
                                place: OPlace::Acc(graph.idx.link_to[li]),
                                boardings: key.boardings,
                                t: arr,
                            },
                            gc + (arr - t) * w.ivt,
                        );
                    }
                } else {
                    for &li in &graph.idx.out_links[n] {
                        let link = &graph.links[li];
                        if !link.modes.contains(ModeSet::WALK) {
                            continue;
                        }
                        let dur = walk_secs(link.length_m).max(1);
                        relax(
                            &mut best,
                            &mut heap,
                            OKey {
                                place: OPlace::Acc(graph.idx.link_to[li]),
                                boardings: key.boardings,
                                t: t + dur,
                            },
                            gc + dur * w.walk,
                        );
                    }
                }
                for &si in &graph.idx.node_stops[n] {
                    let stop = &graph.stops[si];
                    if drive_access {
                        if !graph.idx.stop_drive_access[si] {
                            continue;
                        }
                        let park = cfg.park_time_s as u64;
                        let walk = walk_secs(stop.access_dist_m);
                        relax(
                            &mut best,
                            &mut heap,
                            OKey {
                                place: OPlace::Stop(si),
                                boardings: key.boardings,
                                t: t + park + walk,
                            },
                            gc + park * w.ivt + walk * w.walk,
                        );
                    } else {
                        let dur = walk_secs(stop.access_dist_m);
                        relax(
                            &mut best,
                            &mut heap,
                            OKey {
                                place: OPlace::Stop(si),
                                boardings: key.boardings,
                                t: t + dur,
                            },
                            gc + dur * w.walk,
                        );
                    }
                }
            }
            OPlace::Stop(s) => {
                // Ride macro arcs: wait for a departure, alight at any
                // downstream stop of the same trip.
                if (key.boardings as u32) < cfg.max_boardings {
                    for &(pi, pos) in &graph.idx.stop_patterns[s] {
                        let pattern = &graph.patterns[pi];
                        for trip in &pattern.trips {
                            let dep = trip.dep[pos] as u64;
                            if dep < t {
                                continue;
                            }
                            for j in (pos + 1)..pattern.stops.len() {
                                let arr = trip.arr[j] as u64;
                                let sj = graph.idx.pattern_stops[pi][j];
                                relax(
                                    &mut best,
                                    &mut heap,
                                    OKey {
                                        place: OPlace::Stop(sj),
                                        boardings: key.boardings + 1,
                                        t: arr,
                                    },
                                    gc + (dep - t) * w.wait + (arr - dep) * w.ivt,
                                );
                            }
                        }
                    }
                }
                for &(s2, d) in &graph.idx.stop_transfers[s] {
                    let dur = walk_secs(d);
                    relax(
                        &mut best,
                        &mut heap,
                        OKey {
                            place: OPlace::Stop(s2),
                            boardings: key.boardings,
                            t: t + dur,
                        },
                        gc + dur * w.walk,
                    );
                }
                if key.boardings > 0 {
                    if let Some(ni) = graph.idx.stop_node[s] {
                        let dur = walk_secs(graph.stops[s].access_dist_m);
                        relax(
                            &mut best,
                            &mut heap,
                            OKey {
                                place: OPlace::Egr(ni),
                                boardings: key.boardings,
                                t: t + dur,
                            },
                            gc + dur * w.walk,
                        );
                    }
                }
            }
            OPlace::Egr(n) => {
                for &li in &graph.idx.out_links[n] {
                    let link = &graph.links[li];
                    if !link.modes.contains(ModeSet::WALK) {
                        continue;
                    }
                    let dur = walk_secs(link.length_m).max(1);
                    relax(
                        &mut best,
                        &mut heap,
                        OKey {
                            place: OPlace::Egr(graph.idx.link_to[li]),
                            boardings: key.boardings,
                            t: t + dur,
                        },
                        gc + dur * w.walk,
                    );
                }
            }
        }
    }

    None
}
