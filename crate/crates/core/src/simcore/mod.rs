//! Mesoscopic within-day simulation: Newell car-following traffic,
//! schedule-driven transit with capacities, and event-driven agents that
//! replan en route.
//!
//! `run_day` advances one day second by second. Each second, queued agent
//! events fire first — persons before transit vehicles before give-up
//! timers, then insertion order — and the roadway then moves one step.
//! Every tie-break is explicit, so a day is bytewise reproducible
//! regardless of worker count.

pub mod replan;
pub mod traffic;
pub mod transit;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::path::Path;

use serde::Serialize;

use crate::config::{RouterConfig, SimConfig};
use crate::demand::{self, Activity};
use crate::error::{Error, Result};
use crate::io;
use crate::network::MultimodalGraph;
use crate::router::{
    self, bin_of, intermodal, GcWeights, LegKind, PreparedProfile, TravelTimeProfile, TripPlan,
};
use crate::types::{Mode, VehicleClass};

use replan::{arrival_decision, fits_full, ActivityOutcome, CancelReason};
use traffic::{TrafficSim, VehicleState};
use transit::{TransitVehicle, WaitingPax};

/// Simulated horizon: activity chains spill into the night, so two days.
pub const HORIZON_S: u64 = 172_800;
const DAY_S: u64 = 86_400;
/// Seconds of zero roadway progress (vehicles present, no events) before
/// the day is declared deadlocked.
const STALL_LIMIT: u32 = 900;
const REROUTE_MAX: u32 = 3;
/// Minimum predicted arrival improvement for an en-route reroute to win.
const REROUTE_GAIN_S: u64 = 60;

// ---------------------------------------------------------------------
// Day inputs
// ---------------------------------------------------------------------

/// One planned movement: travel to `activity`, or back home when
/// `activity` is None (the closing trip of the day). `plan` is the route
/// found by the planner under its historical profile; None means no route
/// was found, and the simulator makes a final attempt at departure before
/// cancelling the activity as untravelable.
#[derive(Debug, Clone)]
pub struct PlannedTrip {
    pub activity: Option<Activity>,
    pub mode: Mode,
    pub plan: Option<TripPlan>,
    pub departure: u64,
}

/// One person's planned day: a trip per activity in chain order, plus an
/// optional return-home trip at the end.
#[derive(Debug, Clone)]
pub struct PersonDay {
    pub person_id: u64,
    pub home_node: usize,
    pub has_vehicle: bool,
    pub trips: Vec<PlannedTrip>,
}

// ---------------------------------------------------------------------
// Day outputs
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TripRecord {
    pub person_id: u64,
    /// None for the return-home trip.
    pub activity_id: Option<u64>,
    pub mode: Mode,
    pub depart_s: u64,
    /// None when the trip never reached its destination.
    pub arrive_s: Option<u64>,
    pub predicted_s: u64,
    pub predicted_gc: u64,
    pub experienced_gc: u64,
    pub ivt_s: u64,
    pub wait_s: u64,
    pub walk_s: u64,
    pub distance_m: f64,
    pub origin_node: usize,
    pub dest_node: usize,
    pub rerouted: bool,
    pub switched_mode: bool,
}

impl TripRecord {
    pub fn travel_s(&self) -> Option<u64> {
        self.arrive_s.map(|a| a - self.depart_s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoardingRecord {
    pub pattern: usize,
    pub route_id: String,
    pub mode: String,
    pub stop_id: String,
    pub boards: u64,
    pub alights: u64,
    pub denied: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DayKpis {
    /// Car time on the roadway, hours (completed link traversals).
    pub vehicle_hours: f64,
    /// Distance-weighted mean car speed over completed traversals.
    pub mean_speed_mps: f64,
    pub person_hours_transit: f64,
    pub boardings: u64,
    pub denied_boardings: u64,
    pub trips_total: u64,
    pub trips_arrived: u64,
    pub activities_planned: u64,
    pub activities_cancelled: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajEvent {
    pub t: u64,
    pub person_id: u64,
    pub event: &'static str,
    pub detail: String,
}

#[derive(Debug)]
pub struct DayResult {
    pub outcomes: Vec<ActivityOutcome>,
    pub trips: Vec<TripRecord>,
    /// Car link-time observations: sums of seconds and counts per link × bin.
    pub link_sums: Vec<Vec<f64>>,
    pub link_counts: Vec<Vec<u32>>,
    pub boardings: Vec<BoardingRecord>,
    pub kpis: DayKpis,
    pub trajectories: Option<Vec<TrajEvent>>,
}

/// Routes one trip in the requested mode (transit modes through the
/// intermodal search, everything else unimodal).
pub fn route_mode(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    origin: usize,
    dest: usize,
    departure: u64,
    mode: Mode,
) -> Option<TripPlan> {
    let mut plan = match mode {
        Mode::WalkToTransit => intermodal::intermodal_path(
            graph,
            prep,
            cfg,
            origin,
            dest,
            departure,
            intermodal::AccessMode::Walk,
        ),
        Mode::DriveToTransit => intermodal::intermodal_path(
            graph,
            prep,
            cfg,
            origin,
            dest,
            departure,
            intermodal::AccessMode::Drive,
        ),
        m => router::shortest_path(graph, prep, origin, dest, departure, m),
    }?;
    plan.mode = mode;
    Some(plan)
}

// ---------------------------------------------------------------------
// Plan compilation
// ---------------------------------------------------------------------

/// Executable step compiled from plan legs. Waits on a platform and time
/// spent on board are not steps — they emerge from the transit vehicles.
#[derive(Debug, Clone)]
enum Step {
    /// Elapse `dur` seconds (walking, biking, parking, pre-drive waits).
    Timer {
        dur: u64,
        kind: LegKind,
        dist_m: f64,
    },
    /// Drive a contiguous roadway segment. `pred` holds predicted seconds
    /// per link (bin waits folded into the following link).
    Drive {
        links: Vec<usize>,
        pred: Vec<u32>,
        dest: usize,
    },
    /// Queue at `stop` for the next vehicle of `pattern` with room, riding
    /// to `alight_pos`.
    Board {
        stop: usize,
        pattern: usize,
        alight_pos: usize,
        ride_dist: f64,
    },
}

/// Lowers plan legs onto executable steps. Returns None when the plan
/// references anything missing from the graph (treated as unroutable).
fn compile_steps(graph: &MultimodalGraph, plan: &TripPlan) -> Option<Vec<Step>> {
    let mut steps = Vec::new();
    let mut links: Vec<usize> = Vec::new();
    let mut pred: Vec<u32> = Vec::new();
    let mut pending_wait = 0u32;
    let mut flush = |steps: &mut Vec<Step>, links: &mut Vec<usize>, pred: &mut Vec<u32>| {
        if !links.is_empty() {
            let dest = graph.idx.link_to[*links.last().unwrap()];
            steps.push(Step::Drive {
                links: std::mem::take(links),
                pred: std::mem::take(pred),
                dest,
            });
        }
    };
    let legs = &plan.legs;
    let mut i = 0;
    while i < legs.len() {
        let leg = &legs[i];
        match leg.kind {
            LegKind::Drive => {
                let li = *graph.idx.link_of.get(&leg.link?)?;
                links.push(li);
                pred.push(leg.dur_s + pending_wait);
                pending_wait = 0;
            }
            LegKind::Wait => {
                if leg.stop.is_none() && leg.pattern.is_none() && leg.trip.is_none() {
                    // Bin-boundary wait from the router's envelope: executed
                    // standing still before the segment, folded into the
                    // next link's prediction once driving.
                    if links.is_empty() {
                        steps.push(Step::Timer {
                            dur: leg.dur_s as u64,
                            kind: LegKind::Wait,
                            dist_m: 0.0,
                        });
                    } else {
                        pending_wait += leg.dur_s;
                    }
                }
                // Platform waits and on-board dwells emerge from vehicles.
            }
            LegKind::Walk | LegKind::Bike | LegKind::Park => {
                flush(&mut steps, &mut links, &mut pred);
                steps.push(Step::Timer {
                    dur: leg.dur_s as u64,
                    kind: leg.kind,
                    dist_m: leg.dist_m,
                });
            }
            LegKind::Board => {
                flush(&mut steps, &mut links, &mut pred);
                let pi = leg.pattern?;
                let board_si = *graph.idx.stop_of.get(leg.stop.as_ref()?)?;
                // The matching alight leg closes the ride.
                let mut j = i + 1;
                let mut ride_dist = 0.0;
                while j < legs.len() && legs[j].kind != LegKind::Alight {
                    if legs[j].kind == LegKind::Ride {
                        ride_dist += legs[j].dist_m;
                    }
                    j += 1;
                }
                let alight_si = *graph.idx.stop_of.get(legs.get(j)?.stop.as_ref()?)?;
                let stops = graph.idx.pattern_stops.get(pi)?;
                let mut found = None;
                'outer: for (b, &s) in stops.iter().enumerate() {
                    if s != board_si {
                        continue;
                    }
                    for (a, &s2) in stops.iter().enumerate().skip(b + 1) {
                        if s2 == alight_si {
                            found = Some((b, a));
                            break 'outer;
                        }
                    }
                }
                let (_, alight_pos) = found?;
                steps.push(Step::Board {
                    stop: board_si,
                    pattern: pi,
                    alight_pos,
                    ride_dist,
                });
                i = j; // skip the ride/alight legs just consumed
            }
            LegKind::Ride | LegKind::Alight => {}
        }
        i += 1;
    }
    flush(&mut steps, &mut links, &mut pred);
    Some(steps)
}

/// Drive links and per-link predicted seconds of a unimodal drive plan
/// (used when splicing a reroute into an active vehicle).
fn drive_tail(graph: &MultimodalGraph, plan: &TripPlan) -> (Vec<usize>, Vec<u32>) {
    let mut links = Vec::new();
    let mut pred = Vec::new();
    let mut wait = 0u32;
    for leg in &plan.legs {
        match leg.kind {
            LegKind::Drive => {
                if let Some(&li) = leg.link.and_then(|id| graph.idx.link_of.get(&id)) {
                    links.push(li);
                    pred.push(leg.dur_s + wait);
                    wait = 0;
                }
            }
            LegKind::Wait => wait += leg.dur_s,
            _ => {}
        }
    }
    (links, pred)
}

// ---------------------------------------------------------------------
// Runtime state
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Owner {
    Person(usize),
    Transit(usize),
    Truck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    /// Person begins their next trip.
    Start(usize),
    /// Person finishes a timer step or resumes after driving.
    Resume(usize),
    /// Transit vehicle arrives at its current pattern position.
    TransitArrive(usize),
    /// Transit vehicle departs toward the next position.
    TransitGo(usize),
    /// Waiting passenger abandons the stop (guarded by `stamp`).
    GiveUp { p: usize, stamp: u64 },
    /// Background truck enters the network.
    Truck(usize),
}

fn ev_rank(ev: &Ev) -> u8 {
    match ev {
        Ev::Start(_) | Ev::Resume(_) | Ev::Truck(_) => 0,
        Ev::TransitArrive(_) | Ev::TransitGo(_) => 1,
        Ev::GiveUp { .. } => 2,
    }
}

#[derive(Debug)]
struct PersonRt {
    person_id: u64,
    node: usize,
    car_node: Option<usize>,
    bike_node: Option<usize>,
    disrupted: bool,
    finished: bool,
    ti: usize,
    // Active trip execution.
    steps: Vec<Step>,
    si: usize,
    depart: u64,
    mode: Mode,
    origin: usize,
    dest: usize,
    pred_total: u64,
    pred_gc: u64,
    ivt: u64,
    wait: u64,
    walk: u64,
    dist: f64,
    rerouted: bool,
    switched: bool,
    reroutes: u32,
    transit_retry: bool,
    // Roadway segment in progress.
    seg_start: u64,
    seg_trig: u64,
    seg_pred: VecDeque<u32>,
    seg_pred_done: u64,
    seg_dest: usize,
    // Stop wait in progress.
    wait_from: u64,
    stop_stamp: u64,
    at_stop: Option<usize>,
}

#[derive(Debug)]
struct TransitRt {
    veh: TransitVehicle,
    stops: Vec<usize>,
    arr: Vec<u32>,
    dep: Vec<u32>,
    /// Buses with a mapped roadway path drive it; everything else (rail,
    /// unmapped buses) advances by schedule.
    roadway: bool,
    retired: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct BoardTally {
    boards: u64,
    alights: u64,
    denied: u64,
}

struct Sim<'a> {
    graph: &'a MultimodalGraph,
    historical: &'a TravelTimeProfile,
    router_cfg: &'a RouterConfig,
    sim_cfg: &'a SimConfig,
    days: &'a [PersonDay],
    weights: GcWeights,
    substeps: u32,
    traffic: TrafficSim<'a>,
    persons: Vec<PersonRt>,
    buses: Vec<TransitRt>,
    queues: Vec<VecDeque<WaitingPax>>,
    heap: BinaryHeap<Reverse<(u64, u8, u64, Ev)>>,
    seq: u64,
    next_veh: u64,
    owner: HashMap<u64, Owner>,
    trucks: Vec<Vec<usize>>,
    // Prevailing travel times: today's observations over the historical
    // profile, rebuilt lazily at most once per bin.
    live: Option<(usize, PreparedProfile)>,
    link_sums: Vec<Vec<f64>>,
    link_counts: Vec<Vec<u32>>,
    boards: BTreeMap<(usize, usize), BoardTally>,
    outcomes: Vec<ActivityOutcome>,
    trips: Vec<TripRecord>,
    traj: Option<Vec<TrajEvent>>,
    car_secs: u64,
    car_dist: f64,
    transit_secs: u64,
    boardings_total: u64,
    denied_total: u64,
    events_fired: bool,
}

impl<'a> Sim<'a> {
    fn push_ev(&mut self, t: u64, ev: Ev) {
        if t > HORIZON_S {
            return;
        }
        self.heap.push(Reverse((t, ev_rank(&ev), self.seq, ev)));
        self.seq += 1;
    }

    fn traj(&mut self, t: u64, person_id: u64, event: &'static str, detail: String) {
        if let Some(rows) = self.traj.as_mut() {
            rows.push(TrajEvent {
                t,
                person_id,
                event,
                detail,
            });
        }
    }

    /// Rebuilds the prevailing profile when `now` has crossed into a new
    /// bin since the last build.
    fn ensure_live(&mut self, now: u64) {
        let b = bin_of(now);
        if self.live.as_ref().map(|(bb, _)| *bb) != Some(b) {
            let prof = router::profile_from_records(
                self.graph,
                self.historical,
                &self.link_sums,
                &self.link_counts,
            );
            self.live = Some((b, PreparedProfile::new(self.graph, &prof, self.router_cfg)));
        }
    }

    fn route_with(&mut self, mode: Mode, origin: usize, dest: usize, now: u64) -> Option<TripPlan> {
        self.ensure_live(now);
        let prep = &self.live.as_ref().unwrap().1;
        route_mode(self.graph, prep, self.router_cfg, origin, dest, now, mode)
    }

    fn mode_allowed(&self, p: usize, mode: Mode, at: usize) -> bool {
        match mode {
            Mode::Drive => self.persons[p].car_node == Some(at),
            Mode::DriveToTransit => {
                self.persons[p].car_node == Some(at) && self.graph.has_transit()
            }
            Mode::WalkToTransit => self.graph.has_transit(),
            Mode::Bike => self.persons[p].bike_node == Some(at),
            Mode::Walk => true,
        }
    }

    /// Fastest-arriving feasible alternative, ties broken by mode order.
    fn best_alternative(
        &mut self,
        p: usize,
        origin: usize,
        dest: usize,
        now: u64,
        exclude: Option<Mode>,
    ) -> Option<(Mode, TripPlan)> {
        let mut best: Option<(u64, usize, Mode, TripPlan)> = None;
        for (rank, &mode) in Mode::ALL.iter().enumerate() {
            if Some(mode) == exclude || !self.mode_allowed(p, mode, origin) {
                continue;
            }
            if let Some(plan) = self.route_with(mode, origin, dest, now) {
                let key = (plan.arrival(), rank);
                if best
                    .as_ref()
                    .map_or(true, |(a, r, _, _)| key < (*a, *r))
                {
                    best = Some((key.0, key.1, mode, plan));
                }
            }
        }
        best.map(|(_, _, m, pl)| (m, pl))
    }

    fn cancel_activity(&mut self, act: &Activity, reason: CancelReason) {
        self.outcomes.push(ActivityOutcome::cancelled(act, reason));
    }

    /// Starts trip `ti` (and any that follow immediately) for person `p`.
    fn start_trip(&mut self, p: usize, start_now: u64) {
        let days = self.days;
        let mut now = start_now;
        loop {
            if self.persons[p].finished {
                return;
            }
            let ti = self.persons[p].ti;
            let Some(trip) = days[p].trips.get(ti) else {
                self.persons[p].finished = true;
                return;
            };
            if now < trip.departure {
                let d = trip.departure;
                self.push_ev(d, Ev::Start(p));
                return;
            }
            let origin = self.persons[p].node;
            let dest = match (&trip.plan, &trip.activity) {
                (Some(pl), _) => pl.dest_node,
                (None, Some(a)) => match self.graph.centroid_node(a.zone) {
                    Ok(n) => n,
                    Err(_) => usize::MAX,
                },
                (None, None) => days[p].home_node,
            };

            // No movement needed: resolve the activity in place.
            if dest == origin {
                match &trip.activity {
                    None => {
                        self.persons[p].finished = true;
                        return;
                    }
                    Some(act) => match arrival_decision(act, now) {
                        Some((start, dur, status)) => {
                            self.outcomes
                                .push(ActivityOutcome::done(act, start, dur, status));
                            self.persons[p].ti += 1;
                            let resume = start + dur as u64;
                            if resume > now {
                                // The activity runs past the present; the
                                // next trip starts by event, not recursion.
                                self.push_ev(resume, Ev::Start(p));
                                return;
                            }
                            continue;
                        }
                        None => {
                            let reason = if self.persons[p].disrupted {
                                CancelReason::Cascade
                            } else {
                                CancelReason::TooLate
                            };
                            self.cancel_activity(act, reason);
                            self.persons[p].disrupted = true;
                            self.persons[p].ti += 1;
                            continue;
                        }
                    },
                }
            }

            let mut mode = trip.mode;
            let mut switched = false;
            let mut plan: Option<TripPlan> = None;
            let reusable = trip.plan.as_ref().is_some_and(|pl| {
                pl.origin_node == origin
                    && pl.departure == now
                    && self.mode_allowed(p, trip.mode, origin)
            });
            if reusable {
                plan = trip.plan.clone();
            } else if dest != usize::MAX && self.mode_allowed(p, trip.mode, origin) {
                plan = self.route_with(trip.mode, origin, dest, now);
            }
            // Planned mode infeasible: fall back to the fastest available.
            if plan.is_none() && dest != usize::MAX {
                if let Some((m, pl)) = self.best_alternative(p, origin, dest, now, Some(mode)) {
                    mode = m;
                    switched = true;
                    plan = Some(pl);
                }
            }
            // Predicted late for the full activity: switch to a faster
            // feasible mode when one exists.
            if let (Some(pl), Some(act)) = (&plan, &trip.activity) {
                if !fits_full(act, now + pl.predicted_total) {
                    let cur_arrival = now + pl.predicted_total;
                    if let Some((m, alt)) = self.best_alternative(p, origin, dest, now, Some(mode))
                    {
                        if alt.arrival() < cur_arrival {
                            mode = m;
                            switched = true;
                            plan = Some(alt);
                        }
                    }
                }
            }

            let compiled = plan
                .as_ref()
                .and_then(|pl| compile_steps(self.graph, pl).map(|s| (pl.clone(), s)));
            match compiled {
                None => {
                    // Untravelable: the traveler stays where they are.
                    if let Some(act) = &trip.activity {
                        self.cancel_activity(act, CancelReason::Untravelable);
                        self.traj(now, self.persons[p].person_id, "cancel", "untravelable".into());
                    }
                    self.persons[p].disrupted = true;
                    self.persons[p].ti += 1;
                }
                Some((pl, steps)) => {
                    let per = &mut self.persons[p];
                    per.steps = steps;
                    per.si = 0;
                    per.depart = now;
                    per.mode = mode;
                    per.origin = origin;
                    per.dest = pl.dest_node;
                    per.pred_total = pl.predicted_total;
                    per.pred_gc = pl.generalized_cost;
                    per.ivt = 0;
                    per.wait = 0;
                    per.walk = 0;
                    per.dist = 0.0;
                    per.rerouted = false;
                    per.switched = switched;
                    per.reroutes = 0;
                    per.transit_retry = false;
                    per.at_stop = None;
                    let pid = per.person_id;
                    self.traj(now, pid, "depart", format!("{mode}"));
                    self.advance(p, now);
                    return;
                }
            }
        }
    }

    /// Runs steps until the person suspends (timer, roadway, stop wait) or
    /// the trip completes.
    fn advance(&mut self, p: usize, now: u64) {
        loop {
            let per = &mut self.persons[p];
            if per.si >= per.steps.len() {
                self.complete_trip(p, now);
                return;
            }
            match per.steps[per.si].clone() {
                Step::Timer { dur, kind, dist_m } => {
                    per.si += 1;
                    match kind {
                        LegKind::Walk => per.walk += dur,
                        _ => per.ivt += dur,
                    }
                    per.dist += dist_m;
                    if dur > 0 {
                        self.push_ev(now + dur, Ev::Resume(p));
                        return;
                    }
                }
                Step::Drive { links, pred, dest } => {
                    per.si += 1;
                    per.seg_start = now;
                    per.seg_trig = now;
                    per.seg_pred = pred.into();
                    per.seg_pred_done = 0;
                    per.seg_dest = dest;
                    let id = self.next_veh;
                    self.next_veh += 1;
                    self.owner.insert(id, Owner::Person(p));
                    self.traffic
                        .inject(VehicleState::new(id, VehicleClass::Car, 1, links, now));
                    return;
                }
                Step::Board {
                    stop,
                    pattern,
                    alight_pos,
                    ..
                } => {
                    per.wait_from = now;
                    per.stop_stamp = now;
                    per.at_stop = Some(stop);
                    let pax = WaitingPax {
                        person: per.person_id,
                        plan: p,
                        pattern,
                        alight_pos,
                        enqueued_at: now,
                    };
                    self.queues[stop].push_back(pax);
                    let give = now + self.sim_cfg.max_stop_wait_s as u64;
                    self.push_ev(give, Ev::GiveUp { p, stamp: now });
                    return;
                }
            }
        }
    }

    fn complete_trip(&mut self, p: usize, now: u64) {
        let days = self.days;
        let per = &mut self.persons[p];
        let w = self.weights;
        let trip = &days[p].trips[per.ti];
        per.node = per.dest;
        if per.mode == Mode::Bike {
            per.bike_node = Some(per.dest);
        }
        per.steps.clear();
        let record = TripRecord {
            person_id: per.person_id,
            activity_id: trip.activity.as_ref().map(|a| a.id),
            mode: per.mode,
            depart_s: per.depart,
            arrive_s: Some(now),
            predicted_s: per.pred_total,
            predicted_gc: per.pred_gc,
            experienced_gc: per.ivt * w.ivt + per.wait * w.wait + per.walk * w.walk,
            ivt_s: per.ivt,
            wait_s: per.wait,
            walk_s: per.walk,
            distance_m: per.dist,
            origin_node: per.origin,
            dest_node: per.dest,
            rerouted: per.rerouted,
            switched_mode: per.switched,
        };
        let pid = per.person_id;
        self.trips.push(record);
        self.traj(now, pid, "arrive", String::new());
        match &trip.activity {
            None => {
                self.persons[p].finished = true;
            }
            Some(act) => match arrival_decision(act, now) {
                Some((start, dur, status)) => {
                    self.outcomes
                        .push(ActivityOutcome::done(act, start, dur, status));
                    self.persons[p].ti += 1;
                    let resume = start + dur as u64;
                    if resume > now {
                        self.push_ev(resume, Ev::Start(p));
                    } else {
                        self.start_trip(p, now);
                    }
                }
                None => {
                    let reason = if self.persons[p].disrupted {
                        CancelReason::Cascade
                    } else {
                        CancelReason::TooLate
                    };
                    self.cancel_activity(act, reason);
                    self.traj(now, pid, "cancel", "window closed".into());
                    self.persons[p].disrupted = true;
                    self.persons[p].ti += 1;
                    self.start_trip(p, now);
                }
            },
        }
    }

    /// Abandons a trip mid-way: the target activity is cancelled as
    /// untravelable and the traveler stays where they are.
    fn strand(&mut self, p: usize, now: u64) {
        let days = self.days;
        let per = &mut self.persons[p];
        let w = self.weights;
        let trip = &days[p].trips[per.ti];
        per.steps.clear();
        let record = TripRecord {
            person_id: per.person_id,
            activity_id: trip.activity.as_ref().map(|a| a.id),
            mode: per.mode,
            depart_s: per.depart,
            arrive_s: None,
            predicted_s: per.pred_total,
            predicted_gc: per.pred_gc,
            experienced_gc: per.ivt * w.ivt + per.wait * w.wait + per.walk * w.walk,
            ivt_s: per.ivt,
            wait_s: per.wait,
            walk_s: per.walk,
            distance_m: per.dist,
            origin_node: per.origin,
            dest_node: per.dest,
            rerouted: per.rerouted,
            switched_mode: per.switched,
        };
        self.trips.push(record);
        if let Some(act) = &days[p].trips[self.persons[p].ti].activity {
            self.cancel_activity(act, CancelReason::Untravelable);
        }
        let pid = self.persons[p].person_id;
        self.traj(now, pid, "cancel", "stranded".into());
        self.persons[p].disrupted = true;
        self.persons[p].ti += 1;
        self.start_trip(p, now);
    }

    // -- event handlers -------------------------------------------------

    fn dispatch(&mut self, ev: Ev, t: u64) {
        match ev {
            Ev::Start(p) => self.start_trip(p, t),
            Ev::Resume(p) => self.advance(p, t),
            Ev::TransitArrive(vi) => self.transit_arrive(vi, t),
            Ev::TransitGo(vi) => self.transit_go(vi, t),
            Ev::GiveUp { p, stamp } => self.give_up(p, stamp, t),
            Ev::Truck(k) => {
                let route = self.trucks[k].clone();
                let id = self.next_veh;
                self.next_veh += 1;
                self.owner.insert(id, Owner::Truck);
                self.traffic
                    .inject(VehicleState::new(id, VehicleClass::Truck, 1, route, t));
            }
        }
    }

    fn transit_arrive(&mut self, vi: usize, t: u64) {
        let (served, pos, si, pattern, last) = {
            let rt = &mut self.buses[vi];
            if rt.retired {
                return;
            }
            let pos = rt.veh.pos;
            let si = rt.stops[pos];
            let served = rt.veh.serve_stop(&mut self.queues[si], t, self.sim_cfg);
            (
                served,
                pos,
                si,
                rt.veh.pattern,
                pos + 1 == rt.stops.len(),
            )
        };
        let tally = self.boards.entry((pattern, si)).or_default();
        tally.boards += served.boarded.len() as u64;
        tally.alights += served.alighted.len() as u64;
        tally.denied += served.denied as u64;
        self.boardings_total += served.boarded.len() as u64;
        self.denied_total += served.denied as u64;

        for pax in &served.boarded {
            let p = pax.plan;
            let per = &mut self.persons[p];
            per.wait += t - per.wait_from;
            per.at_stop = None;
            let pid = per.person_id;
            let stop_id = self.graph.stops[si].id.clone();
            self.traj(t, pid, "board", stop_id);
        }
        for rider in &served.alighted {
            let p = rider.plan;
            let ride = t - rider.boarded_at;
            self.transit_secs += ride;
            let per = &mut self.persons[p];
            per.ivt += ride;
            if let Some(Step::Board { ride_dist, .. }) = per.steps.get(per.si) {
                per.dist += ride_dist;
            }
            per.si += 1;
            if let Some(n) = self.graph.idx.stop_node[si] {
                per.node = n;
            }
            let pid = per.person_id;
            let stop_id = self.graph.stops[si].id.clone();
            self.traj(t, pid, "alight", stop_id);
            self.advance(p, t);
        }

        let rt = &mut self.buses[vi];
        if last {
            debug_assert!(rt.veh.onboard.is_empty(), "riders past the last stop");
            rt.retired = true;
            return;
        }
        let depart = (t + served.dwell_s).max(rt.dep[pos] as u64);
        self.push_ev(depart, Ev::TransitGo(vi));
    }

    fn transit_go(&mut self, vi: usize, t: u64) {
        let (pattern, target, occupants, sched_run) = {
            let rt = &mut self.buses[vi];
            if rt.retired {
                return;
            }
            let from = rt.veh.pos;
            rt.veh.pos += 1;
            let target = rt.veh.pos;
            let run = rt.arr[target].saturating_sub(rt.dep[from]) as u64;
            (rt.veh.pattern, target, rt.veh.onboard.len() as u32, run)
        };
        if self.buses[vi].roadway {
            let segment = self.graph.idx.bus_paths[pattern]
                .as_ref()
                .map(|paths| paths[target - 1].clone())
                .unwrap_or_default();
            if !segment.is_empty() {
                let id = self.next_veh;
                self.next_veh += 1;
                self.owner.insert(id, Owner::Transit(vi));
                self.traffic.inject(VehicleState::new(
                    id,
                    VehicleClass::Bus,
                    occupants + 1,
                    segment,
                    t,
                ));
                return;
            }
        }
        self.push_ev(t + sched_run, Ev::TransitArrive(vi));
    }

    fn give_up(&mut self, p: usize, stamp: u64, t: u64) {
        let per = &self.persons[p];
        if per.finished || per.stop_stamp != stamp {
            return;
        }
        let Some(stop) = per.at_stop else { return };
        let pid = per.person_id;
        self.queues[stop].retain(|w| w.person != pid);
        let node = self.graph.idx.stop_node[stop].unwrap_or(per.node);
        let dest = per.dest;
        {
            let per = &mut self.persons[p];
            per.at_stop = None;
            per.wait += t - per.wait_from;
            per.node = node;
        }
        self.traj(t, pid, "give_up", self.graph.stops[stop].id.clone());

        // One fresh transit attempt (a different line may serve), then walk.
        if !self.persons[p].transit_retry {
            self.persons[p].transit_retry = true;
            if let Some(pl) = self.route_with(Mode::WalkToTransit, node, dest, t) {
                if let Some(steps) = compile_steps(self.graph, &pl) {
                    let per = &mut self.persons[p];
                    per.steps = steps;
                    per.si = 0;
                    self.advance(p, t);
                    return;
                }
            }
        }
        if let Some(pl) = self.route_with(Mode::Walk, node, dest, t) {
            if let Some(steps) = compile_steps(self.graph, &pl) {
                let per = &mut self.persons[p];
                per.steps = steps;
                per.si = 0;
                per.mode = Mode::Walk;
                per.switched = true;
                self.advance(p, t);
                return;
            }
        }
        self.strand(p, t);
    }

    // -- roadway integration ---------------------------------------------

    fn process_exits(&mut self, stamp: u64) {
        let exits = std::mem::take(&mut self.traffic.exits);
        for e in exits {
            let Some(&owner) = self.owner.get(&e.veh) else {
                continue;
            };
            let Owner::Person(p) = owner else {
                continue; // buses and trucks are load, not measurement
            };
            let secs = e.exited_at - e.entered_at;
            let b = bin_of(e.entered_at);
            self.link_sums[e.link][b] += secs as f64;
            self.link_counts[e.link][b] += 1;
            self.car_secs += secs;
            let len = self.graph.links[e.link].length_m;
            self.car_dist += len;
            let per = &mut self.persons[p];
            per.dist += len;
            let done = per.seg_pred.pop_front().unwrap_or(0);
            per.seg_pred_done += done as u64;
            self.maybe_reroute(p, e.veh, stamp);
        }
    }

    /// En-route reroute (drive trips only): when experienced time exceeds
    /// θ × predicted, compare the current tail against a fresh search under
    /// prevailing times and splice in the winner.
    fn maybe_reroute(&mut self, p: usize, veh: u64, stamp: u64) {
        let per = &self.persons[p];
        if per.mode != Mode::Drive
            || per.reroutes >= REROUTE_MAX
            || per.seg_pred_done == 0
        {
            return;
        }
        let experienced = (stamp - per.seg_trig) as f64;
        if experienced < self.sim_cfg.reroute_theta * per.seg_pred_done as f64 {
            return;
        }
        let Some(v) = self.traffic.vehicles.get(&veh) else {
            return;
        };
        if v.route.len() - v.at < 2 {
            return; // current link is the last one
        }
        let (cur_link, at, tail): (usize, usize, Vec<usize>) =
            (v.link, v.at, v.route[v.at + 1..].to_vec());
        let seg_dest = per.seg_dest;
        self.ensure_live(stamp);
        let live = &self.live.as_ref().unwrap().1;
        let est_out = stamp + live.cost_at(VehicleClass::Car, cur_link, stamp) as u64;
        let mut old_arr = est_out;
        for &li in &tail {
            old_arr = live.arrival(VehicleClass::Car, li, old_arr).0;
        }
        let from = self.graph.idx.link_to[cur_link];
        let Some(new_plan) =
            router::shortest_path(self.graph, live, from, seg_dest, est_out, Mode::Drive)
        else {
            return;
        };
        if new_plan.arrival() + REROUTE_GAIN_S > old_arr {
            return;
        }
        let (links, pred) = drive_tail(self.graph, &new_plan);
        let v = self.traffic.vehicles.get_mut(&veh).unwrap();
        v.route.truncate(at + 1);
        v.route.extend_from_slice(&links);
        let per = &mut self.persons[p];
        per.seg_trig = stamp;
        // Keep one predicted entry per remaining link: the current link's
        // live estimate, then the new tail.
        per.seg_pred = std::iter::once((est_out - stamp) as u32)
            .chain(pred)
            .collect();
        per.seg_pred_done = 0;
        per.rerouted = true;
        per.reroutes += 1;
        let pid = per.person_id;
        self.traj(stamp, pid, "reroute", format!("{} links", links.len()));
    }

    fn process_done(&mut self, stamp: u64) {
        let done = std::mem::take(&mut self.traffic.done);
        for id in done {
            match self.owner.remove(&id) {
                Some(Owner::Person(p)) => {
                    let per = &mut self.persons[p];
                    per.ivt += stamp - per.seg_start;
                    per.node = per.seg_dest;
                    if matches!(per.mode, Mode::Drive | Mode::DriveToTransit) {
                        per.car_node = Some(per.seg_dest);
                    }
                    self.push_ev(stamp, Ev::Resume(p));
                }
                Some(Owner::Transit(vi)) => {
                    self.push_ev(stamp, Ev::TransitArrive(vi));
                }
                Some(Owner::Truck) | None => {}
            }
        }
    }

    // -- wrap-up ----------------------------------------------------------

    fn finalize(mut self) -> DayResult {
        let days = self.days;
        for p in 0..self.persons.len() {
            if self.persons[p].finished {
                continue;
            }
            // Anyone still out at the horizon: the current trip never
            // arrived; its activity and everything downstream is lost.
            if !self.persons[p].steps.is_empty() || self.persons[p].at_stop.is_some() {
                let per = &mut self.persons[p];
                let w = self.weights;
                let trip = &days[p].trips[per.ti];
                self.trips.push(TripRecord {
                    person_id: per.person_id,
                    activity_id: trip.activity.as_ref().map(|a| a.id),
                    mode: per.mode,
                    depart_s: per.depart,
                    arrive_s: None,
                    predicted_s: per.pred_total,
                    predicted_gc: per.pred_gc,
                    experienced_gc: per.ivt * w.ivt + per.wait * w.wait + per.walk * w.walk,
                    ivt_s: per.ivt,
                    wait_s: per.wait,
                    walk_s: per.walk,
                    distance_m: per.dist,
                    origin_node: per.origin,
                    dest_node: per.dest,
                    rerouted: per.rerouted,
                    switched_mode: per.switched,
                });
            }
            for ti in self.persons[p].ti..days[p].trips.len() {
                if let Some(act) = days[p].trips[ti].activity.clone() {
                    let reason = if self.persons[p].disrupted {
                        CancelReason::Cascade
                    } else {
                        CancelReason::TooLate
                    };
                    self.cancel_activity(&act, reason);
                    self.persons[p].disrupted = true;
                }
            }
            self.persons[p].finished = true;
        }

        self.outcomes
            .sort_by_key(|o| (o.person_id, o.activity_id));
        self.trips
            .sort_by_key(|t| (t.person_id, t.depart_s, t.activity_id));

        let boardings: Vec<BoardingRecord> = self
            .boards
            .iter()
            .map(|(&(pi, si), t)| BoardingRecord {
                pattern: pi,
                route_id: self.graph.patterns[pi].route_id.clone(),
                mode: self.graph.patterns[pi].mode.label().to_string(),
                stop_id: self.graph.stops[si].id.clone(),
                boards: t.boards,
                alights: t.alights,
                denied: t.denied,
            })
            .collect();

        let kpis = DayKpis {
            vehicle_hours: self.car_secs as f64 / 3600.0,
            mean_speed_mps: if self.car_secs > 0 {
                self.car_dist / self.car_secs as f64
            } else {
                0.0
            },
            person_hours_transit: self.transit_secs as f64 / 3600.0,
            boardings: self.boardings_total,
            denied_boardings: self.denied_total,
            trips_total: self.trips.len() as u64,
            trips_arrived: self.trips.iter().filter(|t| t.arrive_s.is_some()).count() as u64,
            activities_planned: days
                .iter()
                .flat_map(|d| &d.trips)
                .filter(|t| t.activity.is_some())
                .count() as u64,
            activities_cancelled: self
                .outcomes
                .iter()
                .filter(|o| o.cancelled_flag())
                .count() as u64,
        };

        DayResult {
            outcomes: self.outcomes,
            trips: self.trips,
            link_sums: self.link_sums,
            link_counts: self.link_counts,
            boardings,
            kpis,
            trajectories: self.traj,
        }
    }
}

/// Simulates one day. `historical` supplies predictions: trucks and all
/// within-day replanning route against it blended with today's experience.
pub fn run_day(
    graph: &MultimodalGraph,
    historical: &TravelTimeProfile,
    days: &[PersonDay],
    router_cfg: &RouterConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<DayResult> {
    if sim_cfg.dt_s <= 0.0 {
        return Err(Error::Config("sim.dt_s must be positive".into()));
    }
    let substeps = (1.0 / sim_cfg.dt_s).ceil().max(1.0) as u32;
    let dt = 1.0 / substeps as f64;
    let stable = graph.max_stable_dt();
    if dt > stable + 1e-12 {
        return Err(Error::Config(format!(
            "sim.dt_s = {} exceeds the largest stable step {:.3} s \
             (min jam_spacing / wave_speed over congestable links)",
            sim_cfg.dt_s, stable
        )));
    }

    let nlinks = graph.links.len();
    let mut sim = Sim {
        graph,
        historical,
        router_cfg,
        sim_cfg,
        days,
        weights: GcWeights::from_config(router_cfg),
        substeps,
        traffic: TrafficSim::new(graph),
        persons: Vec::with_capacity(days.len()),
        buses: Vec::new(),
        queues: vec![VecDeque::new(); graph.stops.len()],
        heap: BinaryHeap::new(),
        seq: 0,
        next_veh: 0,
        owner: HashMap::new(),
        trucks: Vec::new(),
        live: None,
        link_sums: vec![vec![0.0; router::BINS]; nlinks],
        link_counts: vec![vec![0u32; router::BINS]; nlinks],
        boards: BTreeMap::new(),
        outcomes: Vec::new(),
        trips: Vec::new(),
        traj: sim_cfg.trajectories.then(Vec::new),
        car_secs: 0,
        car_dist: 0.0,
        transit_secs: 0,
        boardings_total: 0,
        denied_total: 0,
        events_fired: false,
    };

    for (p, day) in days.iter().enumerate() {
        sim.persons.push(PersonRt {
            person_id: day.person_id,
            node: day.home_node,
            car_node: day.has_vehicle.then_some(day.home_node),
            bike_node: Some(day.home_node),
            disrupted: false,
            finished: day.trips.is_empty(),
            ti: 0,
            steps: Vec::new(),
            si: 0,
            depart: 0,
            mode: Mode::Walk,
            origin: day.home_node,
            dest: day.home_node,
            pred_total: 0,
            pred_gc: 0,
            ivt: 0,
            wait: 0,
            walk: 0,
            dist: 0.0,
            rerouted: false,
            switched: false,
            reroutes: 0,
            transit_retry: false,
            seg_start: 0,
            seg_trig: 0,
            seg_pred: VecDeque::new(),
            seg_pred_done: 0,
            seg_dest: 0,
            wait_from: 0,
            stop_stamp: 0,
            at_stop: None,
        });
        if let Some(first) = day.trips.first() {
            sim.push_ev(first.departure, Ev::Start(p));
        }
    }

    for (pi, pattern) in graph.patterns.iter().enumerate() {
        let stops = graph.idx.pattern_stops[pi].clone();
        let roadway = graph.idx.bus_paths[pi].is_some();
        for (ti, trip) in pattern.trips.iter().enumerate() {
            if stops.len() < 2 || trip.arr.is_empty() {
                continue;
            }
            let vi = sim.buses.len();
            sim.buses.push(TransitRt {
                veh: TransitVehicle::new(pi, ti, pattern.seats, pattern.crush),
                stops: stops.clone(),
                arr: trip.arr.clone(),
                dep: trip.dep.clone(),
                roadway,
                retired: false,
            });
            sim.push_ev(trip.arr[0] as u64, Ev::TransitArrive(vi));
        }
    }

    // Background trucks load the roadway without entering any statistic.
    if sim_cfg.background_trucks > 0 && !graph.zones().is_empty() {
        let zones = graph.zones();
        let hist_prep = PreparedProfile::new(graph, historical, router_cfg);
        for k in 0..sim_cfg.background_trucks {
            use rand::Rng;
            let mut rng = demand::substream(seed, k as u64, "background-truck");
            let o = zones[rng.gen_range(0..zones.len())];
            let d = zones[rng.gen_range(0..zones.len())];
            if o == d {
                continue;
            }
            let dep = rng.gen_range(0..DAY_S);
            let (Ok(on), Ok(dn)) = (graph.centroid_node(o), graph.centroid_node(d)) else {
                continue;
            };
            if let Some(plan) = router::shortest_path_truck(graph, &hist_prep, on, dn, dep) {
                let (links, _) = drive_tail(graph, &plan);
                if !links.is_empty() {
                    let idx = sim.trucks.len();
                    sim.trucks.push(links);
                    sim.push_ev(dep, Ev::Truck(idx));
                }
            }
        }
    }

    // Main loop: events for second t, then one roadway second.
    let mut t: u64 = match sim.heap.peek() {
        Some(&Reverse((t0, ..))) => t0,
        None => 0,
    };
    let mut stall = 0u32;
    while t <= HORIZON_S {
        sim.events_fired = false;
        while let Some(&Reverse((te, ..))) = sim.heap.peek() {
            if te > t {
                break;
            }
            let Reverse((_, _, _, ev)) = sim.heap.pop().unwrap();
            sim.events_fired = true;
            sim.dispatch(ev, t);
        }
        if sim.traffic.on_network() + sim.traffic.pending() > 0 {
            sim.traffic.step_second(t, substeps);
            let stamp = t + 1;
            sim.process_exits(stamp);
            sim.process_done(stamp);
            if sim.traffic.moved || sim.events_fired {
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    return Err(Error::Deadlock(format!(
                        "no roadway progress for {STALL_LIMIT} s at t={t}: {}",
                        sim.traffic.congestion_dump(5)
                    )));
                }
            }
            t += 1;
        } else {
            stall = 0;
            match sim.heap.peek() {
                Some(&Reverse((te, ..))) => t = te,
                None => break,
            }
        }
    }

    Ok(sim.finalize())
}

// ---------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------

pub fn write_outcomes(path: &Path, config_hash: &str, outcomes: &[ActivityOutcome]) -> Result<()> {
    io::write_csv(path, config_hash, outcomes)
}

#[derive(Serialize)]
struct LinkTimeRow {
    link: u64,
    bin: usize,
    mean_time_s: f64,
}

/// Mean experienced car time per link × bin; bins without observations are
/// omitted.
pub fn write_linktimes(
    path: &Path,
    config_hash: &str,
    graph: &MultimodalGraph,
    sums: &[Vec<f64>],
    counts: &[Vec<u32>],
) -> Result<()> {
    let mut rows = Vec::new();
    for (l, link) in graph.links.iter().enumerate() {
        for b in 0..router::BINS {
            if counts[l][b] > 0 {
                rows.push(LinkTimeRow {
                    link: link.id,
                    bin: b,
                    mean_time_s: sums[l][b] / counts[l][b] as f64,
                });
            }
        }
    }
    io::write_csv(path, config_hash, &rows)
}

pub fn write_boardings(path: &Path, config_hash: &str, rows: &[BoardingRecord]) -> Result<()> {
    io::write_csv(path, config_hash, rows)
}

/// JSON-lines trajectory log; the first line is a metadata object.
pub fn write_trajectories(path: &Path, config_hash: &str, rows: &[TrajEvent]) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::json!({ "config_hash": config_hash }))?;
    for row in rows {
        writeln!(f, "{}", serde_json::to_string(row)?)?;
    }
    Ok(())
}
