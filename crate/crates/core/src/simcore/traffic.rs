//! Mesoscopic roadway dynamics: Newell car-following on each link treated
//! as a single lane-group, advanced with a two-phase propose/commit step.
//!
//! Each vehicle's speed comes from the triangular speed-spacing relation
//! (`network::link_speed`) evaluated against its leader `lanes` positions
//! ahead in the link ordering, which makes jam storage and discharge rate
//! scale with the lane count without tracking individual lanes. Front
//! vehicles are governed by the downstream boundary instead: free flow when
//! the next link has vacancy, otherwise they queue at the link end. The
//! scheme is stable for dt <= jam_spacing / wave_speed.
//!
//! Link transfers discard the within-step overshoot, so an uncongested
//! traversal takes exactly ceil(length / speed) whole steps. At dt = 1 this
//! reproduces the router's integer per-link free-flow costs, which is what
//! lets an uncongested day settle at a zero routing gap.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;

use crate::config::ClassParams;
use crate::network::{link_speed, MultimodalGraph};
use crate::types::VehicleClass;

/// Position slack for float dust when comparing against link length.
const POS_EPS: f64 = 1e-6;

/// Active links are proposed in parallel above this count.
const PAR_THRESHOLD: usize = 128;

#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: u64,
    pub class: VehicleClass,
    /// Current link index; meaningless while the vehicle is still queued
    /// for injection.
    pub link: usize,
    /// Meters from the current link's upstream end.
    pub pos_m: f64,
    pub speed_mps: f64,
    pub occupants: u32,
    /// Vehicle constraining this one (the one `lanes` positions ahead in
    /// the link ordering), refreshed every step.
    pub leader: Option<u64>,
    /// Full link-index route; `at` points at the current link.
    pub route: Vec<usize>,
    pub at: usize,
    /// Second at which the vehicle entered the current link.
    pub entered_at: u64,
    /// Second at which injection was requested.
    pub injected_at: u64,
    /// Meters of completed links.
    pub dist_m: f64,
}

impl VehicleState {
    pub fn new(id: u64, class: VehicleClass, occupants: u32, route: Vec<usize>, now: u64) -> Self {
        assert!(!route.is_empty(), "vehicle route must have at least one link");
        VehicleState {
            id,
            class,
            link: route[0],
            pos_m: 0.0,
            speed_mps: 0.0,
            occupants,
            leader: None,
            route,
            at: 0,
            entered_at: now,
            injected_at: now,
            dist_m: 0.0,
        }
    }
}

/// One completed link traversal.
#[derive(Debug, Clone, Copy)]
pub struct LinkExit {
    pub veh: u64,
    pub link: usize,
    pub entered_at: u64,
    pub exited_at: u64,
}

#[derive(Debug, Default)]
struct LinkRt {
    /// Vehicle ids ordered front (largest position) to back.
    veh: VecDeque<u64>,
    /// FIFO queue of vehicles waiting to start their route on this link.
    pending: VecDeque<u64>,
    entered: u64,
    exited: u64,
}

/// Per-vehicle move proposal for one step, computed from a frozen snapshot.
#[derive(Debug, Clone, Copy)]
struct Proposal {
    new_pos: f64,
    leader: Option<u64>,
}

pub struct TrafficSim<'a> {
    graph: &'a MultimodalGraph,
    params: &'a ClassParams,
    pub vehicles: HashMap<u64, VehicleState>,
    links: Vec<LinkRt>,
    active: BTreeSet<usize>,
    /// Link traversals completed during the last `step_second`.
    pub exits: Vec<LinkExit>,
    /// Vehicles that finished their route during the last `step_second`.
    pub done: Vec<u64>,
    /// Whether anything moved, entered, or exited during the last step.
    pub moved: bool,
}

impl<'a> TrafficSim<'a> {
    pub fn new(graph: &'a MultimodalGraph) -> Self {
        TrafficSim {
            graph,
            params: &graph.class_params,
            vehicles: HashMap::new(),
            links: (0..graph.links.len()).map(|_| LinkRt::default()).collect(),
            active: BTreeSet::new(),
            exits: Vec::new(),
            done: Vec::new(),
            moved: false,
        }
    }

    /// Queues a vehicle for injection at the start of its route. It enters
    /// the first link as soon as the back of that link has room.
    pub fn inject(&mut self, veh: VehicleState) {
        let first = veh.route[0];
        self.links[first].pending.push_back(veh.id);
        self.vehicles.insert(veh.id, veh);
        self.active.insert(first);
    }

    /// Places a vehicle directly on its current link, behind everyone
    /// already there. Test scaffolding for hand-built initial conditions.
    #[cfg(test)]
    pub fn place(&mut self, veh: VehicleState) {
        let link = veh.link;
        if let Some(&back) = self.links[link].veh.back() {
            assert!(self.vehicles[&back].pos_m >= veh.pos_m);
        }
        self.links[link].veh.push_back(veh.id);
        self.links[link].entered += 1;
        self.active.insert(link);
        self.vehicles.insert(veh.id, veh);
    }

    pub fn on_network(&self) -> usize {
        self.links.iter().map(|l| l.veh.len()).sum()
    }

    pub fn pending(&self) -> usize {
        self.links.iter().map(|l| l.pending.len()).sum()
    }

    pub fn idle(&self) -> bool {
        self.active.is_empty()
    }

    /// Per-link vehicle conservation (entered = exited + present); exact at
    /// every step by construction, checked in tests and debug builds.
    pub fn conserved(&self) -> bool {
        self.links
            .iter()
            .all(|l| l.entered == l.exited + l.veh.len() as u64)
    }

    /// Occupancy of the most loaded links, for deadlock diagnostics.
    pub fn congestion_dump(&self, top: usize) -> String {
        let mut occ: Vec<(usize, usize)> = self
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.veh.is_empty() || !l.pending.is_empty())
            .map(|(i, l)| (l.veh.len() + l.pending.len(), i))
            .collect();
        occ.sort_unstable_by(|a, b| b.cmp(a));
        occ.iter()
            .take(top)
            .map(|&(n, i)| format!("link {} holds {n}", self.graph.links[i].id))
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn can_enter(&self, link: usize, class: VehicleClass) -> bool {
        let rt = &self.links[link];
        let lanes = self.graph.links[link].lanes.max(1) as usize;
        if rt.veh.len() < lanes {
            return true;
        }
        let gate = rt.veh[rt.veh.len() - lanes];
        let sj = self.graph.links[link].jam_spacing_m * self.params.jam_factor(class);
        self.vehicles[&gate].pos_m >= sj
    }

    fn propose_link(&self, li: usize, dt: f64) -> Vec<Proposal> {
        let link = &self.graph.links[li];
        let lanes = link.lanes.max(1) as usize;
        let snap: Vec<(u64, f64, VehicleClass)> = self.links[li]
            .veh
            .iter()
            .map(|id| {
                let v = &self.vehicles[id];
                (v.id, v.pos_m, v.class)
            })
            .collect();
        snap.iter()
            .enumerate()
            .map(|(i, &(_, pos, class))| {
                let (spacing, leader) = if i >= lanes {
                    (snap[i - lanes].1 - pos, Some(snap[i - lanes].0))
                } else {
                    (f64::INFINITY, None)
                };
                let speed = link_speed(link, spacing, class, self.params);
                Proposal {
                    new_pos: pos + speed * dt,
                    leader,
                }
            })
            .collect()
    }

    /// One propose/commit step of `dt` seconds. All traversals completed
    /// during the step are stamped with `stamp` as their exit second.
    fn step(&mut self, dt: f64, stamp: u64) {
        let order: Vec<usize> = self.active.iter().copied().collect();
        // Phase 1: per-link proposals from a frozen snapshot. Links are
        // independent here, so the parallel and serial paths are identical.
        let proposals: Vec<Vec<Proposal>> = if order.len() >= PAR_THRESHOLD {
            order.par_iter().map(|&li| self.propose_link(li, dt)).collect()
        } else {
            order.iter().map(|&li| self.propose_link(li, dt)).collect()
        };

        // Phase 2: commit in link order, front vehicle first. Transfers are
        // accepted against committed state, so a slot freed later in the
        // same step is seen next step; that one-step lag keeps the commit a
        // single deterministic pass.
        for (oi, &li) in order.iter().enumerate() {
            let prop = &proposals[oi];
            let length = self.graph.links[li].length_m;
            let mut taken = 0usize;
            let mut front_blocked = false;
            // Front prefix that reached the end: leave the network, hop to
            // the next route link, or queue at the end when blocked.
            while taken < prop.len() && prop[taken].new_pos >= length - POS_EPS {
                let id = self.links[li].veh[0];
                let (next, class) = {
                    let v = &self.vehicles[&id];
                    (v.route.get(v.at + 1).copied(), v.class)
                };
                let accepted = match next {
                    None => true,
                    Some(nl) => self.can_enter(nl, class),
                };
                if !accepted {
                    let v = self.vehicles.get_mut(&id).unwrap();
                    if v.pos_m < length {
                        self.moved = true;
                    }
                    v.pos_m = length;
                    v.speed_mps = 0.0;
                    v.leader = None;
                    front_blocked = true;
                    break;
                }
                self.links[li].veh.pop_front();
                self.links[li].exited += 1;
                taken += 1;
                self.moved = true;
                let v = self.vehicles.get_mut(&id).unwrap();
                v.dist_m += length;
                self.exits.push(LinkExit {
                    veh: id,
                    link: li,
                    entered_at: v.entered_at,
                    exited_at: stamp,
                });
                match next {
                    None => {
                        self.done.push(id);
                    }
                    Some(nl) => {
                        v.at += 1;
                        v.link = nl;
                        v.pos_m = 0.0;
                        v.entered_at = stamp;
                        v.leader = None;
                        self.links[nl].veh.push_back(id);
                        self.links[nl].entered += 1;
                        self.active.insert(nl);
                    }
                }
            }
            // Remaining snapshot vehicles advance, clamped so the deque
            // order (and with it the no-overtaking invariant) is preserved.
            // Vehicles that hopped onto this link during commit sit past
            // the snapshot and stay at position 0 until next step.
            let mut ahead = if front_blocked { Some(length) } else { None };
            let start = if front_blocked { 1 } else { 0 };
            for j in start..prop.len() - taken {
                let id = self.links[li].veh[j];
                let p = prop[taken + j];
                let v = self.vehicles.get_mut(&id).unwrap();
                let mut pos = p.new_pos.min(length);
                if let Some(cap) = ahead {
                    pos = pos.min(cap);
                }
                if pos > v.pos_m + POS_EPS {
                    self.moved = true;
                    v.speed_mps = (pos - v.pos_m) / dt;
                } else {
                    pos = v.pos_m;
                    v.speed_mps = 0.0;
                }
                v.pos_m = pos;
                v.leader = p.leader;
                ahead = Some(pos);
            }
            debug_assert!(self.links[li]
                .veh
                .iter()
                .zip(self.links[li].veh.iter().skip(1))
                .all(|(a, b)| self.vehicles[a].pos_m >= self.vehicles[b].pos_m));
        }
    }

    /// Admits queued vehicles whose first link has room, stamping them as
    /// entered at `now`. FIFO per link; a blocked head blocks the queue.
    fn admit(&mut self, now: u64) {
        let queued: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&li| !self.links[li].pending.is_empty())
            .collect();
        for li in queued {
            while let Some(&id) = self.links[li].pending.front() {
                let class = self.vehicles[&id].class;
                if !self.can_enter(li, class) {
                    break;
                }
                self.links[li].pending.pop_front();
                self.links[li].veh.push_back(id);
                self.links[li].entered += 1;
                self.moved = true;
                let v = self.vehicles.get_mut(&id).unwrap();
                v.pos_m = 0.0;
                v.entered_at = now;
            }
        }
    }

    /// Advances the roadway from second `now` to `now + 1` using
    /// `substeps` equal propose/commit steps. Drains of `exits` and `done`
    /// are the caller's job; both are cleared here first.
    pub fn step_second(&mut self, now: u64, substeps: u32) {
        self.exits.clear();
        self.done.clear();
        self.moved = false;
        self.admit(now);
        let dt = 1.0 / substeps as f64;
        for _ in 0..substeps {
            self.step(dt, now + 1);
        }
        for id in &self.done {
            self.vehicles.remove(id);
        }
        let quiet: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&li| self.links[li].veh.is_empty() && self.links[li].pending.is_empty())
            .collect();
        for li in quiet {
            self.active.remove(&li);
        }
        debug_assert!(self.conserved());
    }
}
