//! Day-to-day assignment loop. Each iteration routes every trip on the
//! historical travel-time profile, simulates the day, folds the
//! experienced times back into the history, and measures how far trips
//! are from their best responses. The loop stops when routed and
//! experienced costs agree within a relative-gap target.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EquilibriumConfig, ModeChoiceConfig, RouterConfig, SimConfig};
use crate::demand::choice::{mode_probs, LevelOfService};
use crate::demand::{substream, Activity, Household, Person};
use crate::error::Result;
use crate::io::write_csv;
use crate::network::MultimodalGraph;
use crate::router::{
    bin_of, mode_levels_of_service, profile_from_records, PreparedProfile, TravelTimeProfile,
};
use crate::simcore::{route_mode, run_day, DayResult, PersonDay, PlannedTrip, TripRecord};
use crate::types::Mode;

/// One line of the convergence trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRow {
    pub k: u32,
    pub gap: f64,
    pub vehicle_hours: f64,
    pub mean_speed_mps: f64,
}

/// Where the loop ended up: the profile pair of the last executed
/// iteration plus the whole trace.
#[derive(Debug)]
pub struct IterationState {
    pub k: u32,
    pub historical: TravelTimeProfile,
    pub experienced: TravelTimeProfile,
    pub gap: f64,
    pub converged: bool,
    pub rows: Vec<IterationRow>,
}

/// Final iteration state together with that iteration's day outputs and
/// the plans that produced them.
#[derive(Debug)]
pub struct EquilibriumOutcome {
    pub state: IterationState,
    pub day: DayResult,
    pub days: Vec<PersonDay>,
}

/// Convex combination per link-bin: h' = (1 - alpha)·h + alpha·e,
/// floored at free flow.
pub fn mix_times(
    graph: &MultimodalGraph,
    historical: &TravelTimeProfile,
    experienced: &TravelTimeProfile,
    alpha: f64,
) -> TravelTimeProfile {
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
    let times = historical
        .times
        .iter()
        .zip(&experienced.times)
        .map(|(hr, er)| {
            hr.iter()
                .zip(er)
                .map(|(&h, &e)| (1.0 - alpha) * h + alpha * e)
                .collect()
        })
        .collect();
    let mut mixed = TravelTimeProfile { times };
    mixed.floor_free_flow(graph);
    mixed
}

/// Relative gap of a finished day: sum of per-trip excess cost over the
/// best response, re-routing each completed trip in its final mode under
/// the experienced times, divided by the total best-response cost. A
/// trip whose own experienced cost beats the re-route counts as on its
/// best path, so the gap is never negative.
pub fn relative_gap(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    cfg: &RouterConfig,
    trips: &[TripRecord],
) -> f64 {
    let parts: Vec<(f64, f64)> = trips
        .par_iter()
        .map(|t| {
            if t.arrive_s.is_none() {
                return (0.0, 0.0);
            }
            let routed = route_mode(graph, prep, cfg, t.origin_node, t.dest_node, t.depart_s, t.mode)
                .map(|pl| pl.generalized_cost)
                .unwrap_or(t.experienced_gc);
            let best = routed.min(t.experienced_gc);
            ((t.experienced_gc - best) as f64, best as f64)
        })
        .collect();
    let excess: f64 = parts.iter().map(|p| p.0).sum();
    let best: f64 = parts.iter().map(|p| p.1).sum();
    if best > 0.0 {
        excess / best
    } else {
        0.0
    }
}

/// Activities grouped per person in chain order.
pub fn activities_by_person(activities: &[Activity]) -> BTreeMap<u64, Vec<Activity>> {
    let mut map: BTreeMap<u64, Vec<Activity>> = BTreeMap::new();
    for a in activities {
        map.entry(a.person_id).or_default().push(a.clone());
    }
    for acts in map.values_mut() {
        acts.sort_by_key(|a| (a.planned_start, a.id));
    }
    map
}

/// Zone-pair level-of-service cache, keyed by departure hour. Values are
/// computed at the hour start so they depend only on the key, which keeps
/// results independent of how work is split across threads.
struct LosCache<'a> {
    graph: &'a MultimodalGraph,
    prep: &'a PreparedProfile,
    cfg: &'a RouterConfig,
    map: Mutex<HashMap<(u32, u32, u64), Arc<BTreeMap<Mode, LevelOfService>>>>,
}

impl<'a> LosCache<'a> {
    fn new(graph: &'a MultimodalGraph, prep: &'a PreparedProfile, cfg: &'a RouterConfig) -> Self {
        LosCache {
            graph,
            prep,
            cfg,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn get(&self, o: u32, d: u32, t: u64) -> Result<Arc<BTreeMap<Mode, LevelOfService>>> {
        let hour = (t / 3600).min(47);
        let key = (o, d, hour);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let los = mode_levels_of_service(self.graph, self.prep, self.cfg, o, d, hour * 3600)?;
        let arc = Arc::new(los);
        let mut map = self.map.lock().unwrap();
        Ok(map.entry(key).or_insert(arc).clone())
    }
}

fn pick_by_cdf(pairs: &[(Mode, f64)], u: f64) -> Option<Mode> {
    let total: f64 = pairs.iter().map(|(_, p)| p).sum();
    if total <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    for (m, p) in pairs {
        acc += p / total;
        if u < acc {
            return Some(*m);
        }
    }
    pairs.last().map(|(m, _)| *m)
}

/// Builds every person's planned day under the given profile: modes are
/// re-chosen from current levels of service with the person's fixed
/// uniform draws, departures target the planned start minus the predicted
/// travel time, and each trip is pre-routed on the historical profile.
#[allow(clippy::too_many_arguments)]
pub fn build_person_days(
    graph: &MultimodalGraph,
    prep: &PreparedProfile,
    router_cfg: &RouterConfig,
    mode_cfg: &ModeChoiceConfig,
    households: &[Household],
    persons: &[Person],
    acts_by_person: &BTreeMap<u64, Vec<Activity>>,
    seed: u64,
) -> Result<Vec<PersonDay>> {
    let hh_by_id: HashMap<u64, &Household> = households.iter().map(|h| (h.id, h)).collect();
    let cache = LosCache::new(graph, prep, router_cfg);
    let empty: Vec<Activity> = Vec::new();

    persons
        .par_iter()
        .map(|p| {
            let hh = hh_by_id.get(&p.household_id).copied();
            let home_zone = hh.map(|h| h.home_zone).unwrap_or(0);
            let home_node = graph.centroid_node(home_zone)?;
            let has_vehicle = hh.map(|h| h.vehicles > 0).unwrap_or(false);
            let may_drive = has_vehicle && p.age >= 18;
            let acts = acts_by_person.get(&p.id).unwrap_or(&empty);
            let mut rng = substream(seed, p.id, "mode-choice");

            let mut trips = Vec::with_capacity(acts.len() + 1);
            let mut at_zone = home_zone;
            let mut at_node = home_node;
            let mut free_at = 0u64;
            let mut last_mode = Mode::Walk;
            for act in acts {
                let u: f64 = rng.gen();
                let ps = act.planned_start as u64;
                let t_ref = free_at.max(ps.saturating_sub(1800));
                let los = cache.get(at_zone, act.zone, t_ref)?;
                let offers: Vec<(Mode, LevelOfService)> = Mode::ALL
                    .iter()
                    .map(|&m| {
                        let mut l = los.get(&m).cloned().unwrap_or_default();
                        if m.uses_household_vehicle() && !may_drive {
                            l.available = false;
                        }
                        (m, l)
                    })
                    .collect();
                let pairs = mode_probs(&offers, mode_cfg);
                let mode = pick_by_cdf(&pairs, u).unwrap_or(Mode::Walk);
                let predicted = offers
                    .iter()
                    .find(|(m, _)| *m == mode)
                    .map(|(_, l)| (l.in_vehicle_s + l.wait_s + l.walk_s).ceil() as u64)
                    .unwrap_or(0);
                let departure = free_at.max(ps.saturating_sub(predicted));
                let dest_node = graph.centroid_node(act.zone)?;
                let plan = route_mode(graph, prep, router_cfg, at_node, dest_node, departure, mode);
                let arrival = plan
                    .as_ref()
                    .map(|pl| pl.arrival())
                    .unwrap_or(departure + predicted);
                free_at = arrival.max(ps) + act.planned_duration as u64;
                at_zone = act.zone;
                at_node = dest_node;
                last_mode = mode;
                trips.push(PlannedTrip {
                    activity: Some(act.clone()),
                    mode,
                    plan,
                    departure,
                });
            }
            if !trips.is_empty() {
                // Close the chain back home; routed on the spot during the day.
                trips.push(PlannedTrip {
                    activity: None,
                    mode: last_mode,
                    plan: None,
                    departure: free_at,
                });
            }
            Ok(PersonDay {
                person_id: p.id,
                home_node,
                has_vehicle,
                trips,
            })
        })
        .collect()
}

/// Runs the route → simulate → mix loop until the relative gap reaches
/// the target or the iteration budget is spent. Activity patterns stay
/// fixed across iterations; modes are re-chosen each iteration from the
/// same per-person draws, so they only move when the level of service
/// does. A gap rising three iterations in a row halves the step size.
#[allow(clippy::too_many_arguments)]
pub fn run_to_convergence(
    graph: &MultimodalGraph,
    households: &[Household],
    persons: &[Person],
    activities: &[Activity],
    router_cfg: &RouterConfig,
    sim_cfg: &SimConfig,
    mode_cfg: &ModeChoiceConfig,
    eq_cfg: &EquilibriumConfig,
    seed: u64,
) -> Result<EquilibriumOutcome> {
    let acts_by_person = activities_by_person(activities);
    let mut historical = TravelTimeProfile::free_flow(graph);
    let mut rows: Vec<IterationRow> = Vec::new();
    let mut alpha_mult = 1.0f64;
    let mut rises = 0u32;
    let mut prev_gap = f64::INFINITY;
    let mut last: Option<(TravelTimeProfile, f64, DayResult, Vec<PersonDay>, u32)> = None;
    let mut converged = false;

    for k in 1..=eq_cfg.max_iters {
        let prep = PreparedProfile::new(graph, &historical, router_cfg);
        let days = build_person_days(
            graph,
            &prep,
            router_cfg,
            mode_cfg,
            households,
            persons,
            &acts_by_person,
            seed,
        )?;
        let day = run_day(graph, &historical, &days, router_cfg, sim_cfg, seed)?;
        let experienced = profile_from_records(graph, &historical, &day.link_sums, &day.link_counts);
        let prep_exp = PreparedProfile::new(graph, &experienced, router_cfg);
        let gap = relative_gap(graph, &prep_exp, router_cfg, &day.trips);
        rows.push(IterationRow {
            k,
            gap,
            vehicle_hours: day.kpis.vehicle_hours,
            mean_speed_mps: day.kpis.mean_speed_mps,
        });
        log::info!(
            "iteration {k}: gap {gap:.6}, vehicle-hours {:.1}, mean speed {:.2} m/s",
            day.kpis.vehicle_hours,
            day.kpis.mean_speed_mps
        );
        last = Some((experienced, gap, day, days, k));
        if gap <= eq_cfg.gap_target {
            converged = true;
            break;
        }
        if gap > prev_gap {
            rises += 1;
            if rises >= 3 {
                alpha_mult *= 0.5;
                rises = 0;
                log::warn!("gap rose three iterations in a row; halving step size to x{alpha_mult}");
            }
        } else {
            rises = 0;
        }
        prev_gap = gap;
        let experienced = &last.as_ref().unwrap().0;
        let alpha = (eq_cfg.alpha.alpha(k) * alpha_mult).clamp(f64::MIN_POSITIVE, 1.0);
        historical = mix_times(graph, &historical, experienced, alpha);
    }

    let (experienced, gap, day, days, k) = last.expect("max_iters >= 1 guarantees one iteration");
    Ok(EquilibriumOutcome {
        state: IterationState {
            k,
            historical,
            experienced,
            gap,
            converged,
            rows,
        },
        day,
        days,
    })
}

/// `iterations.csv`: one row per outer iteration.
pub fn write_iterations(path: &Path, config_hash: &str, rows: &[IterationRow]) -> Result<()> {
    write_csv(path, config_hash, rows)
}
