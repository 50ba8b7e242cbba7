//! Synthetic demand: households and persons drawn from configured
//! marginals, per-person daily activity schedules, destination assignment,
//! and planning-time conflict resolution.
//!
//! Every random decision draws from a substream keyed by (seed, entity id,
//! purpose), so generation is reproducible and independent of worker count
//! or iteration order.

pub mod choice;

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{default_timing, ActivityTiming, DemandConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::types::ActivityType;

/// Independent RNG substream for one entity and purpose.
pub fn substream(seed: u64, entity: u64, purpose: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(entity.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: u64,
    pub home_zone: u32,
    pub income: f64,
    /// 1..=5, 1 = lowest. Assigned over the realized income sample.
    pub income_quintile: u8,
    pub vehicles: u32,
    pub members: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: u64,
    pub household_id: u64,
    pub female: bool,
    pub age: u32,
    pub worker: bool,
    pub student: bool,
    pub work_at_home: bool,
    /// Fixed workplace/school zone for mandatory activities.
    pub anchor_zone: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: u64,
    pub person_id: u64,
    pub activity_type: ActivityType,
    /// Seconds from midnight.
    pub planned_start: u32,
    pub planned_duration: u32,
    pub min_duration: u32,
    pub latest_end: u32,
    pub zone: u32,
    pub mandatory: bool,
    pub is_care: bool,
    pub joint: bool,
}

/// Zone-to-zone expected travel times in minutes (row = origin).
#[derive(Debug, Clone, Default)]
pub struct Skims {
    pub zones: Vec<u32>,
    pub zone_index: HashMap<u32, usize>,
    pub tt_min: Vec<Vec<f64>>,
}

impl Skims {
    pub fn new(zones: Vec<u32>, tt_min: Vec<Vec<f64>>) -> Skims {
        let zone_index = zones.iter().enumerate().map(|(i, &z)| (z, i)).collect();
        Skims {
            zones,
            zone_index,
            tt_min,
        }
    }

    pub fn row(&self, origin: u32) -> Option<&[f64]> {
        self.zone_index.get(&origin).map(|&i| self.tt_min[i].as_slice())
    }
}

fn sample_weighted<R: Rng, K: Copy>(pairs: &[(K, f64)], rng: &mut R) -> K {
    let total: f64 = pairs.iter().map(|(_, w)| *w).sum();
    let u = rng.gen_range(0.0..total);
    let mut acc = 0.0;
    for &(k, w) in pairs {
        acc += w;
        if u < acc {
            return k;
        }
    }
    pairs.last().expect("non-empty weights").0
}

fn zone_weight_pairs(
    weights: &std::collections::BTreeMap<u32, f64>,
    zones: &[u32],
    label: &str,
) -> Result<Vec<(u32, f64)>> {
    if weights.is_empty() {
        return Ok(zones.iter().map(|&z| (z, 1.0)).collect());
    }
    let known: std::collections::HashSet<u32> = zones.iter().copied().collect();
    let mut pairs = Vec::with_capacity(weights.len());
    for (&z, &w) in weights {
        if !known.contains(&z) {
            return Err(Error::Config(format!("{label}: zone {z} not in network")));
        }
        if w < 0.0 {
            return Err(Error::Config(format!("{label}: negative weight for zone {z}")));
        }
        if w > 0.0 {
            pairs.push((z, w));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Config(format!("{label}: all weights zero")));
    }
    Ok(pairs)
}

/// Expands a distribution to exactly `n` labels using largest-remainder
/// rounding, then shuffles them with the given stream. Realized marginals
/// therefore match targets within 1/n for every seed.
fn quota_labels<K: Copy>(pairs: &[(K, f64)], n: usize, mut rng: ChaCha8Rng) -> Vec<K> {
    use rand::seq::SliceRandom;
    let total: f64 = pairs.iter().map(|(_, w)| *w).sum();
    let mut counts: Vec<usize> = Vec::with_capacity(pairs.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
    let mut assigned = 0usize;
    for (i, &(_, w)) in pairs.iter().enumerate() {
        let exact = n as f64 * w / total;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        remainders.push((i, exact - floor as f64));
    }
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(n - assigned) {
        counts[i] += 1;
    }
    let mut labels = Vec::with_capacity(n);
    for (i, &(k, _)) in pairs.iter().enumerate() {
        labels.extend(std::iter::repeat(k).take(counts[i]));
    }
    labels.shuffle(&mut rng);
    labels
}

fn quota_flags(n: usize, rate: f64, rng: ChaCha8Rng) -> Vec<bool> {
    quota_labels(&[(true, rate), (false, 1.0 - rate)], n, rng)
}

#[derive(Clone, Copy, PartialEq)]
enum AgeClass {
    Child,
    Adult,
    Senior,
}

/// Draws the synthetic population. Controlled marginals (ownership,
/// household size, gender, age class, worker/student/work-at-home rates)
/// are met by exact quota assignment; zones and incomes are sampled.
/// Deterministic for a fixed seed and independent of worker count.
pub fn synthesize_population(
    cfg: &DemandConfig,
    zones: &[u32],
    seed: u64,
) -> Result<(Vec<Household>, Vec<Person>)> {
    if zones.is_empty() {
        return Err(Error::Config("network defines no zones".into()));
    }
    if cfg.households == 0 {
        return Err(Error::Config("demand.households must be > 0".into()));
    }
    let home_pairs = zone_weight_pairs(&cfg.zone_weights, zones, "demand.zone_weights")?;
    let work_pairs = if cfg.work_zone_weights.is_empty() {
        home_pairs.clone()
    } else {
        zone_weight_pairs(&cfg.work_zone_weights, zones, "demand.work_zone_weights")?
    };
    let ownership: Vec<(u32, f64)> = cfg
        .vehicle_ownership
        .iter()
        .map(|(&k, &w)| (k, w))
        .collect();
    let sizes: Vec<(u32, f64)> = cfg.household_size.iter().map(|(&k, &w)| (k.max(1), w)).collect();
    if ownership.is_empty() || sizes.is_empty() {
        return Err(Error::Config(
            "demand.vehicle_ownership and demand.household_size must be non-empty".into(),
        ));
    }
    let income_dist = LogNormal::new(cfg.income_median.ln(), cfg.income_sigma.max(1e-9))
        .map_err(|e| Error::Config(format!("income distribution: {e}")))?;

    let n = cfg.households as usize;
    let hh_vehicles = quota_labels(&ownership, n, substream(seed, 0, "quota-ownership"));
    let hh_sizes = quota_labels(&sizes, n, substream(seed, 0, "quota-size"));

    // Global person index layout.
    let mut offsets = Vec::with_capacity(n);
    let mut total_persons = 0usize;
    for &s in &hh_sizes {
        offsets.push(total_persons);
        total_persons += s as usize;
    }

    let female = quota_flags(total_persons, cfg.female_rate, substream(seed, 0, "quota-female"));
    let age_class = quota_labels(
        &[
            (AgeClass::Child, cfg.child_share),
            (AgeClass::Senior, cfg.senior_share),
            (AgeClass::Adult, 1.0 - cfg.child_share - cfg.senior_share),
        ],
        total_persons,
        substream(seed, 0, "quota-age"),
    );
    let adults: Vec<usize> = (0..total_persons)
        .filter(|&i| age_class[i] == AgeClass::Adult)
        .collect();
    let children: Vec<usize> = (0..total_persons)
        .filter(|&i| age_class[i] == AgeClass::Child)
        .collect();
    let worker_flags = quota_flags(adults.len(), cfg.worker_rate, substream(seed, 0, "quota-worker"));
    let student_flags =
        quota_flags(children.len(), cfg.student_rate, substream(seed, 0, "quota-student"));
    let mut worker = vec![false; total_persons];
    for (flag, &i) in worker_flags.iter().zip(&adults) {
        worker[i] = *flag;
    }
    let mut student = vec![false; total_persons];
    for (flag, &i) in student_flags.iter().zip(&children) {
        student[i] = *flag;
    }
    let workers: Vec<usize> = (0..total_persons).filter(|&i| worker[i]).collect();
    let wah_flags = quota_flags(
        workers.len(),
        cfg.work_from_home_share,
        substream(seed, 0, "quota-wah"),
    );
    let mut work_at_home = vec![false; total_persons];
    for (flag, &i) in wah_flags.iter().zip(&workers) {
        work_at_home[i] = *flag;
    }

    // Household cores: zone and income, sampled per household stream.
    let cores: Vec<(u32, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|hid| {
            let mut rng = substream(seed, hid, "household");
            let home_zone = sample_weighted(&home_pairs, &mut rng);
            let income = income_dist.sample(&mut rng);
            (home_zone, income)
        })
        .collect();

    // Person detail: exact age and anchor zone, per person stream.
    let persons: Vec<Person> = (0..total_persons as u64)
        .into_par_iter()
        .map(|pid| {
            let i = pid as usize;
            let mut rng = substream(seed, pid, "person");
            let age = match age_class[i] {
                AgeClass::Child => rng.gen_range(5..18),
                AgeClass::Adult => rng.gen_range(18..65),
                AgeClass::Senior => rng.gen_range(65..85),
            };
            let anchor_zone = if (worker[i] && !work_at_home[i]) || student[i] {
                Some(sample_weighted(&work_pairs, &mut rng))
            } else {
                None
            };
            Person {
                id: pid,
                household_id: 0, // filled below
                female: female[i],
                age,
                worker: worker[i],
                student: student[i],
                work_at_home: work_at_home[i],
                anchor_zone,
            }
        })
        .collect();

    // Income quintiles over the realized sample, balanced within ±1.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cores[a].1.total_cmp(&cores[b].1).then(a.cmp(&b)));
    let mut quintile = vec![0u8; n];
    for (rank, &hh) in order.iter().enumerate() {
        quintile[hh] = (rank * 5 / n) as u8 + 1;
    }

    let mut households = Vec::with_capacity(n);
    let mut persons = persons;
    for hid in 0..n {
        let start = offsets[hid];
        let count = hh_sizes[hid] as usize;
        let member_ids: Vec<u64> = (start..start + count).map(|i| i as u64).collect();
        for &m in &member_ids {
            persons[m as usize].household_id = hid as u64;
        }
        households.push(Household {
            id: hid as u64,
            home_zone: cores[hid].0,
            income: cores[hid].1,
            income_quintile: quintile[hid],
            vehicles: hh_vehicles[hid],
            members: member_ids,
        });
    }
    Ok((households, persons))
}

fn timing_for(cfg: &DemandConfig, t: ActivityType) -> ActivityTiming {
    cfg.timing.get(&t).cloned().unwrap_or_else(|| default_timing(t))
}

fn sample_timing<R: Rng>(timing: &ActivityTiming, rng: &mut R) -> (u32, u32, u32, u32) {
    let bins: Vec<(usize, f64)> = timing
        .start_hist
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i, w))
        .collect();
    let bin = if bins.is_empty() {
        16 // fall back to 08:00 if the histogram is degenerate
    } else {
        sample_weighted(&bins, rng)
    };
    let start = bin as u32 * 1800 + rng.gen_range(0..30) * 60;
    let sigma = timing.duration_sigma.max(1e-9);
    let dist = LogNormal::new(timing.duration_median_s.max(60.0).ln(), sigma).unwrap();
    let raw = dist.sample(rng);
    // Durations on a one-minute grid, at least one minute.
    let duration = ((raw / 60.0).round().max(1.0) as u32) * 60;
    let min_duration = ((timing.min_duration_frac * duration as f64 / 60.0).round() as u32) * 60;
    let latest_end = start + duration + timing.latest_slack_s as u32;
    (start, duration.max(60), min_duration.min(duration), latest_end)
}

/// Generates one person's daily activities: mandatory work/school anchored
/// to the person's status, flexible types drawn per-type with Poisson
/// counts. Destinations for flexible activities start at the home zone and
/// are refined by [`assign_destinations`].
pub fn generate_activities(
    person: &Person,
    household: &Household,
    cfg: &DemandConfig,
    seed: u64,
) -> Vec<Activity> {
    let mut rng = substream(seed, person.id, "activity-gen");
    let mut acts = Vec::new();
    let mut seq = 0u64;
    let push = |acts: &mut Vec<Activity>,
                seq: &mut u64,
                rng: &mut ChaCha8Rng,
                t: ActivityType,
                zone: u32,
                joint: bool| {
        let timing = timing_for(cfg, t);
        let (start, dur, min_dur, latest) = sample_timing(&timing, rng);
        let min_dur = if t.is_mandatory() { 0 } else { min_dur };
        acts.push(Activity {
            id: person.id * 1000 + *seq,
            person_id: person.id,
            activity_type: t,
            planned_start: start,
            planned_duration: dur,
            min_duration: min_dur,
            latest_end: latest,
            zone,
            mandatory: t.is_mandatory(),
            is_care: t.is_care(),
            joint,
        });
        *seq += 1;
    };

    if person.worker {
        if person.work_at_home {
            push(&mut acts, &mut seq, &mut rng, ActivityType::WorkAtHome, household.home_zone, false);
        } else {
            let zone = person.anchor_zone.unwrap_or(household.home_zone);
            push(&mut acts, &mut seq, &mut rng, ActivityType::Work, zone, false);
        }
    }
    if person.student {
        let zone = person.anchor_zone.unwrap_or(household.home_zone);
        push(&mut acts, &mut seq, &mut rng, ActivityType::School, zone, false);
    }
    for (&t, &rate) in &cfg.activity_rates {
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).map(|d| d.sample(&mut rng) as u32).unwrap_or(0);
        for _ in 0..count {
            let joint = rng.gen_bool(cfg.joint_rate);
            push(&mut acts, &mut seq, &mut rng, t, household.home_zone, joint);
        }
    }
    acts.sort_by_key(|a| (a.planned_start, a.id));
    acts
}

/// Assigns zones to flexible activities by multinomial logit over travel
/// time and attraction, chaining origins through the day. Mandatory
/// activities keep their anchor zones.
pub fn assign_destinations(
    acts: &mut [Activity],
    household: &Household,
    cfg: &DemandConfig,
    skims: &Skims,
    seed: u64,
) -> Result<()> {
    if acts.is_empty() {
        return Ok(());
    }
    let mut rng = substream(seed, acts[0].person_id, "activity-dest");
    let mut origin = household.home_zone;
    for a in acts.iter_mut() {
        if a.mandatory {
            origin = a.zone;
            continue;
        }
        let row = skims
            .row(origin)
            .ok_or_else(|| Error::Config(format!("skims missing zone {origin}")))?;
        let attraction = attraction_weights(a.activity_type, &skims.zones, cfg);
        a.zone = choice::choose_destination(
            &skims.zones,
            row,
            &attraction,
            cfg.destination_choice.beta_tt_per_min,
            &mut rng,
        )?;
        origin = a.zone;
    }
    Ok(())
}

fn attraction_weights(t: ActivityType, zones: &[u32], cfg: &DemandConfig) -> Vec<f64> {
    if let Some(map) = cfg.destination_choice.attraction_weights.get(&t) {
        return zones.iter().map(|z| map.get(z).copied().unwrap_or(0.0)).collect();
    }
    if !cfg.zone_weights.is_empty() {
        return zones
            .iter()
            .map(|z| cfg.zone_weights.get(z).copied().unwrap_or(0.0))
            .collect();
    }
    vec![1.0; zones.len()]
}

/// Repairs overlaps: mandatory activities (in start order) keep their
/// windows; each flexible activity is then shifted later, shortened to no
/// less than its minimum duration, or dropped — the first remedy that
/// yields a feasible placement wins.
pub fn resolve_conflicts(activities: &[Activity]) -> Vec<Activity> {
    // Placed intervals [start, end), kept sorted by start.
    let mut placed: Vec<(u32, u32, usize)> = Vec::new();
    let mut resolved: Vec<Option<Activity>> = vec![None; activities.len()];

    let mut order: Vec<usize> = (0..activities.len()).collect();
    order.sort_by_key(|&i| {
        let a = &activities[i];
        (!a.mandatory, a.planned_start, a.id)
    });

    for i in order {
        let a = &activities[i];
        let slot = if a.mandatory {
            place(&placed, a.planned_start, a.planned_duration, 0, u32::MAX)
                .or_else(|| place(&placed, a.planned_start, 1, 0, u32::MAX))
        } else {
            place(
                &placed,
                a.planned_start,
                a.planned_duration,
                a.min_duration.max(60),
                a.latest_end,
            )
        };
        if let Some((start, dur)) = slot {
            let pos = placed.partition_point(|&(s, _, _)| s < start);
            placed.insert(pos, (start, start + dur, i));
            let mut out = a.clone();
            out.planned_start = start;
            out.planned_duration = dur;
            resolved[i] = Some(out);
        }
    }

    let mut out: Vec<Activity> = resolved.into_iter().flatten().collect();
    out.sort_by_key(|a| (a.planned_start, a.id));
    out
}

/// Finds the earliest feasible (start, duration) at or after `earliest`:
/// first trying the full duration, then any duration ≥ `min_duration`,
/// always ending by `latest_end`. Returns None when nothing fits.
fn place(
    placed: &[(u32, u32, usize)],
    earliest: u32,
    duration: u32,
    min_duration: u32,
    latest_end: u32,
) -> Option<(u32, u32)> {
    let full = scan(placed, earliest, duration, latest_end).map(|s| (s, duration));
    if full.is_some() {
        return full;
    }
    if min_duration < duration {
        // Earliest start admitting at least the minimum, then take the
        // longest duration that fits there.
        let start = scan(placed, earliest, min_duration.max(1), latest_end)?;
        let gap_end = placed
            .iter()
            .filter(|&&(s, _, _)| s >= start)
            .map(|&(s, _, _)| s)
            .min()
            .unwrap_or(u32::MAX);
        let dur = duration.min(gap_end.saturating_sub(start)).min(latest_end.saturating_sub(start));
        if dur >= min_duration.max(1) {
            return Some((start, dur));
        }
    }
    None
}

/// Earliest start ≥ `earliest` such that [start, start+duration) avoids
/// all placed intervals and start+duration ≤ latest_end.
fn scan(placed: &[(u32, u32, usize)], earliest: u32, duration: u32, latest_end: u32) -> Option<u32> {
    let mut start = earliest;
    loop {
        let end = start.checked_add(duration)?;
        if end > latest_end {
            return None;
        }
        match placed.iter().find(|&&(s, e, _)| s < end && e > start) {
            None => return Some(start),
            Some(&(_, e, _)) => start = e,
        }
    }
}

// ---------------------------------------------------------------------
// Artifact I/O
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PersonRow {
    person_id: u64,
    household_id: u64,
    home_zone: u32,
    income: f64,
    income_quintile: u8,
    vehicles: u32,
    female: bool,
    age: u32,
    worker: bool,
    student: bool,
    work_at_home: bool,
    anchor_zone: Option<u32>,
}

pub fn write_population(
    path: &Path,
    config_hash: &str,
    households: &[Household],
    persons: &[Person],
) -> Result<()> {
    let by_id: HashMap<u64, &Household> = households.iter().map(|h| (h.id, h)).collect();
    let rows: Vec<PersonRow> = persons
        .iter()
        .map(|p| {
            let h = by_id[&p.household_id];
            PersonRow {
                person_id: p.id,
                household_id: p.household_id,
                home_zone: h.home_zone,
                income: (h.income * 100.0).round() / 100.0,
                income_quintile: h.income_quintile,
                vehicles: h.vehicles,
                female: p.female,
                age: p.age,
                worker: p.worker,
                student: p.student,
                work_at_home: p.work_at_home,
                anchor_zone: p.anchor_zone,
            }
        })
        .collect();
    io::write_csv(path, config_hash, &rows)
}

pub fn read_population(path: &Path, expected_hash: &str) -> Result<(Vec<Household>, Vec<Person>)> {
    let rows: Vec<PersonRow> = io::read_csv_checked(path, expected_hash)?;
    let mut households: Vec<Household> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut persons = Vec::with_capacity(rows.len());
    for r in rows {
        let hi = *index.entry(r.household_id).or_insert_with(|| {
            households.push(Household {
                id: r.household_id,
                home_zone: r.home_zone,
                income: r.income,
                income_quintile: r.income_quintile,
                vehicles: r.vehicles,
                members: Vec::new(),
            });
            households.len() - 1
        });
        households[hi].members.push(r.person_id);
        persons.push(Person {
            id: r.person_id,
            household_id: r.household_id,
            female: r.female,
            age: r.age,
            worker: r.worker,
            student: r.student,
            work_at_home: r.work_at_home,
            anchor_zone: r.anchor_zone,
        });
    }
    Ok((households, persons))
}

#[derive(Debug, Serialize, Deserialize)]
struct ActivityRow {
    id: u64,
    person_id: u64,
    activity_type: ActivityType,
    planned_start: u32,
    planned_duration: u32,
    min_duration: u32,
    latest_end: u32,
    zone: u32,
    mandatory: bool,
    is_care: bool,
    joint: bool,
}

pub fn write_activities(path: &Path, config_hash: &str, acts: &[Activity]) -> Result<()> {
    let rows: Vec<ActivityRow> = acts
        .iter()
        .map(|a| ActivityRow {
            id: a.id,
            person_id: a.person_id,
            activity_type: a.activity_type,
            planned_start: a.planned_start,
            planned_duration: a.planned_duration,
            min_duration: a.min_duration,
            latest_end: a.latest_end,
            zone: a.zone,
            mandatory: a.mandatory,
            is_care: a.is_care,
            joint: a.joint,
        })
        .collect();
    io::write_csv(path, config_hash, &rows)
}

pub fn read_activities(path: &Path, expected_hash: &str) -> Result<Vec<Activity>> {
    let rows: Vec<ActivityRow> = io::read_csv_checked(path, expected_hash)?;
    Ok(rows
        .into_iter()
        .map(|r| Activity {
            id: r.id,
            person_id: r.person_id,
            activity_type: r.activity_type,
            planned_start: r.planned_start,
            planned_duration: r.planned_duration,
            min_duration: r.min_duration,
            latest_end: r.latest_end,
            zone: r.zone,
            mandatory: r.mandatory,
            is_care: r.is_care,
            joint: r.joint,
        })
        .collect())
}
