//! Parser for a static GTFS subset: stops, routes, trips, stop_times,
//! calendar and calendar_dates. Trips are filtered to a single service date
//! and grouped into patterns keyed by (route_id, ordered stop sequence).
//!
//! Feeds must enumerate every trip in stop_times; frequencies.txt is not
//! supported. Stop coordinates are planar meters (stop_lon = x,
//! stop_lat = y), matching the roadway node coordinate system.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::config::TransitCapacities;
use crate::error::{Error, Result};
use crate::types::TransitMode;

/// A transit stop as read from the feed, before graph anchoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedStop {
    pub id: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub park_and_ride: bool,
}

/// One vehicle run over a pattern's stop sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSchedule {
    pub id: String,
    /// Arrival seconds-from-midnight per stop (may exceed 86400).
    pub arr: Vec<u32>,
    /// Departure seconds-from-midnight per stop.
    pub dep: Vec<u32>,
}

/// Trips sharing a route and an identical ordered stop sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitPattern {
    pub route_id: String,
    pub agency: String,
    pub mode: TransitMode,
    pub stops: Vec<String>,
    /// Sorted by first departure, tie-broken by trip id.
    pub trips: Vec<TripSchedule>,
    pub seats: u32,
    pub crush: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitFeed {
    pub stops: Vec<FeedStop>,
    pub patterns: Vec<TransitPattern>,
    /// Count of trips/routes dropped for data problems.
    pub warnings: u32,
}

impl TransitFeed {
    pub fn trip_count(&self) -> usize {
        self.patterns.iter().map(|p| p.trips.len()).sum()
    }
}

// Raw row shapes. Extra columns in the feed are ignored by the csv reader.

#[derive(Deserialize)]
struct StopRow {
    stop_id: String,
    #[serde(default)]
    stop_name: String,
    stop_lat: f64,
    stop_lon: f64,
    #[serde(default)]
    park_and_ride: Option<u8>,
}

#[derive(Deserialize)]
struct RouteRow {
    route_id: String,
    #[serde(default)]
    agency_id: String,
    route_type: u32,
}

#[derive(Deserialize)]
struct TripRow {
    route_id: String,
    service_id: String,
    trip_id: String,
}

#[derive(Deserialize)]
struct StopTimeRow {
    trip_id: String,
    arrival_time: String,
    departure_time: String,
    stop_id: String,
    stop_sequence: u32,
}

#[derive(Deserialize)]
struct CalendarRow {
    service_id: String,
    monday: u8,
    tuesday: u8,
    wednesday: u8,
    thursday: u8,
    friday: u8,
    saturday: u8,
    sunday: u8,
    start_date: String,
    end_date: String,
}

#[derive(Deserialize)]
struct CalendarDateRow {
    service_id: String,
    date: String,
    exception_type: u8,
}

fn read_rows<T: serde::de::DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>> {
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(&path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(|e| Error::parse(&path, e.to_string()))?);
    }
    Ok(rows)
}

/// Parses "HH:MM:SS" to seconds from midnight; hours may exceed 23 for
/// after-midnight service.
pub fn parse_gtfs_time(s: &str) -> Option<u32> {
    let mut parts = s.split(':');
    let h: u32 = parts.next()?.trim().parse().ok()?;
    let m: u32 = parts.next()?.trim().parse().ok()?;
    let sec: u32 = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() || m > 59 || sec > 59 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

fn parse_gtfs_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y%m%d").ok()
}

fn weekday_flag(row: &CalendarRow, day: Weekday) -> u8 {
    match day {
        Weekday::Mon => row.monday,
        Weekday::Tue => row.tuesday,
        Weekday::Wed => row.wednesday,
        Weekday::Thu => row.thursday,
        Weekday::Fri => row.friday,
        Weekday::Sat => row.saturday,
        Weekday::Sun => row.sunday,
    }
}

/// Returns the service_ids active on `date`, combining calendar.txt ranges
/// with calendar_dates.txt exceptions (1 = added, 2 = removed).
fn active_services(dir: &Path, date: NaiveDate) -> Result<HashSet<String>> {
    let calendar: Vec<CalendarRow> = read_rows(dir, "calendar.txt")?;
    let mut active = HashSet::new();
    for row in &calendar {
        let start = parse_gtfs_date(&row.start_date).ok_or_else(|| {
            Error::parse(&dir.join("calendar.txt"), format!("bad date {}", row.start_date))
        })?;
        let end = parse_gtfs_date(&row.end_date).ok_or_else(|| {
            Error::parse(&dir.join("calendar.txt"), format!("bad date {}", row.end_date))
        })?;
        if start <= date && date <= end && weekday_flag(row, date.weekday()) == 1 {
            active.insert(row.service_id.clone());
        }
    }
    let dates_path = dir.join("calendar_dates.txt");
    if dates_path.exists() {
        let exceptions: Vec<CalendarDateRow> = read_rows(dir, "calendar_dates.txt")?;
        for row in &exceptions {
            let d = parse_gtfs_date(&row.date).ok_or_else(|| {
                Error::parse(&dates_path, format!("bad date {}", row.date))
            })?;
            if d != date {
                continue;
            }
            match row.exception_type {
                1 => {
                    active.insert(row.service_id.clone());
                }
                2 => {
                    active.remove(&row.service_id);
                }
                other => {
                    return Err(Error::parse(
                        &dates_path,
                        format!("exception_type must be 1 or 2, got {other}"),
                    ))
                }
            }
        }
    }
    Ok(active)
}

fn route_mode(route_type: u32) -> Option<TransitMode> {
    match route_type {
        0 | 1 => Some(TransitMode::MetroRail),
        2 => Some(TransitMode::CommuterRail),
        3 | 11 => Some(TransitMode::Bus),
        _ => None,
    }
}

/// Parses the feed at `dir`, keeping only trips active on `service_date`.
///
/// Trips with dangling stop references or non-monotone stop_times are
/// dropped with a warning rather than failing the whole feed. The result
/// is deterministically ordered: patterns by (route_id, stop sequence),
/// trips within a pattern by first departure.
pub fn parse_gtfs(
    dir: &Path,
    service_date: NaiveDate,
    capacities: &TransitCapacities,
) -> Result<TransitFeed> {
    let stop_rows: Vec<StopRow> = read_rows(dir, "stops.txt")?;
    let mut stops = Vec::with_capacity(stop_rows.len());
    let mut stop_ids = HashSet::new();
    for row in stop_rows {
        if !stop_ids.insert(row.stop_id.clone()) {
            return Err(Error::parse(
                &dir.join("stops.txt"),
                format!("duplicate stop_id {}", row.stop_id),
            ));
        }
        if !row.stop_lat.is_finite() || !row.stop_lon.is_finite() {
            return Err(Error::parse(
                &dir.join("stops.txt"),
                format!("non-finite coordinates for stop {}", row.stop_id),
            ));
        }
        stops.push(FeedStop {
            id: row.stop_id,
            name: row.stop_name,
            x: row.stop_lon,
            y: row.stop_lat,
            park_and_ride: row.park_and_ride == Some(1),
        });
    }
    stops.sort_by(|a, b| a.id.cmp(&b.id));

    let mut warnings = 0u32;
    let mut routes: HashMap<String, (String, TransitMode)> = HashMap::new();
    for row in read_rows::<RouteRow>(dir, "routes.txt")? {
        match route_mode(row.route_type) {
            Some(mode) => {
                let agency = if row.agency_id.is_empty() {
                    "default".to_string()
                } else {
                    row.agency_id
                };
                routes.insert(row.route_id, (agency, mode));
            }
            None => {
                log::warn!(
                    "routes.txt: unsupported route_type {} on route {}, skipping",
                    row.route_type,
                    row.route_id
                );
                warnings += 1;
            }
        }
    }

    let services = active_services(dir, service_date)?;
    let mut trip_route: HashMap<String, String> = HashMap::new();
    for row in read_rows::<TripRow>(dir, "trips.txt")? {
        if services.contains(&row.service_id) && routes.contains_key(&row.route_id) {
            trip_route.insert(row.trip_id, row.route_id);
        }
    }

    // Collect stop_times per trip, then validate each trip as a unit.
    let st_path = dir.join("stop_times.txt");
    let mut per_trip: HashMap<String, Vec<(u32, String, u32, u32)>> = HashMap::new();
    for row in read_rows::<StopTimeRow>(dir, "stop_times.txt")? {
        if !trip_route.contains_key(&row.trip_id) {
            continue;
        }
        let arr = parse_gtfs_time(&row.arrival_time).ok_or_else(|| {
            Error::parse(&st_path, format!("bad arrival_time {}", row.arrival_time))
        })?;
        let dep = parse_gtfs_time(&row.departure_time).ok_or_else(|| {
            Error::parse(&st_path, format!("bad departure_time {}", row.departure_time))
        })?;
        per_trip
            .entry(row.trip_id)
            .or_default()
            .push((row.stop_sequence, row.stop_id, arr, dep));
    }

    let mut grouped: BTreeMap<(String, Vec<String>), Vec<TripSchedule>> = BTreeMap::new();
    // Deterministic trip iteration order regardless of HashMap internals.
    let mut trip_ids: Vec<&String> = per_trip.keys().collect();
    trip_ids.sort();
    'trips: for trip_id in trip_ids {
        let mut entries = per_trip[trip_id].clone();
        entries.sort_by_key(|e| e.0);
        if entries.len() < 2 {
            log::warn!("trip {trip_id}: fewer than 2 stops, skipping");
            warnings += 1;
            continue;
        }
        let mut seq = Vec::with_capacity(entries.len());
        let mut arr = Vec::with_capacity(entries.len());
        let mut dep = Vec::with_capacity(entries.len());
        for (i, (_, stop_id, a, d)) in entries.iter().enumerate() {
            if !stop_ids.contains(stop_id) {
                log::warn!("trip {trip_id}: unknown stop {stop_id}, skipping trip");
                warnings += 1;
                continue 'trips;
            }
            // Dwell may be zero, but the visit sequence must move forward.
            if d < a || (i > 0 && *a <= dep[i - 1]) {
                log::warn!("trip {trip_id}: non-monotone stop_times, skipping trip");
                warnings += 1;
                continue 'trips;
            }
            seq.push(stop_id.clone());
            arr.push(*a);
            dep.push(*d);
        }
        let route_id = trip_route[trip_id].clone();
        grouped
            .entry((route_id, seq))
            .or_default()
            .push(TripSchedule {
                id: trip_id.clone(),
                arr,
                dep,
            });
    }

    let mut patterns = Vec::with_capacity(grouped.len());
    for ((route_id, seq), mut trips) in grouped {
        trips.sort_by(|a, b| a.dep[0].cmp(&b.dep[0]).then(a.id.cmp(&b.id)));
        let (agency, mode) = routes[&route_id].clone();
        let cap = match mode {
            TransitMode::Bus => capacities.bus,
            TransitMode::MetroRail => capacities.metro_rail,
            TransitMode::CommuterRail => capacities.commuter_rail,
        };
        patterns.push(TransitPattern {
            route_id,
            agency,
            mode,
            stops: seq,
            trips,
            seats: cap.seats,
            crush: cap.crush,
        });
    }

    Ok(TransitFeed {
        stops,
        patterns,
        warnings,
    })
}
