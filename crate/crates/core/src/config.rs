//! Run configuration: one JSON document drives the whole pipeline.
//!
//! Unknown keys are rejected everywhere so typos fail fast. Every output
//! artifact records the SHA-256 of the config file it was produced from,
//! which lets later stages refuse stale inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{ActivityType, Mode, VehicleClass};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub demand: DemandConfig,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Roadway nodes CSV: id,x,y,zone
    pub nodes: PathBuf,
    /// Roadway links CSV: id,from,to,length_m,lanes,ffs_mps,jam_spacing_m,wave_mps,modes,congestable
    pub links: PathBuf,
    /// GTFS static feed directory; omit for a roadway-only network.
    #[serde(default)]
    pub gtfs: Option<PathBuf>,
    /// Service date used to select active GTFS trips.
    #[serde(default)]
    pub service_date: Option<NaiveDate>,
    /// Output directory for all artifacts.
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub walk_speed_mps: f64,
    pub bike_speed_mps: f64,
    pub max_access_walk_m: f64,
    pub class_params: ClassParams,
    pub capacities: TransitCapacities,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            walk_speed_mps: 1.4,
            bike_speed_mps: 4.2,
            max_access_walk_m: 800.0,
            class_params: ClassParams::default(),
            capacities: TransitCapacities::default(),
        }
    }
}

/// Per-class multipliers applied to a link's base (car) free-flow speed and
/// jam spacing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassParams {
    pub truck_ffs_factor: f64,
    pub bus_ffs_factor: f64,
    pub truck_jam_factor: f64,
    pub bus_jam_factor: f64,
}

impl Default for ClassParams {
    fn default() -> Self {
        ClassParams {
            truck_ffs_factor: 0.9,
            bus_ffs_factor: 0.85,
            truck_jam_factor: 2.0,
            bus_jam_factor: 2.0,
        }
    }
}

impl ClassParams {
    pub fn ffs_factor(&self, class: VehicleClass) -> f64 {
        match class {
            VehicleClass::Car => 1.0,
            VehicleClass::Bus => self.bus_ffs_factor,
            VehicleClass::Truck => self.truck_ffs_factor,
        }
    }

    pub fn jam_factor(&self, class: VehicleClass) -> f64 {
        match class {
            VehicleClass::Car => 1.0,
            VehicleClass::Bus => self.bus_jam_factor,
            VehicleClass::Truck => self.truck_jam_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternCapacity {
    pub seats: u32,
    pub crush: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitCapacities {
    pub bus: PatternCapacity,
    pub metro_rail: PatternCapacity,
    pub commuter_rail: PatternCapacity,
}

impl Default for TransitCapacities {
    fn default() -> Self {
        TransitCapacities {
            bus: PatternCapacity {
                seats: 40,
                crush: 60,
            },
            metro_rail: PatternCapacity {
                seats: 120,
                crush: 180,
            },
            commuter_rail: PatternCapacity {
                seats: 140,
                crush: 200,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandConfig {
    pub households: u32,
    /// Home-zone sampling weights; uniform over the network's zones when empty.
    pub zone_weights: BTreeMap<u32, f64>,
    /// Work/school-zone weights; falls back to `zone_weights` when empty.
    pub work_zone_weights: BTreeMap<u32, f64>,
    pub income_median: f64,
    pub income_sigma: f64,
    /// Household vehicle-ownership distribution (count -> probability).
    pub vehicle_ownership: BTreeMap<u32, f64>,
    /// Household size distribution (persons -> probability).
    pub household_size: BTreeMap<u32, f64>,
    pub female_rate: f64,
    /// Population share under 18.
    pub child_share: f64,
    /// Population share 65 and over.
    pub senior_share: f64,
    /// Worker rate among adults 18-64.
    pub worker_rate: f64,
    /// Student rate among ages 5-17.
    pub student_rate: f64,
    /// Share of workers whose work activity is work-at-home.
    pub work_from_home_share: f64,
    /// Probability an activity is undertaken jointly with a household member.
    pub joint_rate: f64,
    /// Expected daily count per person for rate-driven activity types.
    /// Work, school and work-at-home are driven by worker/student status
    /// instead and must not appear here.
    pub activity_rates: BTreeMap<ActivityType, f64>,
    /// Per-type timing overrides; built-in defaults are used when absent.
    pub timing: BTreeMap<ActivityType, ActivityTiming>,
    pub mode_choice: ModeChoiceConfig,
    pub destination_choice: DestinationChoiceConfig,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            households: 1000,
            zone_weights: BTreeMap::new(),
            work_zone_weights: BTreeMap::new(),
            income_median: 60_000.0,
            income_sigma: 0.8,
            vehicle_ownership: [(0, 0.115), (1, 0.35), (2, 0.42), (3, 0.115)]
                .into_iter()
                .collect(),
            household_size: [(1, 0.30), (2, 0.33), (3, 0.20), (4, 0.17)]
                .into_iter()
                .collect(),
            female_rate: 0.51,
            child_share: 0.21,
            senior_share: 0.16,
            worker_rate: 0.72,
            student_rate: 0.95,
            work_from_home_share: 0.17,
            joint_rate: 0.10,
            activity_rates: default_activity_rates(),
            timing: BTreeMap::new(),
            mode_choice: ModeChoiceConfig::default(),
            destination_choice: DestinationChoiceConfig::default(),
        }
    }
}

/// Default per-capita daily rates for the rate-driven activity types,
/// proportional to a large-region activity mix.
pub fn default_activity_rates() -> BTreeMap<ActivityType, f64> {
    [
        (ActivityType::EatOut, 0.215),
        (ActivityType::Errands, 0.128),
        (ActivityType::EvCharging, 0.00003),
        (ActivityType::Healthcare, 0.0894),
        (ActivityType::Leisure, 0.167),
        (ActivityType::PartTimeWork, 0.0651),
        (ActivityType::Personal, 0.0327),
        (ActivityType::PickupDropoff, 0.23),
        (ActivityType::ReligiousCivic, 0.0386),
        (ActivityType::Service, 0.0509),
        (ActivityType::ShopMajor, 0.0667),
        (ActivityType::ShopOther, 0.279),
        (ActivityType::Social, 0.118),
    ]
    .into_iter()
    .collect()
}

/// Start-time histogram (48 half-hour bins) plus lognormal duration
/// parameters for one activity type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityTiming {
    /// Relative weights for 48 half-hour start bins (00:00-24:00).
    pub start_hist: Vec<f64>,
    pub duration_median_s: f64,
    pub duration_sigma: f64,
    /// Minimum acceptable duration as a fraction of the planned duration.
    pub min_duration_frac: f64,
    /// Scheduling slack added after the planned end to form `latest_end`.
    pub latest_slack_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeChoiceConfig {
    /// Utility per minute of in-vehicle time (<= 0).
    pub b_ivt_per_min: f64,
    /// Utility per minute of waiting (<= 0).
    pub b_wait_per_min: f64,
    /// Utility per minute of walking (<= 0).
    pub b_walk_per_min: f64,
    /// Utility per dollar of monetary cost (<= 0).
    pub b_cost: f64,
    /// Alternative-specific constants.
    pub asc: BTreeMap<Mode, f64>,
    /// Nest scale parameters in (0, 1]: auto, transit, active.
    pub nest_scale_auto: f64,
    pub nest_scale_transit: f64,
    pub nest_scale_active: f64,
}

impl Default for ModeChoiceConfig {
    fn default() -> Self {
        ModeChoiceConfig {
            b_ivt_per_min: -0.030,
            b_wait_per_min: -0.060,
            b_walk_per_min: -0.060,
            b_cost: -0.30,
            asc: [
                (Mode::Drive, 0.0),
                (Mode::Walk, -0.35),
                (Mode::Bike, -1.8),
                (Mode::WalkToTransit, -0.45),
                (Mode::DriveToTransit, -1.3),
            ]
            .into_iter()
            .collect(),
            nest_scale_auto: 1.0,
            nest_scale_transit: 0.7,
            nest_scale_active: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DestinationChoiceConfig {
    /// Travel-time impedance per minute (<= 0).
    pub beta_tt_per_min: f64,
    /// Optional per-type zone attraction overrides; zones absent from a
    /// type's map get zero attraction. Empty -> home-zone weights are used.
    pub attraction_weights: BTreeMap<ActivityType, BTreeMap<u32, f64>>,
}

impl Default for DestinationChoiceConfig {
    fn default() -> Self {
        DestinationChoiceConfig {
            beta_tt_per_min: -0.08,
            attraction_weights: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterConfig {
    /// Generalized-cost multiplier for time spent waiting at stops.
    pub wait_weight: f64,
    /// Generalized-cost multiplier for walking time.
    pub walk_weight: f64,
    /// Maximum boardings per intermodal trip.
    pub max_boardings: u32,
    /// Time to park at a park-and-ride stop, seconds.
    pub park_time_s: u32,
    pub fare_per_boarding: f64,
    pub auto_cost_per_km: f64,
    /// Walk mode is unavailable beyond this straight-line distance.
    pub walk_max_km: f64,
    /// Bike mode is unavailable beyond this straight-line distance.
    pub bike_max_km: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            wait_weight: 2.0,
            walk_weight: 2.0,
            max_boardings: 3,
            park_time_s: 60,
            fare_per_boarding: 2.5,
            auto_cost_per_km: 0.20,
            walk_max_km: 3.0,
            bike_max_km: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub min_dwell_s: f64,
    pub board_time_s: f64,
    pub alight_time_s: f64,
    /// Reroute when experienced time exceeds predicted by this factor.
    pub reroute_theta: f64,
    /// Passengers give up and replan after waiting this long at a stop.
    pub max_stop_wait_s: u32,
    /// Emit per-vehicle trajectories (large, off by default).
    pub trajectories: bool,
    /// Exogenous background truck trips injected over the day.
    pub background_trucks: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_s: 1.0,
            min_dwell_s: 10.0,
            board_time_s: 2.0,
            alight_time_s: 1.5,
            reroute_theta: 1.5,
            max_stop_wait_s: 1800,
            trajectories: false,
            background_trucks: 0,
        }
    }
}

/// Step-size schedule for mixing experienced into historical times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    /// Method of successive averages: alpha_k = 1/k.
    Msa,
    Fixed(f64),
}

impl AlphaSchedule {
    pub fn alpha(&self, iteration: u32) -> f64 {
        match self {
            AlphaSchedule::Msa => 1.0 / iteration.max(1) as f64,
            AlphaSchedule::Fixed(a) => *a,
        }
    }
}

impl Serialize for AlphaSchedule {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSchedule::Msa => ser.serialize_str("msa"),
            AlphaSchedule::Fixed(a) => ser.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        match v {
            serde_json::Value::String(s) if s == "msa" => Ok(AlphaSchedule::Msa),
            serde_json::Value::Number(n) => {
                let a = n.as_f64().unwrap_or(f64::NAN);
                if a > 0.0 && a <= 1.0 {
                    Ok(AlphaSchedule::Fixed(a))
                } else {
                    Err(serde::de::Error::custom("alpha must be in (0, 1]"))
                }
            }
            other => Err(serde::de::Error::custom(format!(
                "alpha must be \"msa\" or a number in (0, 1], got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumConfig {
    pub max_iters: u32,
    pub gap_target: f64,
    pub alpha: AlphaSchedule,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            max_iters: 20,
            gap_target: 0.03,
            alpha: AlphaSchedule::Msa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnershipRule {
    #[default]
    None,
    /// Zero-car households buy one car; one-car households buy a second.
    PaperRule,
}

/// Declarative scenario: transforms applied to the baseline inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub transit_removal: bool,
    /// Restrict removal to these agencies; empty removes all.
    #[serde(default)]
    pub remove_agencies: Vec<String>,
    #[serde(default)]
    pub ownership_rule: OwnershipRule,
    /// Partial config overrides merged over the top-level document for
    /// this scenario's routing/simulation stages.
    #[serde(default)]
    pub overrides: Option<serde_json::Value>,
}

impl ScenarioSpec {
    pub fn baseline(name: &str) -> ScenarioSpec {
        ScenarioSpec {
            name: name.to_string(),
            transit_removal: false,
            remove_agencies: Vec::new(),
            ownership_rule: OwnershipRule::None,
            overrides: None,
        }
    }

    pub fn has_transforms(&self) -> bool {
        self.transit_removal
            || self.ownership_rule != OwnershipRule::None
            || self.overrides.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticsConfig {
    /// Zone ids forming the "city" reporting mask; the region is all zones.
    pub city_zones: Vec<u32>,
    pub economics: EconomicAssumptions,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            city_zones: Vec::new(),
            economics: EconomicAssumptions::default(),
        }
    }
}

/// Monetary assumptions for the economic-impact calculator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomicAssumptions {
    /// Value of time in a car, $/person-hour.
    pub vot_auto: f64,
    /// Value of time riding transit, $/person-hour.
    pub vot_transit: f64,
    pub weekdays_per_year: f64,
    /// Average car occupancy, persons/vehicle.
    pub occupancy_auto: f64,
    /// Annual cost of owning one car, $.
    pub annual_car_cost: f64,
    /// Households in the reporting region.
    pub households_region: f64,
    /// Per-household annual spending by BLS category, $.
    /// These defaults are back-solved from regional spending-loss totals
    /// and should be treated as derived placeholders, not survey values.
    pub per_household_spending: BTreeMap<String, f64>,
    /// Activity type -> BLS spending category.
    pub activity_bls_map: BTreeMap<ActivityType, String>,
    /// Annual transit operating funding, $ (denominator of the ratio).
    pub annual_transit_funding: f64,
}

impl Default for EconomicAssumptions {
    fn default() -> Self {
        EconomicAssumptions {
            vot_auto: 30.0,
            vot_transit: 25.50,
            weekdays_per_year: 261.0,
            occupancy_auto: 1.48,
            annual_car_cost: 10_728.0,
            households_region: 3_800_000.0,
            per_household_spending: [
                ("entertainment".to_string(), 4_267.0),
                ("food_away_from_home".to_string(), 4_169.0),
                ("apparel_and_services".to_string(), 2_430.0),
            ]
            .into_iter()
            .collect(),
            activity_bls_map: default_bls_map(),
        annual_transit_funding: 2_700_000_000.0,
        }
    }
}

pub fn default_bls_map() -> BTreeMap<ActivityType, String> {
    [
        (ActivityType::ShopMajor, "apparel_and_services".to_string()),
        (ActivityType::ShopOther, "apparel_and_services".to_string()),
        (ActivityType::Errands, "apparel_and_services".to_string()),
        (ActivityType::Leisure, "entertainment".to_string()),
        (ActivityType::EatOut, "food_away_from_home".to_string()),
    ]
    .into_iter()
    .collect()
}

impl EconomicAssumptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vot_auto", self.vot_auto),
            ("vot_transit", self.vot_transit),
            ("weekdays_per_year", self.weekdays_per_year),
            ("occupancy_auto", self.occupancy_auto),
            ("annual_car_cost", self.annual_car_cost),
            ("households_region", self.households_region),
            ("annual_transit_funding", self.annual_transit_funding),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "economics.{name} must be positive, got {v}"
                )));
            }
        }
        for required in [
            ActivityType::ShopMajor,
            ActivityType::ShopOther,
            ActivityType::Errands,
            ActivityType::Leisure,
            ActivityType::EatOut,
        ] {
            let cat = self.activity_bls_map.get(&required).ok_or_else(|| {
                Error::Config(format!(
                    "economics.activity_bls_map is missing an entry for {required}"
                ))
            })?;
            if !self.per_household_spending.contains_key(cat) {
                return Err(Error::Config(format!(
                    "economics.per_household_spending is missing category {cat} \
                     (mapped from {required})"
                )));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    /// Loads a config from JSON, validates it and returns it together with
    /// the SHA-256 hash of the raw file bytes.
    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let bytes = fs::read(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok((cfg, hash_bytes(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("nodes", &self.paths.nodes), ("links", &self.paths.links)] {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "paths.{name} does not exist: {}",
                    p.display()
                )));
            }
        }
        if let Some(gtfs) = &self.paths.gtfs {
            if !gtfs.exists() {
                return Err(Error::Config(format!(
                    "paths.gtfs does not exist: {}",
                    gtfs.display()
                )));
            }
            if self.paths.service_date.is_none() {
                return Err(Error::Config(
                    "paths.service_date is required when paths.gtfs is set".into(),
                ));
            }
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        {
            let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            if names.len() != self.scenarios.len() {
                return Err(Error::Config("scenario names must be unique".into()));
            }
        }
        let d = &self.demand;
        if d.households == 0 {
            return Err(Error::Config("demand.households must be > 0".into()));
        }
        for (label, rate) in [
            ("female_rate", d.female_rate),
            ("child_share", d.child_share),
            ("senior_share", d.senior_share),
            ("worker_rate", d.worker_rate),
            ("student_rate", d.student_rate),
            ("work_from_home_share", d.work_from_home_share),
            ("joint_rate", d.joint_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "demand.{label} must be in [0, 1], got {rate}"
                )));
            }
        }
        if d.child_share + d.senior_share > 1.0 {
            return Err(Error::Config(
                "demand.child_share + demand.senior_share must not exceed 1".into(),
            ));
        }
        for t in [
            ActivityType::Work,
            ActivityType::WorkAtHome,
            ActivityType::School,
        ] {
            if d.activity_rates.contains_key(&t) {
                return Err(Error::Config(format!(
                    "demand.activity_rates must not contain {t}; it is driven by \
                     worker/student status"
                )));
            }
        }
        let mc = &d.mode_choice;
        for (label, scale) in [
            ("nest_scale_auto", mc.nest_scale_auto),
            ("nest_scale_transit", mc.nest_scale_transit),
            ("nest_scale_active", mc.nest_scale_active),
        ] {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(Error::Config(format!(
                    "demand.mode_choice.{label} must be in (0, 1], got {scale}"
                )));
            }
        }
        for (label, beta) in [
            ("b_ivt_per_min", mc.b_ivt_per_min),
            ("b_wait_per_min", mc.b_wait_per_min),
            ("b_walk_per_min", mc.b_walk_per_min),
            ("b_cost", mc.b_cost),
        ] {
            if beta > 0.0 {
                return Err(Error::Config(format!(
                    "demand.mode_choice.{label} must be <= 0, got {beta}"
                )));
            }
        }
        if d.destination_choice.beta_tt_per_min > 0.0 {
            return Err(Error::Config(
                "demand.destination_choice.beta_tt_per_min must be <= 0".into(),
            ));
        }
        if self.sim.dt_s <= 0.0 {
            return Err(Error::Config("sim.dt_s must be positive".into()));
        }
        if self.equilibrium.max_iters < 1 {
            return Err(Error::Config("equilibrium.max_iters must be >= 1".into()));
        }
        if let AlphaSchedule::Fixed(a) = self.equilibrium.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config("equilibrium.alpha must be in (0, 1]".into()));
            }
        }
        self.analytics.economics.validate()?;
        Ok(())
    }

    /// Applies a scenario's partial overrides and re-validates. The
    /// override document is merged key-by-key over the serialized config.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<RunConfig> {
        let mut base = serde_json::to_value(self)?;
        merge_json(&mut base, overrides);
        let cfg: RunConfig = serde_json::from_value(base)
            .map_err(|e| Error::Config(format!("scenario overrides: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario(&self, name: &str) -> Result<&ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario: {name}")))
    }
}

fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Built-in timing defaults per activity type. Start histograms are coarse
/// half-hour-bin shapes; durations are lognormal medians.
pub fn default_timing(t: ActivityType) -> ActivityTiming {
    // Helper: triangular bump over [lo, hi) half-hour bins peaking at mid.
    fn bump(lo: usize, hi: usize) -> Vec<f64> {
        let mut h = vec![0.0; 48];
        let mid = (lo + hi) as f64 / 2.0;
        for (i, w) in h.iter_mut().enumerate().take(hi).skip(lo) {
            let d = 1.0 - ((i as f64 - mid).abs() / ((hi - lo) as f64 / 2.0 + 0.5));
            *w = d.max(0.05);
        }
        h
    }
    let hours = |h: f64| h * 3600.0;
    match t {
        ActivityType::Work => ActivityTiming {
            start_hist: bump(13, 20), // 06:30-10:00
            duration_median_s: hours(8.2),
            duration_sigma: 0.12,
            min_duration_frac: 0.0,
            latest_slack_s: hours(1.5),
        },
        ActivityType::WorkAtHome => ActivityTiming {
            start_hist: bump(14, 22),
            duration_median_s: hours(7.0),
            duration_sigma: 0.25,
            min_duration_frac: 0.3,
            latest_slack_s: hours(4.0),
        },
        ActivityType::PartTimeWork => ActivityTiming {
            start_hist: bump(16, 36),
            duration_median_s: hours(4.0),
            duration_sigma: 0.25,
            min_duration_frac: 0.0,
            latest_slack_s: hours(2.0),
        },
        ActivityType::School => ActivityTiming {
            start_hist: bump(14, 18), // 07:00-09:00
            duration_median_s: hours(6.5),
            duration_sigma: 0.08,
            min_duration_frac: 0.0,
            latest_slack_s: hours(1.0),
        },
        ActivityType::EatOut => ActivityTiming {
            start_hist: {
                let mut h = bump(23, 28); // lunch
                for (i, w) in bump(36, 42).into_iter().enumerate() {
                    h[i] += w; // dinner
                }
                h
            },
            duration_median_s: hours(1.0),
            duration_sigma: 0.35,
            min_duration_frac: 0.5,
            latest_slack_s: hours(3.0),
        },
        ActivityType::Healthcare => ActivityTiming {
            start_hist: bump(17, 33),
            duration_median_s: hours(1.0),
            duration_sigma: 0.40,
            min_duration_frac: 0.6,
            latest_slack_s: hours(2.5),
        },
        ActivityType::Leisure => ActivityTiming {
            start_hist: bump(20, 44),
            duration_median_s: hours(1.6),
            duration_sigma: 0.45,
            min_duration_frac: 0.4,
            latest_slack_s: hours(3.5),
        },
        ActivityType::PickupDropoff => ActivityTiming {
            start_hist: {
                let mut h = bump(14, 18);
                for (i, w) in bump(30, 36).into_iter().enumerate() {
                    h[i] += w;
                }
                h
            },
            duration_median_s: hours(0.15),
            duration_sigma: 0.30,
            min_duration_frac: 0.8,
            latest_slack_s: hours(1.5),
        },
        ActivityType::ReligiousCivic => ActivityTiming {
            start_hist: bump(18, 40),
            duration_median_s: hours(1.4),
            duration_sigma: 0.35,
            min_duration_frac: 0.5,
            latest_slack_s: hours(3.0),
        },
        ActivityType::Service => ActivityTiming {
            start_hist: bump(17, 35),
            duration_median_s: hours(0.6),
            duration_sigma: 0.35,
            min_duration_frac: 0.5,
            latest_slack_s: hours(2.5),
        },
        ActivityType::ShopMajor => ActivityTiming {
            start_hist: bump(19, 39),
            duration_median_s: hours(1.1),
            duration_sigma: 0.35,
            min_duration_frac: 0.5,
            latest_slack_s: hours(3.0),
        },
        ActivityType::ShopOther => ActivityTiming {
            start_hist: bump(17, 41),
            duration_median_s: hours(0.6),
            duration_sigma: 0.40,
            min_duration_frac: 0.5,
            latest_slack_s: hours(3.0),
        },
        ActivityType::Social => ActivityTiming {
            start_hist: bump(22, 46),
            duration_median_s: hours(1.8),
            duration_sigma: 0.45,
            min_duration_frac: 0.4,
            latest_slack_s: hours(3.5),
        },
        ActivityType::Errands => ActivityTiming {
            start_hist: bump(17, 39),
            duration_median_s: hours(0.5),
            duration_sigma: 0.35,
            min_duration_frac: 0.6,
            latest_slack_s: hours(2.5),
        },
        ActivityType::Personal => ActivityTiming {
            start_hist: bump(18, 40),
            duration_median_s: hours(0.8),
            duration_sigma: 0.40,
            min_duration_frac: 0.5,
            latest_slack_s: hours(3.0),
        },
        ActivityType::EvCharging => ActivityTiming {
            start_hist: bump(16, 44),
            duration_median_s: hours(0.5),
            duration_sigma: 0.30,
            min_duration_frac: 0.8,
            latest_slack_s: hours(2.0),
        },
    }
}
