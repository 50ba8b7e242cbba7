//! Domain enums shared across modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The 16 modeled daily activity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityType {
    EatOut,
    Errands,
    EvCharging,
    Healthcare,
    Leisure,
    PartTimeWork,
    Personal,
    PickupDropoff,
    ReligiousCivic,
    School,
    Service,
    ShopMajor,
    ShopOther,
    Social,
    Work,
    WorkAtHome,
}

impl ActivityType {
    pub const ALL: [ActivityType; 16] = [
        ActivityType::EatOut,
        ActivityType::Errands,
        ActivityType::EvCharging,
        ActivityType::Healthcare,
        ActivityType::Leisure,
        ActivityType::PartTimeWork,
        ActivityType::Personal,
        ActivityType::PickupDropoff,
        ActivityType::ReligiousCivic,
        ActivityType::School,
        ActivityType::Service,
        ActivityType::ShopMajor,
        ActivityType::ShopOther,
        ActivityType::Social,
        ActivityType::Work,
        ActivityType::WorkAtHome,
    ];

    /// Mobility-of-care categories: errands, healthcare, pickup-dropoff,
    /// school and shop-major.
    pub fn is_care(self) -> bool {
        matches!(
            self,
            ActivityType::Errands
                | ActivityType::Healthcare
                | ActivityType::PickupDropoff
                | ActivityType::School
                | ActivityType::ShopMajor
        )
    }

    /// Work/school grouping used in cancellation reporting: work, work at
    /// home, part-time work and school; everything else is "non-work".
    pub fn is_work_school(self) -> bool {
        matches!(
            self,
            ActivityType::Work
                | ActivityType::WorkAtHome
                | ActivityType::PartTimeWork
                | ActivityType::School
        )
    }

    /// Activities that keep their planned window during conflict
    /// resolution and are never cancelled for lateness.
    pub fn is_mandatory(self) -> bool {
        matches!(
            self,
            ActivityType::Work | ActivityType::School | ActivityType::PartTimeWork
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            ActivityType::EatOut => "eat-out",
            ActivityType::Errands => "errands",
            ActivityType::EvCharging => "ev-charging",
            ActivityType::Healthcare => "healthcare",
            ActivityType::Leisure => "leisure",
            ActivityType::PartTimeWork => "part-time-work",
            ActivityType::Personal => "personal",
            ActivityType::PickupDropoff => "pickup-dropoff",
            ActivityType::ReligiousCivic => "religious-civic",
            ActivityType::School => "school",
            ActivityType::Service => "service",
            ActivityType::ShopMajor => "shop-major",
            ActivityType::ShopOther => "shop-other",
            ActivityType::Social => "social",
            ActivityType::Work => "work",
            ActivityType::WorkAtHome => "work-at-home",
        }
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ActivityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ActivityType::ALL
            .iter()
            .copied()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown activity type: {s}")))
    }
}

/// Travel modes available to a person for one trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Drive,
    Walk,
    Bike,
    WalkToTransit,
    DriveToTransit,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Drive,
        Mode::Walk,
        Mode::Bike,
        Mode::WalkToTransit,
        Mode::DriveToTransit,
    ];

    pub fn is_transit(self) -> bool {
        matches!(self, Mode::WalkToTransit | Mode::DriveToTransit)
    }

    pub fn uses_household_vehicle(self) -> bool {
        matches!(self, Mode::Drive | Mode::DriveToTransit)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Drive => "drive",
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::WalkToTransit => "walk_to_transit",
            Mode::DriveToTransit => "drive_to_transit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Mode::ALL
            .iter()
            .copied()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode: {s}")))
    }
}

/// Vehicle classes simulated on the roadway, each with its own
/// speed-spacing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Car,
    Bus,
    Truck,
}

/// Transit service modes. Buses run on the congestable roadway; rail modes
/// run on a non-congestable layer at scheduled times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitMode {
    Bus,
    MetroRail,
    CommuterRail,
}

impl TransitMode {
    pub fn is_rail(self) -> bool {
        matches!(self, TransitMode::MetroRail | TransitMode::CommuterRail)
    }

    pub fn label(self) -> &'static str {
        match self {
            TransitMode::Bus => "bus",
            TransitMode::MetroRail => "metro_rail",
            TransitMode::CommuterRail => "commuter_rail",
        }
    }
}

impl fmt::Display for TransitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Set of roadway modes permitted on a link, stored as a bitmask and
/// serialized as a `|`-separated token list (e.g. `auto|bus|truck`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const AUTO: ModeSet = ModeSet(1);
    pub const BUS: ModeSet = ModeSet(2);
    pub const TRUCK: ModeSet = ModeSet(4);
    pub const WALK: ModeSet = ModeSet(8);
    pub const BIKE: ModeSet = ModeSet(16);

    const TOKENS: [(&'static str, u8); 5] = [
        ("auto", 1),
        ("bus", 2),
        ("truck", 4),
        ("walk", 8),
        ("bike", 16),
    ];

    pub fn empty() -> ModeSet {
        ModeSet(0)
    }

    pub fn all_roadway() -> ModeSet {
        ModeSet(1 | 2 | 4)
    }

    pub fn with(self, other: ModeSet) -> ModeSet {
        ModeSet(self.0 | other.0)
    }

    pub fn contains(self, other: ModeSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn allows_class(self, class: VehicleClass) -> bool {
        match class {
            VehicleClass::Car => self.contains(ModeSet::AUTO),
            VehicleClass::Bus => self.contains(ModeSet::BUS),
            VehicleClass::Truck => self.contains(ModeSet::TRUCK),
        }
    }
}

impl fmt::Display for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, bit) in ModeSet::TOKENS {
            if self.0 & bit != 0 {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

impl FromStr for ModeSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut bits = 0u8;
        for tok in s.split('|').filter(|t| !t.is_empty()) {
            let bit = ModeSet::TOKENS
                .iter()
                .find(|(name, _)| *name == tok.trim())
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::Config(format!("unknown link mode token: {tok}")))?;
            bits |= bit;
        }
        Ok(ModeSet(bits))
    }
}

impl Serialize for ModeSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn care_flag_matches_five_category_definition() {
        let care: Vec<ActivityType> = ActivityType::ALL
            .iter()
            .copied()
            .filter(|t| t.is_care())
            .collect();
        assert_eq!(
            care,
            vec![
                ActivityType::Errands,
                ActivityType::Healthcare,
                ActivityType::PickupDropoff,
                ActivityType::School,
                ActivityType::ShopMajor,
            ]
        );
    }

    #[test]
    fn mode_set_round_trips() {
        let m: ModeSet = "auto|walk|bike".parse().unwrap();
        assert!(m.contains(ModeSet::AUTO) && m.contains(ModeSet::WALK));
        assert!(!m.contains(ModeSet::BUS));
        assert_eq!(m.to_string().parse::<ModeSet>().unwrap(), m);
    }
}
