//! Activity fate decisions for within-day replanning.
//!
//! The lateness ladder, applied on arrival: fit the full planned duration
//! if the window allows (on time -> completed, late -> postponed);
//! otherwise shorten into the remaining window when at least min_duration
//! fits; otherwise cancel. Mandatory activities are never cancelled by
//! lateness - they start late and compress to latest_end (their
//! min_duration is zero by construction). A cancellation downstream of an
//! earlier cancellation in the same person's day is labelled cascade; a
//! trip that no mode can serve cancels its activity as untravelable.

use serde::{Deserialize, Serialize};

use crate::demand::Activity;
use crate::types::ActivityType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Completed,
    Shortened,
    Postponed,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelReason {
    Untravelable,
    TooLate,
    Cascade,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityOutcome {
    pub activity_id: u64,
    pub person_id: u64,
    pub activity_type: ActivityType,
    pub status: OutcomeStatus,
    pub cancel_reason: CancelReason,
    pub realized_start: Option<u32>,
    pub realized_duration: Option<u32>,
    pub planned_start: u32,
    pub planned_duration: u32,
    pub mandatory: bool,
    pub is_care: bool,
}

impl ActivityOutcome {
    pub fn done(act: &Activity, start: u64, duration: u32, status: OutcomeStatus) -> Self {
        ActivityOutcome {
            activity_id: act.id,
            person_id: act.person_id,
            activity_type: act.activity_type,
            status,
            cancel_reason: CancelReason::None,
            realized_start: Some(start.min(u32::MAX as u64) as u32),
            realized_duration: Some(duration),
            planned_start: act.planned_start,
            planned_duration: act.planned_duration,
            mandatory: act.mandatory,
            is_care: act.is_care,
        }
    }

    pub fn cancelled(act: &Activity, reason: CancelReason) -> Self {
        ActivityOutcome {
            activity_id: act.id,
            person_id: act.person_id,
            activity_type: act.activity_type,
            status: OutcomeStatus::Cancelled,
            cancel_reason: reason,
            realized_start: None,
            realized_duration: None,
            planned_start: act.planned_start,
            planned_duration: act.planned_duration,
            mandatory: act.mandatory,
            is_care: act.is_care,
        }
    }

    pub fn cancelled_flag(&self) -> bool {
        self.status == OutcomeStatus::Cancelled
    }
}

/// Whether arriving at `arrival` still allows the full planned duration.
pub fn fits_full(act: &Activity, arrival: u64) -> bool {
    arrival.max(act.planned_start as u64) + act.planned_duration as u64
        <= act.latest_end as u64
}

/// Lateness ladder for an arrival at the activity's location. Returns the
/// realized (start, duration, status), or None when the activity must be
/// cancelled (the caller picks too_late vs cascade).
pub fn arrival_decision(act: &Activity, arrival: u64) -> Option<(u64, u32, OutcomeStatus)> {
    let start = arrival.max(act.planned_start as u64);
    if start + act.planned_duration as u64 <= act.latest_end as u64 {
        let status = if start == act.planned_start as u64 {
            OutcomeStatus::Completed
        } else {
            OutcomeStatus::Postponed
        };
        return Some((start, act.planned_duration, status));
    }
    let window = (act.latest_end as u64).saturating_sub(start) as u32;
    if act.mandatory || window >= act.min_duration {
        Some((start, window, OutcomeStatus::Shortened))
    } else {
        None
    }
}

/// Walks one person's activity chain with a zone-to-zone travel-time
/// callback, departing each leg at the later of "previous business done"
/// and "just in time for the planned start". `travel` returns None when no
/// mode can serve the hop, which cancels the target as untravelable and
/// leaves the traveler where they were.
pub fn resolve_chain(
    chain: &[Activity],
    start_time: u64,
    home_zone: u32,
    travel: &mut dyn FnMut(u32, u32) -> Option<u64>,
) -> Vec<ActivityOutcome> {
    let mut out = Vec::with_capacity(chain.len());
    let mut cursor = start_time;
    let mut loc = home_zone;
    let mut disrupted = false;
    for act in chain {
        let Some(tt) = travel(loc, act.zone) else {
            out.push(ActivityOutcome::cancelled(act, CancelReason::Untravelable));
            disrupted = true;
            continue;
        };
        let depart = cursor.max((act.planned_start as u64).saturating_sub(tt));
        let arrive = depart + tt;
        match arrival_decision(act, arrive) {
            Some((start, duration, status)) => {
                out.push(ActivityOutcome::done(act, start, duration, status));
                cursor = start + duration as u64;
            }
            None => {
                let reason = if disrupted {
                    CancelReason::Cascade
                } else {
                    CancelReason::TooLate
                };
                out.push(ActivityOutcome::cancelled(act, reason));
                disrupted = true;
                cursor = arrive;
            }
        }
        loc = act.zone;
    }
    out
}
