//! Enrollment and weekly-activity tables, the person-period panel, early-window
//! summaries and synthetic cohorts with known hazards.

mod early;
mod load;
mod panel;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use early::{compute_early_window, EarlyWindowSummary, CANONICAL_WINDOW, WINDOW_GRID};
pub use load::{
    load_activity, load_cohort, load_enrollments, load_oulad, week_of_day, write_activity,
    write_early_window, write_enrollments, write_panel, ColumnMap, OuladLoad,
};
pub use panel::{expand_for_evaluation, expand_person_period, PanelRow, PersonPeriodPanel};

/// Categorical static fields taken directly from the enrollment table.
pub const STATIC_CATEGORICAL: [&str; 6] = [
    "gender",
    "region",
    "highest_education",
    "imd_band",
    "age_band",
    "disability",
];

/// Count-valued static fields, treated as numeric.
pub const STATIC_NUMERIC: [&str; 2] = ["num_of_prev_attempts", "studied_credits"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl CovariateValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            CovariateValue::Numeric(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            CovariateValue::Categorical(s) => Some(s),
            _ => None,
        }
    }

    fn to_cell(&self) -> String {
        match self {
            CovariateValue::Numeric(x) => format!("{x}"),
            CovariateValue::Categorical(s) => s.clone(),
            CovariateValue::Missing => String::new(),
        }
    }
}

/// One student-module-presentation unit with its observed time and event flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentRecord {
    pub enrollment_id: String,
    pub module_id: String,
    pub presentation_id: String,
    pub observed_time_weeks: u32,
    pub event: bool,
    pub static_covariates: BTreeMap<String, CovariateValue>,
}

/// VLE activity aggregated to one enrollment-week.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyActivityRow {
    pub enrollment_id: String,
    pub week: u32,
    pub total_clicks_week: u64,
    pub n_vle_rows_week: u64,
    pub n_distinct_sites_week: u64,
    pub active_this_week: bool,
}

impl WeeklyActivityRow {
    pub fn new(enrollment_id: impl Into<String>, week: u32, clicks: u64, rows: u64, sites: u64) -> Self {
        Self {
            enrollment_id: enrollment_id.into(),
            week,
            total_clicks_week: clicks,
            n_vle_rows_week: rows,
            n_distinct_sites_week: sites,
            active_this_week: rows > 0,
        }
    }
}

/// Enrollments plus their weekly activity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<EnrollmentRecord>,
    pub activity: Vec<WeeklyActivityRow>,
}

impl Cohort {
    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn event_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.event_count() as f64 / self.records.len() as f64
        }
    }

    /// Restricts the cohort to the given enrollment ids, keeping their activity.
    pub fn subset(&self, ids: &[String]) -> Cohort {
        let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        Cohort {
            records: self
                .records
                .iter()
                .filter(|r| wanted.contains(r.enrollment_id.as_str()))
                .cloned()
                .collect(),
            activity: self
                .activity
                .iter()
                .filter(|a| wanted.contains(a.enrollment_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}
