use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{EnrollmentRecord, WeeklyActivityRow};
use crate::error::Result;

/// One enrollment-week of the person-period representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelRow {
    /// Index into [`PersonPeriodPanel::enrollment_ids`].
    pub enrollment: usize,
    pub week: u32,
    pub total_clicks_week: u64,
    pub n_vle_rows_week: u64,
    pub n_distinct_sites_week: u64,
    pub active_this_week: bool,
    pub cum_clicks_until_t: u64,
    pub recency: u32,
    pub streak: u32,
    /// 1 on the event week of an event enrollment.
    pub label: bool,
    /// False for rows past the observed window (evaluation extrapolation).
    pub observed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonPeriodPanel {
    pub enrollment_ids: Vec<String>,
    pub rows: Vec<PanelRow>,
    /// Activity rows after an enrollment's observed window, discarded.
    pub dropped_activity: usize,
}

impl PersonPeriodPanel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.rows.iter().filter(|r| r.label).count()
    }
}

/// Expands each enrollment into weeks `0..=observed_time_weeks`.
pub fn expand_person_period(
    records: &[EnrollmentRecord],
    activity: &[WeeklyActivityRow],
) -> Result<PersonPeriodPanel> {
    build(records, activity, |r| r.observed_time_weeks)
}

/// Expands every enrollment over weeks `0..=through_week` for prediction.
///
/// Weeks inside the observed window carry the real activity; later weeks
/// continue as inactive (zero activity, frozen cumulative clicks, growing
/// recency, zero streak) so that survivors stay evaluable on the full grid.
/// Activity after the observed window is still discarded.
pub fn expand_for_evaluation(
    records: &[EnrollmentRecord],
    activity: &[WeeklyActivityRow],
    through_week: u32,
) -> Result<PersonPeriodPanel> {
    build(records, activity, |_| through_week)
}

fn build(
    records: &[EnrollmentRecord],
    activity: &[WeeklyActivityRow],
    last_week: impl Fn(&EnrollmentRecord) -> u32,
) -> Result<PersonPeriodPanel> {
    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.enrollment_id.as_str(), i))
        .collect();
    let mut by_enrollment: Vec<BTreeMap<u32, &WeeklyActivityRow>> = vec![BTreeMap::new(); records.len()];
    let mut dropped = 0;
    for a in activity {
        let Some(&i) = index.get(a.enrollment_id.as_str()) else {
            continue;
        };
        if a.week > records[i].observed_time_weeks {
            dropped += 1;
            continue;
        }
        by_enrollment[i].insert(a.week, a);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} activity rows after the observed window");
    }

    let total: usize = records.iter().map(|r| last_week(r) as usize + 1).sum();
    let mut rows = Vec::with_capacity(total);
    for (i, rec) in records.iter().enumerate() {
        let weeks = &by_enrollment[i];
        let mut cum = 0u64;
        let mut last_active: Option<u32> = None;
        let mut streak = 0u32;
        for t in 0..=last_week(rec) {
            let observed = t <= rec.observed_time_weeks;
            let act = if observed { weeks.get(&t).copied() } else { None };
            let (clicks, n_rows, sites) = act
                .map(|a| (a.total_clicks_week, a.n_vle_rows_week, a.n_distinct_sites_week))
                .unwrap_or((0, 0, 0));
            let active = n_rows > 0;
            cum += clicks;
            let recency = if active {
                0
            } else {
                match last_active {
                    Some(l) => t - l,
                    None => t + 1,
                }
            };
            if active {
                streak += 1;
                last_active = Some(t);
            } else {
                streak = 0;
            }
            rows.push(PanelRow {
                enrollment: i,
                week: t,
                total_clicks_week: clicks,
                n_vle_rows_week: n_rows,
                n_distinct_sites_week: sites,
                active_this_week: active,
                cum_clicks_until_t: cum,
                recency,
                streak,
                label: rec.event && t == rec.observed_time_weeks,
                observed,
            });
        }
    }
    Ok(PersonPeriodPanel {
        enrollment_ids: records.iter().map(|r| r.enrollment_id.clone()).collect(),
        rows,
        dropped_activity: dropped,
    })
}
