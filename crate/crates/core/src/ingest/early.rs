use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EnrollmentRecord, WeeklyActivityRow};
use crate::error::{Error, Result};

/// Window used for the canonical comparable-arm run.
pub const CANONICAL_WINDOW: u32 = 4;
/// Window lengths of the sensitivity grid.
pub const WINDOW_GRID: [u32; 5] = [2, 4, 6, 8, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyWindowSummary {
    pub enrollment_id: String,
    pub window_weeks: u32,
    pub clicks_first_w: u64,
    pub active_weeks_first_w: u32,
    /// Clicks per active week; 0 when the enrollment was never active.
    pub mean_clicks_first_w: f64,
}

/// Collapses weeks `0..w` of each enrollment's observed activity into scalars.
/// Output order follows `records`.
pub fn compute_early_window(
    records: &[EnrollmentRecord],
    activity: &[WeeklyActivityRow],
    w: u32,
) -> Result<Vec<EarlyWindowSummary>> {
    if w == 0 {
        return Err(Error::Invalid("early window must cover at least one week".into()));
    }
    let horizon: HashMap<&str, u32> = records
        .iter()
        .map(|r| (r.enrollment_id.as_str(), r.observed_time_weeks))
        .collect();
    let mut acc: HashMap<&str, (u64, u32)> = HashMap::new();
    for a in activity {
        let Some(&t_obs) = horizon.get(a.enrollment_id.as_str()) else {
            continue;
        };
        if a.week >= w || a.week > t_obs {
            continue;
        }
        let e = acc.entry(a.enrollment_id.as_str()).or_default();
        e.0 += a.total_clicks_week;
        if a.active_this_week {
            e.1 += 1;
        }
    }
    Ok(records
        .iter()
        .map(|r| {
            let (clicks, active) = acc.get(r.enrollment_id.as_str()).copied().unwrap_or((0, 0));
            EarlyWindowSummary {
                enrollment_id: r.enrollment_id.clone(),
                window_weeks: w,
                clicks_first_w: clicks,
                active_weeks_first_w: active,
                mean_clicks_first_w: if active == 0 { 0.0 } else { clicks as f64 / active as f64 },
            }
        })
        .collect())
}
