//! Enrollment-level stratified train/test split and its leakage and
//! context-overlap audit.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EnrollmentRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    /// Number of event-time buckets for event enrollments.
    pub time_buckets: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.30,
            seed: 0,
            time_buckets: 4,
        }
    }
}

/// Train and test enrollment ids, each in record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Stratum per record: 0 for censored, `1..=buckets` for event-time buckets.
pub fn strata(records: &[EnrollmentRecord], buckets: usize) -> Vec<usize> {
    let mut event_times: Vec<u32> = records.iter().filter(|r| r.event).map(|r| r.observed_time_weeks).collect();
    event_times.sort_unstable();
    let edges: Vec<f64> = (1..buckets)
        .map(|q| quantile(&event_times, q as f64 / buckets as f64))
        .collect();
    records
        .iter()
        .map(|r| {
            if !r.event {
                0
            } else {
                let t = f64::from(r.observed_time_weeks);
                1 + edges.iter().filter(|&&e| t > e).count()
            }
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[u32], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    f64::from(sorted[lo]) * (1.0 - w) + f64::from(sorted[hi]) * w
}

/// Largest-remainder allocation of `total` across groups proportional to
/// `sizes`; groups marked ineligible receive nothing.
fn allocate(sizes: &[usize], eligible: &[bool], fraction: f64, total: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut rem: Vec<(f64, usize)> = Vec::new();
    for (s, (&n, &ok)) in sizes.iter().zip(eligible).enumerate() {
        if !ok {
            quota.push(0);
            continue;
        }
        let ideal = fraction * n as f64;
        let base = (ideal.floor() as usize).min(n);
        quota.push(base);
        rem.push((ideal - base as f64, s));
    }
    rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut assigned: usize = quota.iter().sum();
    let mut k = 0;
    while assigned < total && !rem.is_empty() {
        let s = rem[k % rem.len()].1;
        if quota[s] < sizes[s] {
            quota[s] += 1;
            assigned += 1;
        }
        k += 1;
        if k > 4 * sizes.len() * (total + 1) {
            break;
        }
    }
    quota
}

/// Deterministic stratified split; strata are event status crossed with
/// event-time buckets (quantiles of event times over the whole cohort).
pub fn stratified_split(records: &[EnrollmentRecord], spec: &SplitSpec) -> Result<Split> {
    if records.is_empty() {
        return Err(Error::Empty("no records to split".into()));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {} outside (0, 1)", spec.test_fraction)));
    }
    let labels = strata(records, spec.time_buckets.max(1));
    let n_strata = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, &s) in labels.iter().enumerate() {
        members[s].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let eligible: Vec<bool> = sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            if n == 1 {
                warn!("stratum {s} has a single enrollment; assigning it to train");
            }
            n > 1
        })
        .collect();
    let total = (spec.test_fraction * records.len() as f64 - 1e-9).ceil() as usize;
    let quota = allocate(&sizes, &eligible, spec.test_fraction, total);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_test = vec![false; records.len()];
    for (s, idx) in members.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(quota[s]) {
            is_test[i] = true;
        }
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (r, t) in records.iter().zip(is_test) {
        if t {
            split.test.push(r.enrollment_id.clone());
        } else {
            split.train.push(r.enrollment_id.clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub n_total: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub event_rate_total: f64,
    pub event_rate_train: f64,
    pub event_rate_test: f64,
    pub identity_leakage: bool,
    pub shared_modules: usize,
    pub total_modules: usize,
    pub shared_presentations: usize,
    pub total_presentations: usize,
    pub shared_module_presentations: usize,
    pub total_module_presentations: usize,
}

fn rate(records: &[&EnrollmentRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.event).count() as f64 / records.len() as f64
    }
}

fn shared<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> (usize, usize) {
    (a.intersection(b).count(), a.union(b).count())
}

/// Leakage and context-overlap audit of a partition. Overlapping ids are
/// reported, not rejected.
pub fn audit_split(records: &[EnrollmentRecord], train: &[String], test: &[String]) -> SplitAudit {
    let train_ids: HashSet<&str> = train.iter().map(String::as_str).collect();
    let test_ids: HashSet<&str> = test.iter().map(String::as_str).collect();
    let leakage = train_ids.intersection(&test_ids).next().is_some();
    let pick = |ids: &HashSet<&str>| -> Vec<&EnrollmentRecord> {
        records.iter().filter(|r| ids.contains(r.enrollment_id.as_str())).collect()
    };
    let tr = pick(&train_ids);
    let te = pick(&test_ids);
    let modules = |rs: &[&EnrollmentRecord]| rs.iter().map(|r| r.module_id.clone()).collect::<BTreeSet<_>>();
    let presentations =
        |rs: &[&EnrollmentRecord]| rs.iter().map(|r| r.presentation_id.clone()).collect::<BTreeSet<_>>();
    let combos = |rs: &[&EnrollmentRecord]| {
        rs.iter()
            .map(|r| (r.module_id.clone(), r.presentation_id.clone()))
            .collect::<BTreeSet<_>>()
    };
    let (sm, tm) = shared(&modules(&tr), &modules(&te));
    let (sp, tp) = shared(&presentations(&tr), &presentations(&te));
    let (sc, tc) = shared(&combos(&tr), &combos(&te));
    let all: Vec<&EnrollmentRecord> = records.iter().collect();
    SplitAudit {
        n_total: records.len(),
        n_train: train.len(),
        n_test: test.len(),
        event_rate_total: rate(&all),
        event_rate_train: rate(&tr),
        event_rate_test: rate(&te),
        identity_leakage: leakage,
        shared_modules: sm,
        total_modules: tm,
        shared_presentations: sp,
        total_presentations: tp,
        shared_module_presentations: sc,
        total_module_presentations: tc,
    }
}

impl SplitAudit {
    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28} {:>10} {:>10}", "Partition", "Enrollments", "Event rate");
        let _ = writeln!(s, "{:<28} {:>10} {:>10.4}", "Train", self.n_train, self.event_rate_train);
        let _ = writeln!(s, "{:<28} {:>10} {:>10.4}", "Test", self.n_test, self.event_rate_test);
        let _ = writeln!(s, "{:<28} {:>10} {:>10.4}", "Total", self.n_total, self.event_rate_total);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28} {:>10}", "Check", "Result");
        let _ = writeln!(
            s,
            "{:<28} {:>10}",
            "Enrollment identity leakage",
            if self.identity_leakage { "yes" } else { "no" }
        );
        let _ = writeln!(s, "{:<28} {:>10}", "Shared modules", format!("{}/{}", self.shared_modules, self.total_modules));
        let _ = writeln!(
            s,
            "{:<28} {:>10}",
            "Shared presentations",
            format!("{}/{}", self.shared_presentations, self.total_presentations)
        );
        let _ = writeln!(
            s,
            "{:<28} {:>10}",
            "Shared module-presentations",
            format!("{}/{}", self.shared_module_presentations, self.total_module_presentations)
        );
        s
    }
}
