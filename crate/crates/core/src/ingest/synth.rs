//! Synthetic cohorts with known hazards, for oracle comparisons.
//!
//! [`synth_generate`] emits the same tables as real ingestion, so a synthetic
//! run exercises the full pipeline. The continuous-time generators below feed
//! the estimator-recovery and audit-calibration checks directly.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Cohort, CovariateValue, EnrollmentRecord, WeeklyActivityRow};
use crate::error::{Error, Result};
use crate::scalar::sigmoid;

const REGIONS: [&str; 13] = [
    "East Anglian Region",
    "East Midlands Region",
    "Ireland",
    "London Region",
    "North Region",
    "North Western Region",
    "Scotland",
    "South East Region",
    "South Region",
    "South West Region",
    "Wales",
    "West Midlands Region",
    "Yorkshire Region",
];
const EDUCATION: [&str; 5] = [
    "A Level or Equivalent",
    "HE Qualification",
    "Lower Than A Level",
    "No Formal quals",
    "Post Graduate Qualification",
];
const IMD: [&str; 10] = [
    "0-10%", "10-20%", "20-30%", "30-40%", "40-50%", "50-60%", "60-70%", "70-80%", "80-90%", "90-100%",
];
const AGE: [&str; 3] = ["0-35", "35-55", "55<="];
const MODULES: [&str; 7] = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF", "GGG"];
const PRESENTATIONS: [&str; 4] = ["2013B", "2013J", "2014B", "2014J"];
const CREDITS: [f64; 6] = [30.0, 60.0, 90.0, 120.0, 180.0, 240.0];

/// Ground-truth weekly hazard of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HazardSpec {
    Constant { hazard: f64 },
    /// One hazard per week; the last value extends past the end of the list.
    Weekly { hazards: Vec<f64> },
    Logistic(LogisticHazard),
}

/// `h_i(t) = sigmoid(intercept + week*t + inactive*(1-active_t) + recency*min(recency_t, 8)
///  + log_clicks*ln(1+clicks_t) + prev_attempts*attempts + credits*(credits-60)/60 + disability*[Y])`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHazard {
    pub intercept: f64,
    pub week: f64,
    pub inactive: f64,
    pub recency: f64,
    pub log_clicks: f64,
    pub prev_attempts: f64,
    pub credits: f64,
    pub disability: f64,
}

impl Default for LogisticHazard {
    fn default() -> Self {
        Self {
            intercept: -5.8,
            week: 0.0,
            inactive: 1.3,
            recency: 0.18,
            log_clicks: -0.15,
            prev_attempts: 0.35,
            credits: 0.25,
            disability: 0.2,
        }
    }
}

impl LogisticHazard {
    /// A hazard that depends on weekly activity only.
    pub fn temporal_only() -> Self {
        Self {
            prev_attempts: 0.0,
            credits: 0.0,
            disability: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_enrollments: usize,
    /// Last observable week; survivors are administratively censored here.
    pub max_week: u32,
    pub hazard: HazardSpec,
    /// Weekly probability of random censoring among those still at risk.
    pub censoring_hazard: f64,
    pub n_modules: usize,
    pub n_presentations: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_enrollments: 5_000,
            max_week: 38,
            hazard: HazardSpec::Logistic(LogisticHazard::default()),
            censoring_hazard: 0.005,
            n_modules: 7,
            n_presentations: 4,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let check = |h: f64, what: &str| {
            if (0.0..=1.0).contains(&h) {
                Ok(())
            } else {
                Err(Error::Spec(format!("{what} {h} outside [0, 1]")))
            }
        };
        if self.n_enrollments == 0 {
            return Err(Error::Spec("cohort size must be positive".into()));
        }
        if !(1..=MODULES.len()).contains(&self.n_modules)
            || !(1..=PRESENTATIONS.len()).contains(&self.n_presentations)
        {
            return Err(Error::Spec("module/presentation counts out of range".into()));
        }
        check(self.censoring_hazard, "censoring hazard")?;
        match &self.hazard {
            HazardSpec::Constant { hazard } => check(*hazard, "hazard"),
            HazardSpec::Weekly { hazards } => {
                if hazards.is_empty() {
                    return Err(Error::Spec("weekly hazard list is empty".into()));
                }
                hazards.iter().try_for_each(|&h| check(h, "hazard"))
            }
            HazardSpec::Logistic(l) => {
                let all = [
                    l.intercept, l.week, l.inactive, l.recency, l.log_clicks, l.prev_attempts, l.credits,
                    l.disability,
                ];
                if all.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Spec("logistic hazard coefficients must be finite".into()))
                }
            }
        }
    }
}

/// A generated cohort together with each enrollment's true weekly hazards over
/// weeks `0..=max_week` (the activity path continues after the observed window
/// so the hazards are defined on the whole grid).
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    pub true_hazards: Vec<Vec<f64>>,
}

impl SyntheticCohort {
    /// True `S_i(t)` for `t = 0..=through`, extending the last hazard if needed.
    pub fn true_survival(&self, i: usize, through: u32) -> Vec<f64> {
        let h = &self.true_hazards[i];
        let mut s = 1.0;
        (0..=through as usize)
            .map(|t| {
                s *= 1.0 - h[t.min(h.len() - 1)];
                s
            })
            .collect()
    }
}

struct ActivityPath {
    clicks: Vec<u64>,
    rows: Vec<u64>,
    sites: Vec<u64>,
}

fn activity_path(rng: &mut ChaCha8Rng, weeks: usize) -> ActivityPath {
    let z: f64 = rng.sample(StandardNormal);
    let p = sigmoid(1.0 + 1.3 * z);
    let rate = (1.8 + 0.5 * z).exp();
    let clicks_dist = Poisson::new(rate).expect("positive rate");
    let mut prev = rng.random::<f64>() < p;
    let mut path = ActivityPath {
        clicks: Vec::with_capacity(weeks),
        rows: Vec::with_capacity(weeks),
        sites: Vec::with_capacity(weeks),
    };
    for _ in 0..weeks {
        let q = if prev { (p + 0.1).min(0.98) } else { (p - 0.2).max(0.02) };
        let active = rng.random::<f64>() < q;
        if active {
            let c = 1 + clicks_dist.sample(rng) as u64;
            let r = 1 + Binomial::new(c - 1, 0.4).expect("valid binomial").sample(rng);
            let s = 1 + Binomial::new(r - 1, 0.5).expect("valid binomial").sample(rng);
            path.clicks.push(c);
            path.rows.push(r);
            path.sites.push(s);
        } else {
            path.clicks.push(0);
            path.rows.push(0);
            path.sites.push(0);
        }
        prev = active;
    }
    path
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

fn statics(rng: &mut ChaCha8Rng) -> BTreeMap<String, CovariateValue> {
    let cat = |s: &str| CovariateValue::Categorical(s.to_string());
    let mut m = BTreeMap::new();
    m.insert("gender".into(), cat(if rng.random::<f64>() < 0.55 { "M" } else { "F" }));
    m.insert("region".into(), cat(pick(rng, &REGIONS)));
    m.insert("highest_education".into(), cat(pick(rng, &EDUCATION)));
    let imd = if rng.random::<f64>() < 0.04 {
        CovariateValue::Missing
    } else {
        cat(pick(rng, &IMD))
    };
    m.insert("imd_band".into(), imd);
    let u: f64 = rng.random();
    m.insert("age_band".into(), cat(if u < 0.7 { AGE[0] } else if u < 0.99 { AGE[1] } else { AGE[2] }));
    m.insert("disability".into(), cat(if rng.random::<f64>() < 0.1 { "Y" } else { "N" }));
    let attempts: f64 = Poisson::new(0.2).expect("positive rate").sample(rng);
    let attempts = attempts.min(6.0);
    m.insert("num_of_prev_attempts".into(), CovariateValue::Numeric(attempts));
    m.insert(
        "studied_credits".into(),
        CovariateValue::Numeric(CREDITS[rng.random_range(0..CREDITS.len())]),
    );
    m
}

fn weekly_hazard(spec: &HazardSpec, t: u32, path: &ActivityPath, recency: u32, statics: &BTreeMap<String, CovariateValue>) -> f64 {
    match spec {
        HazardSpec::Constant { hazard } => *hazard,
        HazardSpec::Weekly { hazards } => hazards[(t as usize).min(hazards.len() - 1)],
        HazardSpec::Logistic(l) => {
            let num = |k: &str| statics.get(k).and_then(CovariateValue::as_numeric).unwrap_or(0.0);
            let disabled = statics.get("disability").and_then(CovariateValue::as_category) == Some("Y");
            let t_idx = t as usize;
            let active = path.rows[t_idx] > 0;
            let eta = l.intercept
                + l.week * f64::from(t)
                + l.inactive * if active { 0.0 } else { 1.0 }
                + l.recency * f64::from(recency.min(8))
                + l.log_clicks * (path.clicks[t_idx] as f64).ln_1p()
                + l.prev_attempts * num("num_of_prev_attempts")
                + l.credits * (num("studied_credits") - 60.0) / 60.0
                + l.disability * if disabled { 1.0 } else { 0.0 };
            sigmoid(eta)
        }
    }
}

/// Generates a cohort whose weekly hazards are known exactly. Deterministic
/// under `seed`.
pub fn synth_generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weeks = spec.max_week as usize + 1;
    let width = (spec.n_enrollments.max(2) - 1).to_string().len();

    let mut records = Vec::with_capacity(spec.n_enrollments);
    let mut activity = Vec::new();
    let mut true_hazards = Vec::with_capacity(spec.n_enrollments);

    for i in 0..spec.n_enrollments {
        let id = format!("s{i:0width$}");
        let module = MODULES[rng.random_range(0..spec.n_modules)];
        let presentation = PRESENTATIONS[rng.random_range(0..spec.n_presentations)];
        let covs = statics(&mut rng);
        let path = activity_path(&mut rng, weeks);

        let mut hazards = Vec::with_capacity(weeks);
        let mut last_active: Option<u32> = None;
        for t in 0..weeks as u32 {
            let active = path.rows[t as usize] > 0;
            let recency = if active {
                0
            } else {
                last_active.map_or(t + 1, |l| t - l)
            };
            if active {
                last_active = Some(t);
            }
            hazards.push(weekly_hazard(&spec.hazard, t, &path, recency, &covs));
        }

        let mut outcome = (spec.max_week, false);
        for t in 0..=spec.max_week {
            if rng.random::<f64>() < hazards[t as usize] {
                outcome = (t, true);
                break;
            }
            if t < spec.max_week && rng.random::<f64>() < spec.censoring_hazard {
                outcome = (t, false);
                break;
            }
        }
        let (time, event) = outcome;

        for t in 0..=time as usize {
            if path.rows[t] > 0 {
                activity.push(WeeklyActivityRow::new(
                    id.clone(),
                    t as u32,
                    path.clicks[t],
                    path.rows[t],
                    path.sites[t],
                ));
            }
        }
        records.push(EnrollmentRecord {
            enrollment_id: id,
            module_id: module.to_string(),
            presentation_id: presentation.to_string(),
            observed_time_weeks: time,
            event,
            static_covariates: covs,
        });
        true_hazards.push(hazards);
    }
    Ok(SyntheticCohort {
        cohort: Cohort { records, activity },
        true_hazards,
    })
}

/// Right-censored continuous-time data with a dense covariate matrix.
#[derive(Debug, Clone)]
pub struct ContinuousCohort {
    pub x: Array2<f64>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

impl ContinuousCohort {
    pub fn event_count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
}

fn censor(rng: &mut ChaCha8Rng, latent: f64, censoring_rate: f64) -> (f64, bool) {
    if censoring_rate <= 0.0 {
        return (latent, true);
    }
    let c = Exp::new(censoring_rate).expect("positive rate").sample(rng);
    if latent <= c {
        (latent, true)
    } else {
        (c, false)
    }
}

/// Exponential-baseline proportional-hazards data with standard-normal
/// covariates: `lambda(t|x) = baseline_rate * exp(x beta)`.
pub fn proportional_hazards_cohort(
    n: usize,
    beta: &[f64],
    baseline_rate: f64,
    censoring_rate: f64,
    seed: u64,
) -> ContinuousCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, beta.len());
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for row in x.rows() {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let e: f64 = Exp::new(1.0).expect("unit rate").sample(&mut rng);
        let (t, d) = censor(&mut rng, e / (baseline_rate * eta.exp()), censoring_rate);
        times.push(t);
        events.push(d);
    }
    ContinuousCohort { x, times, events }
}

/// Intercept-only Weibull sample `S(t) = exp(-(t/scale)^shape)`.
pub fn weibull_cohort(n: usize, shape: f64, scale: f64, censoring_rate: f64, seed: u64) -> ContinuousCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>();
        let latent = scale * (-(1.0 - u).ln()).powf(1.0 / shape);
        let (t, d) = censor(&mut rng, latent, censoring_rate);
        times.push(t);
        events.push(d);
    }
    ContinuousCohort {
        x: Array2::zeros((n, 0)),
        times,
        events,
    }
}

/// Two covariates; the first has log-hazard effect `+effect` before the
/// baseline median time (ln 2) and `-effect` after it, the second is null.
pub fn sign_reversing_cohort(n: usize, effect: f64, censoring_rate: f64, seed: u64) -> ContinuousCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, 2);
    let switch = std::f64::consts::LN_2;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for row in x.rows() {
        let early = (effect * row[0]).exp();
        let late = (-effect * row[0]).exp();
        let e: f64 = Exp::new(1.0).expect("unit rate").sample(&mut rng);
        let latent = if e < early * switch {
            e / early
        } else {
            switch + (e - early * switch) / late
        };
        let (t, d) = censor(&mut rng, latent, censoring_rate);
        times.push(t);
        events.push(d);
    }
    ContinuousCohort { x, times, events }
}

/// Log-hazard `log_hazard(x_row)` on standard-normal covariates with exponential
/// baseline of rate 1; used for tree-split and interaction checks.
pub fn covariate_hazard_cohort(
    n: usize,
    p: usize,
    log_hazard: impl Fn(&[f64]) -> f64,
    censoring_rate: f64,
    seed: u64,
) -> ContinuousCohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, p);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for row in x.rows() {
        let r = row.to_vec();
        let e: f64 = Exp::new(1.0).expect("unit rate").sample(&mut rng);
        let (t, d) = censor(&mut rng, e / log_hazard(&r).exp(), censoring_rate);
        times.push(t);
        events.push(d);
    }
    ContinuousCohort { x, times, events }
}

/// Standard normal draws, exposed for permutation and noise fixtures.
pub fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(h: f64, n: usize, max_week: u32) -> SyntheticSpec {
        SyntheticSpec {
            n_enrollments: n,
            max_week,
            hazard: HazardSpec::Constant { hazard: h },
            censoring_hazard: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_hazard_censors_everyone_at_max_week() {
        let c = synth_generate(&constant(0.0, 100, 12), 1).unwrap().cohort;
        assert_eq!(c.event_count(), 0);
        assert!(c.records.iter().all(|r| r.observed_time_weeks == 12));
    }

    #[test]
    fn certain_hazard_events_at_week_zero() {
        let c = synth_generate(&constant(1.0, 50, 12), 1).unwrap().cohort;
        assert!(c.records.iter().all(|r| r.event && r.observed_time_weeks == 0));
    }

    #[test]
    fn out_of_range_hazard_is_rejected() {
        assert!(matches!(synth_generate(&constant(1.2, 10, 5), 0), Err(Error::Spec(_))));
        let spec = SyntheticSpec {
            hazard: HazardSpec::Weekly { hazards: vec![0.1, -0.1] },
            ..constant(0.1, 10, 5)
        };
        assert!(matches!(synth_generate(&spec, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn geometric_event_fractions() {
        let n = 10_000;
        let c = synth_generate(&constant(0.1, n, 200), 7).unwrap().cohort;
        for t in [0u32, 1, 4, 9, 19] {
            let p = 1.0 - 0.9f64.powi(t as i32 + 1);
            let frac = c
                .records
                .iter()
                .filter(|r| r.event && r.observed_time_weeks <= t)
                .count() as f64
                / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() < 3.0 * sigma, "t={t}: {frac} vs {p}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SyntheticSpec {
            n_enrollments: 200,
            ..Default::default()
        };
        let a = synth_generate(&spec, 42).unwrap();
        let b = synth_generate(&spec, 42).unwrap();
        assert_eq!(a.cohort, b.cohort);
        assert_eq!(a.true_hazards, b.true_hazards);
        let c = synth_generate(&spec, 43).unwrap();
        assert_ne!(a.cohort, c.cohort);
    }

    #[test]
    fn default_spec_has_plausible_event_rate() {
        let c = synth_generate(&SyntheticSpec::default(), 3).unwrap().cohort;
        let rate = c.event_rate();
        assert!((0.1..0.45).contains(&rate), "event rate {rate}");
    }
}
