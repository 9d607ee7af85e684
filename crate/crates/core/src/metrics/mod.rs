//! Censoring-aware evaluation on the weekly grid: KM censoring survival, IPCW
//! Brier, integrated Brier, time-dependent concordance and horizon calibration.
//!
//! Times are integer weeks; predictions are [`SurvivalPrediction`] curves whose
//! column `t` is `S(t) = P(T > t)`.

mod calibration;
mod concordance;

pub use calibration::{calibration, calibration_with_bins, CalibrationBin, CalibrationReport, DEFAULT_BINS, LOGIT_CLAMP};
pub use concordance::{antolini_concordance, antolini_concordance_brute, harrell_c};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::scalar::Scalar;

pub const DEFAULT_HORIZONS: [u32; 3] = [10, 20, 30];
pub const DEFAULT_TAU_MAX: u32 = 30;

/// Kaplan-Meier estimate of the censoring survival `G(t) = P(C > t)` on
/// weeks `0..=grid_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringEstimate<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> CensoringEstimate<T> {
    /// `G(t)`; weeks past the grid reuse the last value.
    pub fn at(&self, t: u32) -> T {
        self.values[(t as usize).min(self.values.len() - 1)]
    }

    /// `G(t-)`: the value at the previous week, and 1 for week 0.
    pub fn before(&self, t: u32) -> T {
        if t == 0 {
            T::one()
        } else {
            self.at(t - 1)
        }
    }
}

/// Product-limit estimate with censorings as the events; subjects with
/// `T >= s` are at risk at `s`.
pub fn km_censoring<T: Scalar>(times: &[u32], events: &[bool], grid_end: u32) -> Result<CensoringEstimate<T>> {
    if times.is_empty() {
        return Err(Error::Empty("no subjects for the censoring estimate".into()));
    }
    if times.len() != events.len() {
        return Err(Error::Invalid("times and events differ in length".into()));
    }
    let width = grid_end as usize + 1;
    let max_t = *times.iter().max().expect("non-empty") as usize;
    let span = width.max(max_t + 1);
    let mut ended = vec![0usize; span + 1];
    let mut censored = vec![0usize; span + 1];
    for (&t, &e) in times.iter().zip(events) {
        ended[t as usize] += 1;
        if !e {
            censored[t as usize] += 1;
        }
    }
    let mut at_risk = times.len();
    let mut g = T::one();
    let mut values = Vec::with_capacity(width);
    for s in 0..width {
        if at_risk > 0 && censored[s] > 0 {
            g *= T::one() - T::from_usize_lossy(censored[s]) / T::from_usize_lossy(at_risk);
        }
        values.push(g);
        at_risk -= ended[s];
    }
    Ok(CensoringEstimate { values })
}

fn check_inputs<T: Scalar>(pred: &SurvivalPrediction<T>, times: &[u32], events: &[bool], horizon: u32) -> Result<()> {
    if pred.n_subjects() != times.len() || times.len() != events.len() {
        return Err(Error::Invalid("predictions, times and events differ in length".into()));
    }
    if times.is_empty() {
        return Err(Error::Empty("no subjects to evaluate".into()));
    }
    if horizon > pred.grid_end() {
        return Err(Error::Invalid(format!(
            "horizon {horizon} beyond prediction grid end {}",
            pred.grid_end()
        )));
    }
    Ok(())
}

/// IPCW Brier score at `horizon`.
pub fn brier_ipcw<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    horizon: u32,
    g: &CensoringEstimate<T>,
) -> Result<T> {
    check_inputs(pred, times, events, horizon)?;
    let g_h = g.at(horizon);
    let mut total = T::zero();
    for (i, (&t, &e)) in times.iter().zip(events).enumerate() {
        let s = pred.survival[[i, horizon as usize]];
        if t <= horizon && e {
            let w = g.before(t);
            if w <= T::zero() {
                return Err(Error::ZeroDivisor { horizon });
            }
            total += s * s / w;
        } else if t > horizon {
            if g_h <= T::zero() {
                return Err(Error::ZeroDivisor { horizon });
            }
            let r = T::one() - s;
            total += r * r / g_h;
        }
    }
    Ok(total / T::from_usize_lossy(times.len()))
}

/// Trapezoid integral of `values` (one per week from 0) over `[0, tau]`, divided by `tau`.
pub fn trapezoid_mean<T: Scalar>(values: &[T], tau: u32) -> T {
    let half = T::lit(0.5);
    let area: T = (0..tau as usize).map(|u| (values[u] + values[u + 1]) * half).sum();
    area / T::from_u32(tau).expect("tau")
}

/// Brier scores at every week `0..=tau`.
pub fn brier_curve<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    g: &CensoringEstimate<T>,
    tau: u32,
) -> Result<Vec<T>> {
    (0..=tau).map(|u| brier_ipcw(pred, times, events, u, g)).collect()
}

/// Integrated Brier score over `[0, tau]`, trapezoid rule on the weekly grid.
pub fn ibs<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    g: &CensoringEstimate<T>,
    tau: u32,
) -> Result<T> {
    if tau == 0 {
        return Err(Error::Invalid("tau_max must be positive".into()));
    }
    Ok(trapezoid_mean(&brier_curve(pred, times, events, g, tau)?, tau))
}

/// Metric bundle for one model on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ibs: f64,
    pub td_concordance: f64,
    /// `(horizon, IPCW Brier)` pairs.
    pub brier: Vec<(u32, f64)>,
    pub tau_max: u32,
    pub n_eval: usize,
}

/// IBS, Antolini concordance and Brier at `horizons`, with the censoring
/// estimate fitted on the evaluation set itself.
pub fn evaluate<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    horizons: &[u32],
    tau: u32,
) -> Result<MetricReport> {
    let g = km_censoring::<T>(times, events, pred.grid_end())?;
    let brier = horizons
        .iter()
        .map(|&h| Ok((h, brier_ipcw(pred, times, events, h, &g)?.to_f64_lossy())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        ibs: ibs(pred, times, events, &g, tau)?.to_f64_lossy(),
        td_concordance: antolini_concordance(pred, times, events)?.to_f64_lossy(),
        brier,
        tau_max: tau,
        n_eval: times.len(),
    })
}
