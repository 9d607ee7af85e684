use log::warn;
use serde::{Deserialize, Serialize};

use super::CensoringEstimate;
use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::scalar::{logit, Scalar};

pub const DEFAULT_BINS: usize = 10;
/// Rates are clipped to `[LOGIT_CLAMP, 1 - LOGIT_CLAMP]` before the logit fit.
pub const LOGIT_CLAMP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub n: usize,
    pub mean_risk: f64,
    /// IPCW-weighted event fraction by the horizon.
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub horizon: u32,
    pub bins: Vec<CalibrationBin>,
    pub n_evaluable: usize,
    /// `sum_b n_b / n |mean_risk_b - observed_b|`.
    pub gap: f64,
    /// Weighted fit of `logit(observed)` on `logit(mean_risk)`; `None` when fewer
    /// than two distinct bin means exist.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Quantile edges of sorted values with duplicates removed.
fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges: Vec<f64> = (0..=bins)
        .map(|k| {
            let pos = k as f64 / bins as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        })
        .collect();
    edges.dedup();
    edges
}

/// Reliability summary at `horizon` with `bins` quantile bins on predicted risk.
pub fn calibration<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    horizon: u32,
    bins: usize,
    g: &CensoringEstimate<T>,
) -> Result<CalibrationReport> {
    if bins < 2 {
        return Err(Error::Invalid("calibration needs at least two bins".into()));
    }
    calibration_with_bins(pred, times, events, horizon, bins, g)
}

/// As [`calibration`], but also accepts a single bin.
pub fn calibration_with_bins<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    horizon: u32,
    bins: usize,
    g: &CensoringEstimate<T>,
) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(Error::Invalid("calibration needs at least one bin".into()));
    }
    if pred.n_subjects() != times.len() || times.len() != events.len() {
        return Err(Error::Invalid("predictions, times and events differ in length".into()));
    }
    if horizon > pred.grid_end() {
        return Err(Error::Invalid(format!("horizon {horizon} beyond prediction grid")));
    }
    let g_h = g.at(horizon).to_f64_lossy();
    // (risk, outcome, weight) for subjects whose status at the horizon is known
    let mut evaluable: Vec<(f64, f64, f64)> = Vec::new();
    for (i, (&t, &e)) in times.iter().zip(events).enumerate() {
        let risk = 1.0 - pred.survival[[i, horizon as usize]].to_f64_lossy();
        if t <= horizon && e {
            let w = g.before(t).to_f64_lossy();
            if w <= 0.0 {
                return Err(Error::ZeroDivisor { horizon });
            }
            evaluable.push((risk, 1.0, 1.0 / w));
        } else if t > horizon {
            if g_h <= 0.0 {
                return Err(Error::ZeroDivisor { horizon });
            }
            evaluable.push((risk, 0.0, 1.0 / g_h));
        }
    }
    if evaluable.is_empty() {
        return Err(Error::Empty(format!("no evaluable subjects at horizon {horizon}")));
    }
    let mut sorted: Vec<f64> = evaluable.iter().map(|e| e.0).collect();
    sorted.sort_by(f64::total_cmp);
    let edges = quantile_edges(&sorted, bins);
    let n_bins = edges.len().saturating_sub(1).max(1);
    if n_bins < bins {
        warn!("horizon {horizon}: {bins} calibration bins merged to {n_bins} (duplicate risk quantiles)");
    }
    let bin_of = |r: f64| -> usize {
        if edges.len() < 2 {
            return 0;
        }
        // right-closed intervals, first one also closed on the left
        let k = edges[1..].partition_point(|&e| e < r);
        k.min(n_bins - 1)
    };
    let mut count = vec![0usize; n_bins];
    let mut risk_sum = vec![0.0; n_bins];
    let mut wy = vec![0.0; n_bins];
    let mut w = vec![0.0; n_bins];
    for &(r, y, wt) in &evaluable {
        let b = bin_of(r);
        count[b] += 1;
        risk_sum[b] += r;
        wy[b] += wt * y;
        w[b] += wt;
    }
    let n = evaluable.len() as f64;
    let bins_out: Vec<CalibrationBin> = (0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| CalibrationBin {
            n: count[b],
            mean_risk: risk_sum[b] / count[b] as f64,
            observed: wy[b] / w[b],
        })
        .collect();
    let gap = bins_out
        .iter()
        .map(|b| b.n as f64 / n * (b.mean_risk - b.observed).abs())
        .sum();
    let (slope, intercept) = logit_fit(&bins_out);
    Ok(CalibrationReport {
        horizon,
        bins: bins_out,
        n_evaluable: evaluable.len(),
        gap,
        slope,
        intercept,
    })
}

fn logit_fit(bins: &[CalibrationBin]) -> (Option<f64>, Option<f64>) {
    let clamp = |v: f64| logit(v.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP));
    let pts: Vec<(f64, f64, f64)> = bins
        .iter()
        .map(|b| (clamp(b.mean_risk), clamp(b.observed), b.n as f64))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if pts.len() < 2 || sxx <= 1e-12 * sw {
        return (None, None);
    }
    let slope = sxy / sxx;
    (Some(slope), Some(my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::km_censoring;
    use crate::metrics::tests::pred;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_bin_identity() {
        let times = [1u32, 2, 5, 6];
        let events = [true, false, true, false];
        let p = pred(vec![vec![1.0, 0.9, 0.8, 0.7, 0.6]; 4]);
        let g = km_censoring(&times, &events, 4).unwrap();
        let r = calibration_with_bins(&p, &times, &events, 3, 1, &g).unwrap();
        assert_eq!(r.bins.len(), 1);
        // evaluable: event at 1 (w = 1), survivors 5, 6 (w = 1 / G(3)); subject censored at 2 drops out
        let g3 = g.at(3);
        let observed = 1.0 / (1.0 + 2.0 / g3);
        assert_abs_diff_eq!(r.bins[0].observed, observed, epsilon = 1e-15);
        assert_abs_diff_eq!(r.gap, (0.3 - observed).abs(), epsilon = 1e-15);
        assert_eq!(r.n_evaluable, 3);
        assert!(r.slope.is_none());
    }

    #[test]
    fn perfect_bins_have_zero_gap() {
        // each distinct risk group has exactly its predicted event fraction
        let mut rows = Vec::new();
        let mut times = Vec::new();
        for (k, risk) in [0.25, 0.5, 0.75].iter().enumerate() {
            for j in 0..4 {
                rows.push(vec![1.0, 1.0 - risk, 1.0 - risk]);
                let event = (j as f64) < risk * 4.0;
                times.push(if event { 1 } else { 5 + k as u32 });
            }
        }
        let events = vec![true; times.len()];
        let p = pred(rows);
        let g = km_censoring(&times, &events, 2).unwrap();
        let r = calibration(&p, &times, &events, 1, 3, &g).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_abs_diff_eq!(r.slope.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.intercept.unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(r.bins.iter().map(|b| b.n).sum::<usize>(), r.n_evaluable);
    }

    #[test]
    fn too_few_bins_is_error() {
        let p = pred(vec![vec![1.0, 0.5]; 2]);
        let g = km_censoring(&[1, 2], &[true, true], 1).unwrap();
        assert!(calibration(&p, &[1, 2], &[true, true], 1, 1, &g).is_err());
    }

    #[test]
    fn duplicate_risks_merge_bins() {
        let p = pred(vec![vec![1.0, 0.5]; 20]);
        let times: Vec<u32> = (0..20).map(|i| if i % 2 == 0 { 1 } else { 3 }).collect();
        let events = vec![true; 20];
        let g = km_censoring(&times, &events, 1).unwrap();
        let r = calibration(&p, &times, &events, 1, 10, &g).unwrap();
        assert_eq!(r.bins.len(), 1);
        assert_abs_diff_eq!(r.gap, 0.0, epsilon = 1e-15);
    }
}
